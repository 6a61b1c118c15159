#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ucomp/rng.hpp"
#include "ucomp/tape.hpp"
#include "ucomp/tensor.hpp"

namespace ucomp {

/// Disjoint parameter partition: autoencoders, transfer networks, critics.
enum class ParamSet : std::uint8_t { kAutoEncoder, kTransfer, kCritic };

const char* param_set_name(ParamSet set);

struct Parameter {
  std::string id;
  Tensor value;
  ParamSet owner = ParamSet::kAutoEncoder;
};

/// Binds parameters to leaves of one tape. Parameters whose owner set is
/// trainable become gradient-carrying leaves; the rest enter as constants.
/// Each parameter is bound once, so gradients from every use accumulate.
class Binder {
 public:
  Binder(Tape& tape, std::vector<ParamSet> trainable);

  Var operator()(const Parameter& p);
  Tape& tape() const noexcept { return *tape_; }
  bool trainable(ParamSet set) const;

  /// Every parameter bound so far, in binding order.
  const std::vector<std::pair<const Parameter*, Var>>& bound() const noexcept { return order_; }
  /// Leaf for `p` if it has been bound.
  std::optional<Var> find(const Parameter& p) const;

 private:
  Tape* tape_;
  std::vector<ParamSet> trainable_;
  std::unordered_map<const Parameter*, Var> leaves_;
  std::vector<std::pair<const Parameter*, Var>> order_;
};

/// Stack of affine layers; hidden layers use `hidden`, the last uses `last`.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::string_view name, std::vector<std::size_t> widths, Activation hidden, Activation last,
      ParamSet owner, Rng& rng, double slope = 0.2);

  Var forward(Binder& bind, Var x) const;
  std::vector<AffineLayerRef> bind_layers(Binder& bind) const;

  std::size_t in_dim() const { return widths_.front(); }
  std::size_t out_dim() const { return widths_.back(); }

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;

 private:
  struct Layer {
    Parameter weight;
    Parameter bias;
    Activation activation;
  };
  std::vector<std::size_t> widths_;
  std::vector<Layer> layers_;
  double slope_ = 0.2;
};

/// Shared per-point MLP followed by a max-pool over the points of each cloud.
class Encoder {
 public:
  Encoder() = default;
  Encoder(std::string_view name, std::vector<std::size_t> widths, std::size_t points, ParamSet owner,
          Rng& rng);
  /// clouds: [batch·points,3] -> [batch,latent]; rejects other resolutions.
  Var encode(Binder& bind, Var clouds, std::size_t batch) const;
  /// Same map for clouds of any point count (the max-pool does not care).
  Var encode_any(Binder& bind, Var clouds, std::size_t batch) const;
  std::size_t latent_dim() const { return mlp_.out_dim(); }
  std::size_t points() const { return points_; }
  Mlp& mlp() { return mlp_; }
  const Mlp& mlp() const { return mlp_; }

 private:
  Mlp mlp_;
  std::size_t points_ = 0;
};

/// Fully-connected latent-to-cloud generator.
class Decoder {
 public:
  Decoder() = default;
  Decoder(std::string_view name, std::size_t latent, std::vector<std::size_t> hidden,
          std::size_t points, ParamSet owner, Rng& rng);
  /// latent: [batch,d] -> [batch·points,3]
  Var decode(Binder& bind, Var latent) const;
  std::size_t latent_dim() const { return mlp_.in_dim(); }
  std::size_t points() const { return points_; }
  Mlp& mlp() { return mlp_; }
  const Mlp& mlp() const { return mlp_; }

 private:
  Mlp mlp_;
  std::size_t points_ = 0;
};

struct TransferOutput {
  Var rep;   ///< complete-domain representation, [batch,d_r]
  Var code;  ///< missing-region code in (0,1), [batch,d_z]; invalid when d_z == 0
};

/// Incomplete → complete latent transfer. The code head is squashed by a
/// sigmoid so predicted codes share the (0,1) range of sampled ones.
class IncompleteToComplete {
 public:
  IncompleteToComplete() = default;
  IncompleteToComplete(std::string_view name, std::size_t d_x, std::size_t d_r, std::size_t d_z,
                       std::size_t width, Rng& rng);
  TransferOutput transfer(Binder& bind, Var x) const;
  std::size_t rep_dim() const { return d_r_; }
  std::size_t code_dim() const { return d_z_; }
  Mlp& mlp() { return mlp_; }
  const Mlp& mlp() const { return mlp_; }

 private:
  Mlp mlp_;
  std::size_t d_r_ = 0;
  std::size_t d_z_ = 0;
};

/// Complete (+ code) → incomplete latent transfer.
class CompleteToIncomplete {
 public:
  CompleteToIncomplete() = default;
  CompleteToIncomplete(std::string_view name, std::size_t d_r, std::size_t d_z, std::size_t d_x,
                       std::size_t width, Rng& rng);
  /// code may be invalid when d_z == 0.
  Var transfer(Binder& bind, Var rep, Var code) const;
  std::size_t rep_dim() const { return d_r_; }
  std::size_t code_dim() const { return d_z_; }
  Mlp& mlp() { return mlp_; }
  const Mlp& mlp() const { return mlp_; }

 private:
  Mlp mlp_;
  std::size_t d_r_ = 0;
  std::size_t d_z_ = 0;
};

/// Scalar critic over latent vectors: affine + leaky-relu hidden layers and
/// an affine output with no final nonlinearity.
class Critic {
 public:
  Critic() = default;
  Critic(std::string_view name, std::size_t in, std::size_t width, Rng& rng);
  /// v: [batch,in] -> [batch,1]
  Var score(Binder& bind, Var v) const;
  /// ∇ᵥ score at each row of v: [batch,in], differentiable w.r.t. the critic.
  Var input_gradient(Binder& bind, Var v) const;
  std::size_t in_dim() const { return mlp_.in_dim(); }
  Mlp& mlp() { return mlp_; }
  const Mlp& mlp() const { return mlp_; }

 private:
  Mlp mlp_;
};

struct ModelConfig {
  std::size_t d_r = 128;
  std::size_t d_z = 32;
  /// Incomplete latent size; 0 means d_r + d_z.
  std::size_t d_x = 0;
  std::size_t points = 2048;
  std::vector<std::size_t> encoder_widths{64, 128};
  std::vector<std::size_t> decoder_widths{256, 512};
  std::size_t transfer_width = 256;
  std::size_t critic_width = 256;
  /// When false the transfer networks carry no code slot.
  bool coding = true;
  /// When false no critics are allocated.
  bool critics = true;
  std::uint64_t seed = 0;

  std::size_t incomplete_dim() const { return d_x ? d_x : d_r + d_z; }
  std::size_t code_dim() const { return coding ? d_z : 0; }
};

/// The six networks and two critics, partitioned into Θ_AE, Θ_F and Θ_D.
class NetworkBundle {
 public:
  explicit NetworkBundle(ModelConfig config);

  const ModelConfig& config() const noexcept { return config_; }

  Encoder encoder_x;    ///< E_X: incomplete cloud -> d_x
  Decoder decoder_x;    ///< G_X: d_x -> incomplete cloud
  Encoder encoder_y;    ///< E_Y: complete cloud -> d_r
  Decoder decoder_y;    ///< G_Y: d_r -> complete cloud
  IncompleteToComplete transfer_x;  ///< F_X
  CompleteToIncomplete transfer_y;  ///< F_Y
  std::optional<Critic> critic_x;   ///< D_X over d_x
  std::optional<Critic> critic_y;   ///< D_Y over d_r

  /// Every parameter in a fixed order (AE, transfer, critics).
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  std::vector<Parameter*> parameters(ParamSet set);
  std::vector<const Parameter*> parameters(ParamSet set) const;
  Parameter* find(std::string_view id);

  /// Checks that owner sets match network roles and ids are unique.
  void validate_partition() const;

 private:
  ModelConfig config_;
};

/// d_z i.i.d. uniform [0,1] values per row: [batch,d_z].
Tensor sample_missing_codes(Rng& rng, std::size_t batch, std::size_t d_z);

/// FNV-1a checksum over the bytes of every parameter in `set`.
std::uint64_t parameter_checksum(const NetworkBundle& bundle, ParamSet set);

}  // namespace ucomp
