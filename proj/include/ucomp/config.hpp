#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "ucomp/geometry.hpp"
#include "ucomp/models.hpp"
#include "ucomp/objectives.hpp"
#include "ucomp/optimizer.hpp"

namespace ucomp {

/// Which parameter sets an F-sub-step loss term may also update.
enum class Strategy : std::uint8_t {
  kOriginal,          ///< every F-step term updates Θ_F only
  kGUpdatesAe,        ///< L_G also updates Θ_AE
  kPartialUpdatesAe,  ///< L_partial also updates Θ_AE
  kCycleUpdatesAe,    ///< L_cycle also updates Θ_AE
};

std::string_view strategy_name(Strategy s);
Strategy parse_strategy(std::string_view name);

std::string_view reduction_name(Reduction r);
Reduction parse_reduction(std::string_view name);
std::string_view gp_mode_name(GpMode m);
GpMode parse_gp_mode(std::string_view name);
std::string_view nn_method_name(NnMethod m);
NnMethod parse_nn_method(std::string_view name);

struct TrainConfig {
  double lambda_g = 1.0;
  double lambda_c = 0.01;
  double lambda_p = 1.0;
  double lambda_gp = 10.0;
  double lambda_code = 1.0;
  double lr = 1e-4;
  std::size_t n_critic = 3;
  std::size_t batch = 16;
  /// Total steps, pretraining included.
  std::size_t steps = 4000;
  /// Leading steps that update Θ_AE on L_AE only; 0 disables pretraining.
  std::size_t pretrain_steps = 1000;
  std::uint64_t seed = 0;
  Reduction reduction = Reduction::kMean;
  GpMode gp_mode = GpMode::kReal;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  NnMethod nn_method = NnMethod::kAuto;
  std::size_t d_r = 128;
  std::size_t d_z = 32;
  std::size_t points = 2048;
  std::vector<std::size_t> encoder_widths{64, 128};
  std::vector<std::size_t> decoder_widths{256, 512};
  std::size_t transfer_width = 256;
  std::size_t critic_width = 256;
  bool ablate_partial = false;
  bool ablate_gan = false;
  bool ablate_cycle = false;
  bool ablate_coding = false;
  Strategy strategy = Strategy::kOriginal;

  void validate() const;
  ModelConfig model_config() const;
  DistanceOptions distance() const { return {reduction, nn_method}; }

  /// Applies one `key = value` assignment; keys are the field names above.
  void set(std::string_view key, std::string_view value);
  /// Flat `key = value` text, one field per line, in declaration order.
  std::string to_text() const;
  /// Applies every assignment in `text` on top of the current values and
  /// returns the keys it set. Blank lines and '#' comments are ignored.
  std::vector<std::string> apply_text(std::string_view text, std::string_view origin = "<memory>");
  static TrainConfig from_text(std::string_view text, std::string_view origin = "<memory>");
  static TrainConfig from_file(const std::filesystem::path& path);
  /// Like apply_text for a file.
  std::vector<std::string> apply_file(const std::filesystem::path& path);
};

/// Enables the ablation named `partial`, `gan`, `cycle` or `coding`.
void apply_ablation(TrainConfig& config, std::string_view name);

/// Git-style blob hash: SHA-1 over "blob <len>\0" followed by the content.
std::string git_blob_sha1(std::string_view content);

}  // namespace ucomp
