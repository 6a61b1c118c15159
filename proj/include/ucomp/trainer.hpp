#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ucomp/config.hpp"
#include "ucomp/geometry.hpp"
#include "ucomp/models.hpp"
#include "ucomp/optimizer.hpp"
#include "ucomp/rng.hpp"

namespace ucomp {

/// Unpaired training data: partial clouds and complete clouds drawn from
/// disjoint objects.
struct TrainingPools {
  std::vector<PointCloud> incomplete;
  std::vector<PointCloud> complete;
};

/// Loss values of one step; terms that were not computed stay empty.
struct LossReport {
  std::size_t step = 0;  ///< 1-based
  std::optional<double> ae, code, cycle, partial, d, g, gp_x, gp_y;
  double wall_ms = 0.0;
};

std::string metrics_header();
/// One CSV row; empty cells for missing terms, wall_ms forced to 0 when
/// `timing` is false so runs can be compared byte for byte.
std::string metrics_row(const LossReport& report, bool timing = true);

enum class SubStep : std::uint8_t { kAutoEncoder, kCritic, kTransfer };
const char* substep_name(SubStep s);

/// Called after every parameter update with the sub-step that made it.
using SubStepObserver = std::function<void(SubStep, const NetworkBundle&)>;

/// The weighted F-step objective and its components for one batch.
struct TransferTerms {
  Var total;
  std::optional<Var> g, partial, cycle, code;
};

/// Owns the networks, optimizer state and sampling stream of one run.
class Trainer {
 public:
  Trainer(TrainConfig config, TrainingPools pools);

  /// One pretraining or joint step.
  LossReport step();

  std::size_t steps_done() const noexcept { return step_; }
  bool pretraining() const noexcept { return step_ < config_.pretrain_steps; }

  const TrainConfig& config() const noexcept { return config_; }
  NetworkBundle& networks() noexcept { return nets_; }
  const NetworkBundle& networks() const noexcept { return nets_; }
  Optimizer& optimizer() noexcept { return optimizer_; }
  const Optimizer& optimizer() const noexcept { return optimizer_; }
  Rng& rng() noexcept { return rng_; }
  const Rng& rng() const noexcept { return rng_; }

  void set_observer(SubStepObserver observer) { observer_ = std::move(observer); }

  /// Overwrites step counter and sampling state (used by checkpoint loading).
  void restore(std::size_t step, Rng rng) {
    step_ = step;
    rng_ = std::move(rng);
  }

  /// Builds the F-step objective on `tape` for the given batch. Exposed for
  /// tests; `bind` decides which sets receive gradients.
  TransferTerms transfer_objective(Binder& bind, const Tensor& incomplete, const Tensor& complete,
                                   const Tensor* codes) const;

 private:
  struct Batch {
    Tensor incomplete;  ///< [batch·N,3]
    Tensor complete;    ///< [batch·N,3]
    Tensor codes;       ///< [batch,d_z], empty without coding
  };

  Batch sample_batch();
  void autoencoder_update(const Batch& b, LossReport& report);
  void critic_update(const Batch& b, LossReport& report);
  void transfer_update(const Batch& b, LossReport& report);
  void apply(Binder& bind, const Gradients& grads, ParamSet set, double weight = 1.0);
  void notify(SubStep s);

  TrainConfig config_;
  TrainingPools pools_;
  NetworkBundle nets_;
  Optimizer optimizer_;
  Rng rng_;
  std::size_t step_ = 0;
  SubStepObserver observer_;
};

}  // namespace ucomp
