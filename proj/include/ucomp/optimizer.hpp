#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>

#include "ucomp/models.hpp"
#include "ucomp/tensor.hpp"

namespace ucomp {

enum class OptimizerKind : std::uint8_t { kAdam, kSgd };

std::string_view optimizer_name(OptimizerKind kind);
OptimizerKind parse_optimizer(std::string_view name);

/// Adaptive-moment state of one parameter.
struct Moments {
  Tensor m1;
  Tensor m2;
  std::uint64_t t = 0;
};

struct AdamSettings {
  double beta1 = 0.5;
  double beta2 = 0.9;
  double eps = 1e-8;
};

/// Per-parameter optimizer keyed by parameter id.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double lr, AdamSettings adam = {});

  /// One update of `param` with gradient `grad`.
  void apply(Parameter& param, const Tensor& grad);

  OptimizerKind kind() const noexcept { return kind_; }
  double lr() const noexcept { return lr_; }

  const std::map<std::string, Moments>& moments() const noexcept { return moments_; }
  void set_moments(std::map<std::string, Moments> moments) { moments_ = std::move(moments); }

 private:
  OptimizerKind kind_;
  double lr_;
  AdamSettings adam_;
  std::map<std::string, Moments> moments_;
};

}  // namespace ucomp
