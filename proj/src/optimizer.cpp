#include "ucomp/optimizer.hpp"

#include <cmath>

#include "ucomp/error.hpp"

namespace ucomp {

std::string_view optimizer_name(OptimizerKind kind) {
  return kind == OptimizerKind::kAdam ? "adam" : "sgd";
}

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "adam") return OptimizerKind::kAdam;
  if (name == "sgd") return OptimizerKind::kSgd;
  throw ValidationError("unknown optimizer '" + std::string(name) + "' (adam|sgd)");
}

Optimizer::Optimizer(OptimizerKind kind, double lr, AdamSettings adam)
    : kind_(kind), lr_(lr), adam_(adam) {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ValidationError("learning rate must be > 0");
}

void Optimizer::apply(Parameter& param, const Tensor& grad) {
  if (grad.shape() != param.value.shape()) {
    throw ShapeError("optimizer: gradient " + shape_str(grad.shape()) + " for parameter " + param.id +
                     " of shape " + shape_str(param.value.shape()));
  }
  double* p = param.value.raw();
  const double* g = grad.raw();
  const std::size_t n = grad.size();
  if (kind_ == OptimizerKind::kSgd) {
    for (std::size_t i = 0; i < n; ++i) p[i] -= lr_ * g[i];
    return;
  }
  Moments& m = moments_[param.id];
  if (m.t == 0) {
    m.m1 = Tensor(grad.shape(), 0.0);
    m.m2 = Tensor(grad.shape(), 0.0);
  }
  ++m.t;
  const double b1 = adam_.beta1, b2 = adam_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(m.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(m.t));
  // lr·m̂/(√v̂+ε) with the bias corrections folded into two scalars.
  const double step = lr_ / c1, root_c2 = 1.0 / std::sqrt(c2), eps = adam_.eps;
  double* m1 = m.m1.raw();
  double* m2 = m.m2.raw();
  for (std::size_t i = 0; i < n; ++i) {
    m1[i] = b1 * m1[i] + (1.0 - b1) * g[i];
    m2[i] = b2 * m2[i] + (1.0 - b2) * g[i] * g[i];
    p[i] -= step * m1[i] / (std::sqrt(m2[i]) * root_c2 + eps);
  }
}

}  // namespace ucomp
