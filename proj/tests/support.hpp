#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "ucomp/config.hpp"
#include "ucomp/geometry.hpp"
#include "ucomp/models.hpp"
#include "ucomp/rng.hpp"
#include "ucomp/tape.hpp"

namespace ucomp::testing {

/// Small enough for finite differences over every parameter.
inline TrainConfig tiny_config() {
  TrainConfig c;
  c.d_r = 8;
  c.d_z = 4;
  c.points = 16;
  c.batch = 2;
  c.encoder_widths = {8, 8};
  c.decoder_widths = {16};
  c.transfer_width = 16;
  c.critic_width = 16;
  c.steps = 20;
  c.pretrain_steps = 4;
  c.nn_method = NnMethod::kBruteForce;
  return c;
}

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

inline PointCloud random_cloud(std::size_t n, Rng& rng, double half = 0.5) {
  return PointCloud(random_tensor({n, 3}, rng, -half, half));
}

inline std::vector<PointCloud> random_clouds(std::size_t count, std::size_t n, Rng& rng) {
  std::vector<PointCloud> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(random_cloud(n, rng));
  return out;
}

struct FdResult {
  double worst = 0.0;   ///< largest per-tensor relative error
  std::string where;    ///< parameter id it occurred at
  std::size_t tensors = 0;
};

/// Compares reverse-mode gradients of `build` with central differences for
/// every parameter in `params`. `build` must rebuild the loss on the given
/// binder from the current parameter values. Error per tensor is
/// ‖g − g_fd‖ / max(‖g‖, ‖g_fd‖, floor).
inline FdResult finite_difference_check(const std::function<Var(Binder&)>& build,
                                        const std::vector<Parameter*>& params, ParamSet set,
                                        double step = 1e-5, double floor = 1e-8) {
  Tape tape;
  Binder bind(tape, {set});
  Var loss = build(bind);
  const Gradients grads = tape.backward(loss);

  auto value = [&] {
    Tape t;
    Binder b(t, {});
    return build(b).value().item();
  };

  FdResult r;
  for (Parameter* p : params) {
    const auto leaf = bind.find(*p);
    const Tensor analytic = leaf ? grads.wrt(*leaf) : Tensor(p->value.shape(), 0.0);
    double diff2 = 0.0, a2 = 0.0, f2 = 0.0;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double keep = p->value[i];
      p->value[i] = keep + step;
      const double up = value();
      p->value[i] = keep - step;
      const double down = value();
      p->value[i] = keep;
      const double fd = (up - down) / (2.0 * step);
      diff2 += (analytic[i] - fd) * (analytic[i] - fd);
      a2 += analytic[i] * analytic[i];
      f2 += fd * fd;
    }
    const double rel = std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(f2), floor});
    ++r.tensors;
    if (rel > r.worst) {
      r.worst = rel;
      r.where = p->id;
    }
  }
  return r;
}

/// Sets every critic weight to zero and the output bias to `c`.
inline void make_constant_critic(Critic& critic, double c) {
  for (Parameter* p : critic.mlp().parameters()) std::ranges::fill(p->value.data(), 0.0);
  std::ranges::fill(critic.mlp().parameters().back()->value.data(), c);
}

/// Hidden layers pass the input through unchanged (inputs must stay above
/// -shift so every leaky unit is in its identity branch); the output is w·v.
inline void make_linear_critic(Critic& critic, const std::vector<double>& w, double shift = 100.0) {
  const auto params = critic.mlp().parameters();
  const std::size_t in = critic.in_dim();
  for (std::size_t l = 0; l + 1 < params.size(); l += 2) {
    Tensor& weight = params[l]->value;
    Tensor& bias = params[l + 1]->value;
    std::ranges::fill(weight.data(), 0.0);
    std::ranges::fill(bias.data(), 0.0);
    const std::size_t out = weight.dim(1);
    const bool last = l + 2 == params.size();
    for (std::size_t i = 0; i < in; ++i) {
      if (last) {
        weight[i * out] = w[i];
      } else {
        weight[i * out + i] = 1.0;
      }
    }
    if (l == 0)
      for (std::size_t i = 0; i < in; ++i) bias[i] = shift;
  }
}

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("ucomp_" + tag + "_" + std::to_string(std::random_device{}()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace ucomp::testing
