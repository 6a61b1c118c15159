#include "doctest.h"

#include <cmath>

#include "support.hpp"
#include "ucomp/error.hpp"
#include "ucomp/objectives.hpp"

using namespace ucomp;
using ucomp::testing::make_constant_critic;
using ucomp::testing::make_linear_critic;
using ucomp::testing::random_tensor;
using ucomp::testing::tiny_config;

namespace {

double code_oracle(const Tensor& a, const Tensor& b) {
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) total += (a[i] - b[i]) * (a[i] - b[i]);
  return total / static_cast<double>(a.dim(0));
}

std::vector<double> unit_vector(std::size_t n, Rng& rng) {
  std::vector<double> w(n);
  double norm = 0.0;
  for (double& v : w) {
    v = rng.uniform(-1.0, 1.0);
    norm += v * v;
  }
  for (double& v : w) v /= std::sqrt(norm);
  return w;
}

}  // namespace

TEST_CASE("code matching loss") {
  Tape t;
  CHECK(loss_code(t.constant(Tensor::from_rows({{1, 0}})), t.constant(Tensor::from_rows({{0, 0}})))
            .value()
            .item() == 1.0);
  Rng rng(31);
  const Tensor a = random_tensor({5, 4}, rng), b = random_tensor({5, 4}, rng);
  const double ab = loss_code(t.constant(a), t.constant(b)).value().item();
  CHECK(ab == doctest::Approx(code_oracle(a, b)).epsilon(1e-14));
  CHECK(ab == loss_code(t.constant(b), t.constant(a)).value().item());
  CHECK(loss_code(t.constant(a), t.constant(a)).value().item() == 0.0);
  CHECK_THROWS_AS(loss_code(t.constant(a), t.constant(Tensor({5, 3}))), ShapeError);
}

TEST_CASE("cycle and partial losses against scalar oracles") {
  Rng rng(32);
  const std::size_t batch = 2, n = 12;
  std::vector<Tensor> c;
  for (int i = 0; i < 4; ++i) c.push_back(random_tensor({batch * n, 3}, rng, -0.5, 0.5));
  Tape t;
  const auto v = [&](int i) { return t.constant(c[i]); };
  const auto s = [&](int i) { return split_clouds(c[i], batch); };

  double cycle = 0.0, partial = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    cycle += full_chamfer(s(0)[b], s(1)[b]) / batch + full_chamfer(s(2)[b], s(3)[b]) / batch;
    partial += partial_chamfer(s(0)[b], s(1)[b]) / batch + partial_chamfer(s(2)[b], s(3)[b]) / batch;
  }
  CHECK(loss_cycle(v(0), v(1), v(2), v(3), batch).value().item() == doctest::Approx(cycle).epsilon(1e-14));
  CHECK(loss_partial(v(0), v(1), v(2), v(3), batch).value().item() ==
        doctest::Approx(partial).epsilon(1e-14));
  CHECK(loss_cycle(v(0), v(0), v(2), v(2), batch).value().item() == 0.0);

  // A completion containing the partial and a prediction inside the complete cost nothing.
  Tensor sup({batch * 2 * n, 3});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < 3 * n; ++i) {
      sup[b * 6 * n + i] = c[0][b * 3 * n + i];
      sup[b * 6 * n + 3 * n + i] = c[1][b * 3 * n + i];
    }
  Tape t2;
  Var half = t2.constant(c[0]);
  CHECK(loss_partial(half, t2.constant(sup), half, half, batch)
            .value()
            .item() == 0.0);
}

TEST_CASE("partial loss points from incomplete to complete") {
  Rng rng(33);
  const Tensor small = random_tensor({4, 3}, rng, -0.1, 0.1);
  const Tensor big = random_tensor({40, 3}, rng, -0.5, 0.5);
  Tape t;
  const double forward = loss_partial(t.constant(small), t.constant(big), t.constant(small),
                                      t.constant(big), 1).value().item();
  const double swapped = loss_partial(t.constant(big), t.constant(small), t.constant(big),
                                      t.constant(small), 1).value().item();
  CHECK(forward != swapped);
}

TEST_CASE("analytic critic cases") {
  const TrainConfig c = tiny_config();
  NetworkBundle nets(c.model_config());
  Critic& critic = *nets.critic_y;
  Rng rng(34);
  const Tensor real = random_tensor({6, c.d_r}, rng), fake = random_tensor({6, c.d_r}, rng);

  make_constant_critic(critic, 0.7);
  for (GpMode mode : {GpMode::kReal, GpMode::kInterpolate}) {
    Tape t;
    Binder b(t, {});
    const CriticLoss l = critic_loss(b, critic, t.constant(real), t.constant(fake), 10.0, mode, &rng);
    CHECK(std::abs(l.total.value().item() - 10.0) <= 1e-12);
    CHECK(l.penalty.value().item() == 1.0);
  }

  const std::vector<double> w = unit_vector(c.d_r, rng);
  make_linear_critic(critic, w);
  Tape t;
  Binder b(t, {});
  const CriticLoss l = critic_loss(b, critic, t.constant(real), t.constant(fake), 10.0);
  CHECK(std::abs(l.penalty.value().item()) <= 1e-12);
  double expect = 0.0;
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < c.d_r; ++j) expect += w[j] * (real.at(i, j) - fake.at(i, j)) / 6.0;
  CHECK(std::abs(l.total.value().item() - expect) <= 1e-12);

  make_constant_critic(critic, 0.25);
  make_constant_critic(*nets.critic_x, -1.5);
  const Tensor to_x = random_tensor({6, c.d_r + c.d_z}, rng);
  Tape t2;
  Binder b2(t2, {});
  CHECK(generator_adv_loss(b2, *nets.critic_x, t2.constant(to_x), critic, t2.constant(real))
            .value()
            .item() == -1.25);
}

TEST_CASE("penalty gradient in the critic weights matches finite differences") {
  const TrainConfig c = tiny_config();
  NetworkBundle nets(c.model_config());
  Rng rng(35);
  const Tensor real = random_tensor({4, c.d_r}, rng), fake = random_tensor({4, c.d_r}, rng);
  for (GpMode mode : {GpMode::kReal, GpMode::kInterpolate}) {
    CAPTURE(gp_mode_name(mode));
    const Rng seed = rng;
    const auto r = testing::finite_difference_check(
        [&](Binder& b) {
          Rng local = seed;
          return critic_loss(b, *nets.critic_y, b.tape().constant(real), b.tape().constant(fake), 10.0,
                             mode, &local)
              .penalty;
        },
        nets.parameters(ParamSet::kCritic), ParamSet::kCritic);
    CAPTURE(r.where);
    CHECK(r.worst < 1e-4);
  }
}

TEST_CASE("one generator step lowers the adversarial loss under fixed linear critics") {
  const TrainConfig c = tiny_config();
  NetworkBundle nets(c.model_config());
  Rng rng(36);
  make_linear_critic(*nets.critic_x, unit_vector(c.d_r + c.d_z, rng));
  make_linear_critic(*nets.critic_y, unit_vector(c.d_r, rng));
  const Tensor x = random_tensor({4, c.d_r + c.d_z}, rng), y = random_tensor({4, c.d_r}, rng);
  const Tensor z = sample_missing_codes(rng, 4, c.d_z);

  auto evaluate = [&](Binder& b) {
    Tape& t = b.tape();
    const TransferOutput xy = nets.transfer_x.transfer(b, t.constant(x));
    Var yx = nets.transfer_y.transfer(b, t.constant(y), t.constant(z));
    return generator_adv_loss(b, *nets.critic_x, yx, *nets.critic_y, xy.rep);
  };
  Tape t;
  Binder b(t, {ParamSet::kTransfer});
  Var before = evaluate(b);
  const double start = before.value().item();
  const Gradients g = t.backward(before);
  for (Parameter* p : nets.parameters(ParamSet::kTransfer)) {
    const Tensor& grad = g.at(*b.find(*p));
    for (std::size_t i = 0; i < grad.size(); ++i) p->value[i] -= 1e-3 * grad[i];
  }
  Tape t2;
  Binder b2(t2, {});
  CHECK(evaluate(b2).value().item() < start);
}
