#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <set>

#include "support.hpp"
#include "ucomp/error.hpp"
#include "ucomp/models.hpp"

using namespace ucomp;
using ucomp::testing::random_cloud;
using ucomp::testing::random_tensor;
using ucomp::testing::tiny_config;

namespace {

Tensor encode_value(const Encoder& e, const Tensor& clouds, std::size_t batch, bool any = false) {
  Tape t;
  Binder b(t, {});
  return (any ? e.encode_any(b, t.constant(clouds), batch) : e.encode(b, t.constant(clouds), batch))
      .value();
}

}  // namespace

TEST_CASE("encoder is permutation invariant and ignores duplicated points") {
  NetworkBundle nets(tiny_config().model_config());
  Rng rng(1);
  const PointCloud p = random_cloud(16, rng);
  const Tensor base = encode_value(nets.encoder_y, p.tensor(), 1);

  Tensor shuffled = p.tensor();
  for (std::size_t i = 15; i > 0; --i) {
    const std::size_t j = rng.index(i + 1);
    for (int a = 0; a < 3; ++a) std::swap(shuffled[3 * i + a], shuffled[3 * j + a]);
  }
  CHECK(encode_value(nets.encoder_y, shuffled, 1) == base);

  Tensor doubled({32, 3});
  for (std::size_t i = 0; i < 48; ++i) doubled[i] = doubled[48 + i] = p.tensor()[i];
  CHECK(encode_value(nets.encoder_y, doubled, 1, true) == base);
  CHECK_THROWS_AS(encode_value(nets.encoder_y, doubled, 1), ShapeError);
}

TEST_CASE("taped and frozen encoder paths agree") {
  NetworkBundle nets(tiny_config().model_config());
  Rng rng(2);
  const Tensor clouds = random_tensor({2 * 16, 3}, rng, -0.5, 0.5);
  Tape t;
  Binder trainable(t, {ParamSet::kAutoEncoder});
  const Tensor taped = nets.encoder_x.encode(trainable, t.constant(clouds), 2).value();
  CHECK(encode_value(nets.encoder_x, clouds, 2) == taped);
}

TEST_CASE("shapes through the six networks") {
  const TrainConfig c = tiny_config();
  NetworkBundle nets(c.model_config());
  Rng rng(3);
  Tape t;
  Binder b(t, {});
  Var x = nets.encoder_x.encode(b, t.constant(random_tensor({2 * 16, 3}, rng)), 2);
  CHECK(x.shape() == Shape{2, c.d_r + c.d_z});
  Var y = nets.encoder_y.encode(b, t.constant(random_tensor({2 * 16, 3}, rng)), 2);
  CHECK(y.shape() == Shape{2, c.d_r});
  const TransferOutput xy = nets.transfer_x.transfer(b, x);
  CHECK(xy.rep.shape() == Shape{2, c.d_r});
  CHECK(xy.code.shape() == Shape{2, c.d_z});
  for (double v : xy.code.value().data()) CHECK((v > 0.0 && v < 1.0));
  Var yx = nets.transfer_y.transfer(b, y, t.constant(sample_missing_codes(rng, 2, c.d_z)));
  CHECK(yx.shape() == Shape{2, c.d_r + c.d_z});
  CHECK(nets.decoder_x.decode(b, yx).shape() == Shape{2 * 16, 3});
  CHECK(nets.decoder_y.decode(b, xy.rep).shape() == Shape{2 * 16, 3});
  CHECK(nets.critic_x->score(b, x).shape() == Shape{2, 1});
  CHECK(nets.critic_y->score(b, y).shape() == Shape{2, 1});
  CHECK_THROWS_AS(nets.decoder_y.decode(b, x), ShapeError);
}

TEST_CASE("different codes with the same representation give different predictions") {
  const TrainConfig c = tiny_config();
  NetworkBundle nets(c.model_config());
  Rng rng(4);
  Tape t;
  Binder b(t, {});
  Var rep = t.constant(random_tensor({1, c.d_r}, rng));
  const Tensor a = nets.transfer_y.transfer(b, rep, t.constant(sample_missing_codes(rng, 1, c.d_z))).value();
  const Tensor z = nets.transfer_y.transfer(b, rep, t.constant(sample_missing_codes(rng, 1, c.d_z))).value();
  double gap = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) gap += (a[i] - z[i]) * (a[i] - z[i]);
  CHECK(gap > 0.0);
}

TEST_CASE("gradients reach every transfer parameter through both directions") {
  const TrainConfig c = tiny_config();
  NetworkBundle nets(c.model_config());
  Rng rng(5);
  Tape t;
  Binder b(t, {ParamSet::kTransfer});
  Var x = t.constant(random_tensor({3, c.d_r + c.d_z}, rng));
  const TransferOutput xy = nets.transfer_x.transfer(b, x);
  Var back = nets.transfer_y.transfer(b, xy.rep, xy.code);
  Var loss = sum(square(back));
  CHECK(loss.value().all_finite());
  const Gradients g = t.backward(loss);
  for (const Parameter* p : nets.parameters(ParamSet::kTransfer)) {
    CAPTURE(p->id);
    const auto leaf = b.find(*p);
    REQUIRE(leaf);
    const Tensor grad = g.wrt(*leaf);
    CHECK(std::any_of(grad.data().begin(), grad.data().end(), [](double v) { return v != 0.0; }));
  }
}

TEST_CASE("critic input gradient matches finite differences") {
  const TrainConfig c = tiny_config();
  NetworkBundle nets(c.model_config());
  Rng rng(6);
  const Tensor v = random_tensor({3, c.d_r}, rng);
  Tape t;
  Binder b(t, {});
  const Tensor analytic = nets.critic_y->input_gradient(b, t.constant(v)).value();
  Tensor probe = v;
  double d2 = 0.0, n2 = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    auto total = [&] {
      Tape t2;
      Binder b2(t2, {});
      return sum(nets.critic_y->score(b2, t2.constant(probe))).value().item();
    };
    probe[i] = v[i] + 1e-5;
    const double up = total();
    probe[i] = v[i] - 1e-5;
    const double down = total();
    probe[i] = v[i];
    const double fd = (up - down) / 2e-5;
    d2 += (fd - analytic[i]) * (fd - analytic[i]);
    n2 += fd * fd;
  }
  CHECK(std::sqrt(d2 / n2) < 1e-4);
}

TEST_CASE("sampled codes are uniform on [0,1)") {
  Rng rng(7);
  const std::size_t rows = 100000, d = 4;
  const Tensor z = sample_missing_codes(rng, rows, d);
  for (std::size_t j = 0; j < d; ++j) {
    double s = 0.0;
    std::size_t outside = 0;
    for (std::size_t i = 0; i < rows; ++i) {
      const double v = z[i * d + j];
      outside += (v < 0.0 || v >= 1.0);
      s += v;
    }
    CHECK(outside == 0);
    CHECK(std::abs(s / rows - 0.5) <= 0.01);
  }
}

TEST_CASE("parameter sets partition the bundle") {
  TrainConfig c = tiny_config();
  NetworkBundle nets(c.model_config());
  nets.validate_partition();
  std::set<std::string> ids;
  std::size_t total = 0;
  for (ParamSet s : {ParamSet::kAutoEncoder, ParamSet::kTransfer, ParamSet::kCritic}) {
    for (const Parameter* p : nets.parameters(s)) {
      CHECK(p->owner == s);
      ids.insert(p->id);
      ++total;
    }
  }
  CHECK(ids.size() == total);
  CHECK(total == nets.parameters().size());

  NetworkBundle again(c.model_config());
  for (ParamSet s : {ParamSet::kAutoEncoder, ParamSet::kTransfer, ParamSet::kCritic})
    CHECK(parameter_checksum(nets, s) == parameter_checksum(again, s));
  c.seed = 1;
  NetworkBundle other(c.model_config());
  CHECK(parameter_checksum(nets, ParamSet::kAutoEncoder) != parameter_checksum(other, ParamSet::kAutoEncoder));

  ModelConfig no_gan = c.model_config();
  no_gan.critics = false;
  CHECK(NetworkBundle(no_gan).parameters(ParamSet::kCritic).empty());
}
