#include "doctest.h"

#include <cmath>
#include <limits>

#include "support.hpp"
#include "ucomp/error.hpp"
#include "ucomp/kernels.hpp"
#include "ucomp/tape.hpp"

using namespace ucomp;
using ucomp::testing::random_tensor;

namespace {

// Reference products: one fma chain per output, increasing depth order.
std::vector<double> naive_gemm(const std::vector<double>& a, const std::vector<double>& b,
                               std::size_t m, std::size_t k, std::size_t n) {
  std::vector<double> c(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s = std::fma(a[i * k + p], b[p * n + j], s);
      c[i * n + j] = s;
    }
  return c;
}

std::vector<double> transposed(const std::vector<double>& a, std::size_t rows, std::size_t cols) {
  std::vector<double> t(a.size());
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) t[j * rows + i] = a[i * cols + j];
  return t;
}

std::vector<double> random_vec(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

/// Max relative error between reverse-mode and central-difference input
/// gradients of build(inputs).
double input_fd_error(const std::function<Var(Tape&, std::vector<Var>&)>& build,
                      std::vector<Tensor> inputs, double step = 1e-5) {
  Tape tape;
  std::vector<Var> vars;
  for (const Tensor& t : inputs) vars.push_back(tape.variable(t));
  const Gradients g = tape.backward(build(tape, vars));
  auto eval = [&] {
    Tape t;
    std::vector<Var> vs;
    for (const Tensor& x : inputs) vs.push_back(t.constant(x));
    return build(t, vs).value().item();
  };
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor analytic = g.wrt(vars[k]);
    double d2 = 0.0, n2 = 0.0;
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double keep = inputs[k][i];
      inputs[k][i] = keep + step;
      const double up = eval();
      inputs[k][i] = keep - step;
      const double down = eval();
      inputs[k][i] = keep;
      const double fd = (up - down) / (2 * step);
      d2 += (fd - analytic[i]) * (fd - analytic[i]);
      n2 += std::max(fd * fd, analytic[i] * analytic[i]);
    }
    worst = std::max(worst, std::sqrt(d2) / std::max(std::sqrt(n2), 1e-8));
  }
  return worst;
}

}  // namespace

TEST_CASE("tensor shapes are validated") {
  CHECK_THROWS_AS(Tensor({2, 0}), ShapeError);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>(3)), ShapeError);
  Tensor t({2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t.reshaped({3, 2}).shape() == Shape{3, 2});
  CHECK_THROWS_AS(t.reshaped({4, 2}), ShapeError);
  CHECK(t.all_finite());
  t[4] = std::numeric_limits<double>::quiet_NaN();
  CHECK_FALSE(t.all_finite());
  t[4] = -std::numeric_limits<double>::infinity();
  CHECK_FALSE(t.all_finite());
}

TEST_CASE("gemm kernels match the fma-chain oracle bit for bit") {
  Rng rng(11);
  const std::size_t sizes[][3] = {{1, 1, 1},  {3, 5, 7},   {6, 16, 16}, {7, 300, 19},
                                  {13, 3, 64}, {8, 64, 33}, {65, 9, 17}, {4, 513, 8}};
  for (const auto& s : sizes) {
    const std::size_t m = s[0], k = s[1], n = s[2];
    CAPTURE(m);
    CAPTURE(k);
    CAPTURE(n);
    const auto a = random_vec(m * k, rng), b = random_vec(k * n, rng), c0 = random_vec(m * n, rng);
    const auto want = naive_gemm(a, b, m, k, n);

    std::vector<double> c(m * n);
    kernels::gemm(a.data(), b.data(), c.data(), m, k, n);
    CHECK(c == want);

    const auto at = transposed(a, m, k);
    kernels::gemm_tn(at.data(), b.data(), c.data(), m, k, n);
    CHECK(c == want);

    const auto bt = transposed(b, k, n);
    kernels::gemm_nt(a.data(), bt.data(), c.data(), m, k, n);
    CHECK(c == want);

    auto acc = c0;
    kernels::gemm(a.data(), b.data(), acc.data(), m, k, n, true);
    bool same = true;
    for (std::size_t i = 0; i < m * n; ++i) same = same && acc[i] == c0[i] + want[i];
    CHECK(same);
  }
}

TEST_CASE("elementwise and reduction ops have correct gradients") {
  Rng rng(5);
  const Tensor a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng);
  const Tensor row = random_tensor({1, 4}, rng), w = random_tensor({4, 2}, rng);
  const Tensor pos = random_tensor({3, 4}, rng, 0.5, 2.0);
  const Tensor r = random_tensor({3, 4}, rng);

  auto weighted = [&](Tape& t, Var v) { return sum(mul(v, t.constant(r))); };
  CHECK(input_fd_error([&](Tape& t, auto& v) { return weighted(t, add(v[0], v[1])); }, {a, b}) < 1e-7);
  CHECK(input_fd_error([&](Tape& t, auto& v) { return weighted(t, sub(v[0], v[1])); }, {a, b}) < 1e-7);
  CHECK(input_fd_error([&](Tape& t, auto& v) { return weighted(t, mul(v[0], v[1])); }, {a, b}) < 1e-7);
  CHECK(input_fd_error([&](Tape& t, auto& v) { return weighted(t, add(v[0], v[1])); }, {a, row}) < 1e-7);
  CHECK(input_fd_error([&](Tape& t, auto& v) { return weighted(t, leaky_relu(v[0], 0.2)); }, {a}) < 1e-7);
  CHECK(input_fd_error([&](Tape& t, auto& v) { return weighted(t, sigmoid(v[0])); }, {a}) < 1e-7);
  CHECK(input_fd_error([&](Tape& t, auto& v) { return weighted(t, tanh(v[0])); }, {a}) < 1e-7);
  CHECK(input_fd_error([&](Tape& t, auto& v) { return weighted(t, sqrt(v[0])); }, {pos}) < 1e-7);
  CHECK(input_fd_error([&](Tape& t, auto& v) { return weighted(t, square(v[0])); }, {a}) < 1e-7);
  CHECK(input_fd_error([&](Tape& t, auto& v) { return weighted(t, scale(v[0], -3.0)); }, {a}) < 1e-7);
  CHECK(input_fd_error([](Tape&, auto& v) { return sum(square(matmul(v[0], v[1]))); }, {a, w}) < 1e-7);
  CHECK(input_fd_error([](Tape&, auto& v) { return sum(square(transpose(v[0]))); }, {a}) < 1e-7);
  CHECK(input_fd_error([](Tape&, auto& v) { return mean(square(sum_cols(v[0]))); }, {a}) < 1e-7);
  CHECK(input_fd_error([](Tape&, auto& v) { return sum(square(mean_rows(v[0]))); }, {a}) < 1e-7);
  CHECK(input_fd_error([](Tape&, auto& v) { return sum(l2_norm_rows(v[0])); }, {a}) < 1e-7);
  CHECK(input_fd_error([](Tape&, auto& v) { return sum(square(max_over_axis(v[0], 0))); }, {a}) < 1e-7);
  CHECK(input_fd_error([](Tape&, auto& v) { return sum(square(concat_cols(v[0], v[1]))); }, {a, b}) < 1e-7);
  CHECK(input_fd_error([](Tape&, auto& v) { return sum(square(slice_cols(v[0], 1, 3))); }, {a}) < 1e-7);
  CHECK(input_fd_error([](Tape&, auto& v) { return sum(square(broadcast_rows(v[0], 5))); }, {row}) < 1e-7);
  CHECK(input_fd_error([](Tape&, auto& v) { return sum(square(reshape(v[0], {2, 6}))); }, {a}) < 1e-7);
}

TEST_CASE("fused affine node equals the matmul/add/activation chain exactly") {
  Rng rng(8);
  const Tensor x = random_tensor({9, 5}, rng), w = random_tensor({5, 7}, rng),
               b = random_tensor({1, 7}, rng), r = random_tensor({9, 7}, rng);
  for (Activation act : {Activation::kIdentity, Activation::kLeakyRelu, Activation::kRelu,
                         Activation::kSigmoid, Activation::kTanh}) {
    Tape t1, t2;
    Var x1 = t1.variable(x), w1 = t1.variable(w), b1 = t1.variable(b);
    Var x2 = t2.variable(x), w2 = t2.variable(w), b2 = t2.variable(b);
    Var h1 = affine(x1, w1, b1, act, 0.2);
    Var z = add(matmul(x2, w2), b2);
    Var h2 = z;
    switch (act) {
      case Activation::kIdentity: break;
      case Activation::kLeakyRelu: h2 = leaky_relu(z, 0.2); break;
      case Activation::kRelu: h2 = relu(z); break;
      case Activation::kSigmoid: h2 = sigmoid(z); break;
      case Activation::kTanh: h2 = tanh(z); break;
    }
    CHECK(h1.value() == h2.value());
    const Gradients g1 = t1.backward(sum(mul(h1, t1.constant(r))));
    const Gradients g2 = t2.backward(sum(mul(h2, t2.constant(r))));
    CHECK(g1.wrt(x1) == g2.wrt(x2));
    CHECK(g1.wrt(w1) == g2.wrt(w2));
    CHECK(g1.wrt(b1) == g2.wrt(b2));
  }
}

TEST_CASE("unrecorded pooled stack evaluation matches the tape") {
  Rng rng(9);
  const Tensor x = random_tensor({3 * 300, 3}, rng);
  Tape tape;
  std::vector<AffineLayerRef> layers = {
      {tape.constant(random_tensor({3, 8}, rng)), tape.constant(random_tensor({1, 8}, rng)),
       Activation::kLeakyRelu},
      {tape.constant(random_tensor({8, 6}, rng)), tape.constant(random_tensor({1, 6}, rng)),
       Activation::kIdentity}};
  Var h = affine_stack_forward(layers, tape.constant(x));
  Var pooled = max_over_axis(reshape(h, {3, 300, 6}), 1);
  CHECK(affine_stack_group_max(layers, x, 300) == pooled.value());
}

TEST_CASE("input gradient of a leaky-relu critic matches finite differences") {
  Rng rng(3);
  const Tensor w0 = random_tensor({5, 7}, rng), b0 = random_tensor({1, 7}, rng);
  const Tensor w1 = random_tensor({7, 7}, rng), b1 = random_tensor({1, 7}, rng);
  const Tensor w2 = random_tensor({7, 1}, rng), b2 = random_tensor({1, 1}, rng);
  const Tensor v = random_tensor({4, 5}, rng);
  auto stack = [&](Tape& t) {
    return std::vector<AffineLayerRef>{
        {t.constant(w0), t.constant(b0), Activation::kLeakyRelu},
        {t.constant(w1), t.constant(b1), Activation::kLeakyRelu},
        {t.constant(w2), t.constant(b2), Activation::kIdentity}};
  };
  Tape tape;
  const auto layers = stack(tape);
  const Tensor analytic = input_gradient(layers, tape.constant(v)).value();

  Tensor fd(v.shape());
  Tensor probe = v;
  auto total = [&] {
    Tape t;
    return sum(affine_stack_forward(stack(t), t.constant(probe))).value().item();
  };
  for (std::size_t i = 0; i < v.size(); ++i) {
    probe[i] = v[i] + 1e-5;
    const double up = total();
    probe[i] = v[i] - 1e-5;
    const double down = total();
    probe[i] = v[i];
    fd[i] = (up - down) / 2e-5;
  }
  double d2 = 0.0, n2 = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    d2 += (fd[i] - analytic[i]) * (fd[i] - analytic[i]);
    n2 += fd[i] * fd[i];
  }
  CHECK(std::sqrt(d2 / n2) < 1e-4);
}

TEST_CASE("penalty path through input_gradient is differentiable in the weights") {
  Rng rng(4);
  const Tensor v = random_tensor({3, 4}, rng);
  const Tensor w0 = random_tensor({4, 6}, rng), b0 = random_tensor({1, 6}, rng);
  const Tensor w1 = random_tensor({6, 1}, rng), b1 = random_tensor({1, 1}, rng);
  const double err = input_fd_error(
      [&](Tape& t, auto& p) {
        std::vector<AffineLayerRef> layers = {{p[0], p[1], Activation::kLeakyRelu},
                                              {p[2], p[3], Activation::kIdentity}};
        Var g = input_gradient(layers, t.constant(v));
        return mean(square(add_scalar(l2_norm_rows(g), -1.0)));
      },
      {w0, b0, w1, b1});
  CHECK(err < 1e-6);
}

TEST_CASE("non-finite values are rejected when recorded") {
  Tape tape;
  Var a = tape.constant(Tensor({2, 2}, 1.0));
  CHECK_THROWS_AS(scale(a, std::numeric_limits<double>::infinity()), NumericError);
  CHECK_THROWS_AS(sqrt(tape.constant(Tensor({1}, -1.0))), NumericError);
  CHECK_THROWS_AS(matmul(a, tape.constant(Tensor({3, 2}))), ShapeError);
  CHECK_THROWS_AS(tape.backward(a), ShapeError);
}
