#include "ucomp/tape.hpp"

#include <algorithm>
#include <cmath>

#include "ucomp/error.hpp"
#include "ucomp/kernels.hpp"

namespace ucomp {

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kMatmul: return "matmul";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kScale: return "scale";
    case OpKind::kAddScalar: return "add_scalar";
    case OpKind::kConcatCols: return "concat_cols";
    case OpKind::kSliceCols: return "slice_cols";
    case OpKind::kLeakyRelu: return "leaky_relu";
    case OpKind::kRelu: return "relu";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kTanh: return "tanh";
    case OpKind::kSquare: return "square";
    case OpKind::kSqrt: return "sqrt";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
    case OpKind::kMaxOverAxis: return "max_over_axis";
    case OpKind::kBroadcastRows: return "broadcast_rows";
    case OpKind::kL2NormRows: return "l2_norm_rows";
    case OpKind::kReshape: return "reshape";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kAffine: return "affine";
    case OpKind::kCustom: return "custom";
  }
  return "?";
}

const Tensor& Var::value() const { return tape_->value(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

const Tensor& Gradients::at(Var v) const {
  if (!reached(v)) throw ValidationError("gradient of node " + std::to_string(v.id()) + " was not reached");
  return *grads_[v.id()];
}

Tensor Gradients::wrt(Var v) const {
  if (reached(v)) return *grads_[v.id()];
  return Tensor(v.shape(), 0.0);
}

Var Tape::constant(Tensor value) {
  return record(OpKind::kLeaf, "constant", {}, std::move(value), nullptr);
}

Var Tape::variable(Tensor value) {
  Var v = record(OpKind::kLeaf, "variable", {}, std::move(value), nullptr);
  nodes_.back().requires_grad = true;
  return v;
}

Var Tape::record(OpKind kind, std::string_view name, std::vector<Var> inputs, Tensor value,
                 BackwardFn backward, std::vector<std::size_t> indices) {
  if (!value.all_finite()) {
    throw NumericError(std::string("op '") + std::string(name) + "' produced a non-finite value");
  }
  Node node;
  node.kind = kind;
  node.name = std::string(name);
  node.value = std::move(value);
  node.indices = std::move(indices);
  node.inputs.reserve(inputs.size());
  for (const Var& in : inputs) {
    if (&in.tape() != this) throw ShapeError("op '" + node.name + "' mixes nodes of different tapes");
    node.inputs.push_back(in.id());
    node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Gradients Tape::backward(Var loss) const {
  if (&loss.tape() != this) throw ShapeError("backward: loss belongs to another tape");
  if (loss.value().size() != 1) {
    throw ShapeError("backward: loss must be a single element, got shape " +
                     shape_str(loss.shape()));
  }
  Gradients out;
  out.tape_ = this;
  out.grads_.resize(loss.id() + 1);
  out.grads_[loss.id()] = Tensor(loss.shape(), 1.0);

  std::vector<Tensor*> slots;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    const Node& node = nodes_[i];
    if (!out.grads_[i] || !node.backward) continue;
    slots.assign(node.inputs.size(), nullptr);
    for (std::size_t j = 0; j < node.inputs.size(); ++j) {
      const std::size_t in = node.inputs[j];
      if (!nodes_[in].requires_grad) continue;
      if (!out.grads_[in]) out.grads_[in] = Tensor(nodes_[in].value.shape(), 0.0);
      slots[j] = &*out.grads_[in];
    }
    node.backward(*out.grads_[i], slots);
  }
  return out;
}

namespace {

enum class Broadcast { kSame, kRow, kScalar };

Broadcast broadcast_kind(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return Broadcast::kSame;
  if (b.size() == 1) return Broadcast::kScalar;
  if (a.rank() == 2 && b.size() == a.cols() && (b.rank() == 1 || b.dim(0) == 1)) {
    return Broadcast::kRow;
  }
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) + " and " +
                   shape_str(b.shape()));
}

/// Calls fn(i, j) for every lhs element i and its rhs element j, in
/// ascending i, without a per-element division.
template <typename Fn>
inline void for_each_pair(Broadcast bc, std::size_t size, std::size_t cols, Fn&& fn) {
  switch (bc) {
    case Broadcast::kSame:
      for (std::size_t i = 0; i < size; ++i) fn(i, i);
      break;
    case Broadcast::kRow:
      for (std::size_t r = 0; r < size; r += cols)
        for (std::size_t c = 0; c < cols; ++c) fn(r + c, c);
      break;
    case Broadcast::kScalar:
      for (std::size_t i = 0; i < size; ++i) fn(i, std::size_t{0});
      break;
  }
}

void require_rank2(const char* op, const Tensor& t) {
  if (t.rank() != 2) throw ShapeError(std::string(op) + ": expected rank-2 tensor, got " + shape_str(t.shape()));
}

template <typename F, typename D>
Var unary(OpKind kind, Var a, F f, D df) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  const double* xp = x.raw();
  double* yp = y.raw();
  for (std::size_t i = 0, n = x.size(); i < n; ++i) yp[i] = f(xp[i]);
  return a.tape().record(kind, op_name(kind), {a}, std::move(y),
                         [a, df](const Tensor& g, std::span<Tensor* const> gi) {
                           const double* xp = a.value().raw();
                           const double* gp = g.raw();
                           double* ga = gi[0]->raw();
                           for (std::size_t i = 0, n = g.size(); i < n; ++i) ga[i] += gp[i] * df(xp[i]);
                         });
}

}  // namespace

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank2("matmul", av);
  require_rank2("matmul", bv);
  if (av.dim(1) != bv.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(av.shape()) + " and " +
                     shape_str(bv.shape()));
  }
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor c({m, n});
  kernels::gemm(av.raw(), bv.raw(), c.raw(), m, k, n);
  return a.tape().record(
      OpKind::kMatmul, "matmul", {a, b}, std::move(c),
      [a, b, m, k, n](const Tensor& g, std::span<Tensor* const> gi) {
        if (gi[0]) {
          kernels::gemm_nt(g.raw(), b.value().raw(), gi[0]->raw(), m, n, k, true);
        }
        if (gi[1]) {
          kernels::gemm_tn(a.value().raw(), g.raw(), gi[1]->raw(), k, m, n, true);
        }
      });
}

Var transpose(Var a) {
  const Tensor& av = a.value();
  require_rank2("transpose", av);
  const std::size_t m = av.dim(0), n = av.dim(1);
  Tensor t({n, m});
  kernels::transpose(av.raw(), t.raw(), m, n);
  return a.tape().record(OpKind::kTranspose, "transpose", {a}, std::move(t),
                         [m, n](const Tensor& g, std::span<Tensor* const> gi) {
                           Tensor& ga = *gi[0];
                           for (std::size_t i = 0; i < m; ++i)
                             for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
                         });
}

namespace {

template <typename Combine, typename DA, typename DB>
Var binary(OpKind kind, Var a, Var b, Combine f, DA da, DB db) {
  const char* name = op_name(kind);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Broadcast bc = broadcast_kind(name, av, bv);
  const std::size_t cols = av.rank() == 2 ? av.cols() : av.size();
  Tensor c(av.shape());
  double* cp = c.raw();
  const double* ap = av.raw();
  const double* bp = bv.raw();
  for_each_pair(bc, av.size(), cols, [&](std::size_t i, std::size_t j) { cp[i] = f(ap[i], bp[j]); });
  return a.tape().record(kind, name, {a, b}, std::move(c),
                         [a, b, bc, cols, da, db](const Tensor& g, std::span<Tensor* const> gi) {
                           const double* ap = a.value().raw();
                           const double* bp = b.value().raw();
                           const double* gp = g.raw();
                           const std::size_t size = a.value().size();
                           if (gi[0]) {
                             double* ga = gi[0]->raw();
                             for_each_pair(bc, size, cols, [&](std::size_t i, std::size_t j) {
                               ga[i] += gp[i] * da(ap[i], bp[j]);
                             });
                           }
                           if (gi[1]) {
                             double* gb = gi[1]->raw();
                             for_each_pair(bc, size, cols, [&](std::size_t i, std::size_t j) {
                               gb[j] += gp[i] * db(ap[i], bp[j]);
                             });
                           }
                         });
}

}  // namespace

Var add(Var a, Var b) {
  return binary(
      OpKind::kAdd, a, b, [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
  return binary(
      OpKind::kSub, a, b, [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
  return binary(
      OpKind::kMul, a, b, [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Var scale(Var a, double s) {
  return unary(
      OpKind::kScale, a, [s](double x) { return s * x; }, [s](double) { return s; });
}

Var add_scalar(Var a, double s) {
  return unary(
      OpKind::kAddScalar, a, [s](double x) { return x + s; }, [](double) { return 1.0; });
}

Var concat_cols(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank2("concat_cols", av);
  require_rank2("concat_cols", bv);
  if (av.dim(0) != bv.dim(0)) {
    throw ShapeError("concat_cols: row mismatch " + shape_str(av.shape()) + " and " +
                     shape_str(bv.shape()));
  }
  const std::size_t m = av.dim(0), na = av.dim(1), nb = bv.dim(1);
  Tensor c({m, na + nb});
  for (std::size_t i = 0; i < m; ++i) {
    std::copy_n(av.raw() + i * na, na, c.raw() + i * (na + nb));
    std::copy_n(bv.raw() + i * nb, nb, c.raw() + i * (na + nb) + na);
  }
  return a.tape().record(OpKind::kConcatCols, "concat_cols", {a, b}, std::move(c),
                         [m, na, nb](const Tensor& g, std::span<Tensor* const> gi) {
                           for (std::size_t i = 0; i < m; ++i) {
                             const double* row = g.raw() + i * (na + nb);
                             if (gi[0])
                               for (std::size_t j = 0; j < na; ++j) (*gi[0])[i * na + j] += row[j];
                             if (gi[1])
                               for (std::size_t j = 0; j < nb; ++j) (*gi[1])[i * nb + j] += row[na + j];
                           }
                         });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  const Tensor& av = a.value();
  require_rank2("slice_cols", av);
  if (begin >= end || end > av.dim(1)) {
    throw ShapeError("slice_cols: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") invalid for shape " + shape_str(av.shape()));
  }
  const std::size_t m = av.dim(0), n = av.dim(1), w = end - begin;
  Tensor c({m, w});
  for (std::size_t i = 0; i < m; ++i) std::copy_n(av.raw() + i * n + begin, w, c.raw() + i * w);
  return a.tape().record(OpKind::kSliceCols, "slice_cols", {a}, std::move(c),
                         [m, n, w, begin](const Tensor& g, std::span<Tensor* const> gi) {
                           for (std::size_t i = 0; i < m; ++i)
                             for (std::size_t j = 0; j < w; ++j) (*gi[0])[i * n + begin + j] += g[i * w + j];
                         });
}

Var leaky_relu(Var a, double slope) {
  return unary(
      OpKind::kLeakyRelu, a, [slope](double x) { return x > 0.0 ? x : slope * x; },
      [slope](double x) { return x > 0.0 ? 1.0 : slope; });
}

Var relu(Var a) {
  return unary(
      OpKind::kRelu, a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(Var a) {
  auto f = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  return unary(OpKind::kSigmoid, a, f, [f](double x) {
    const double s = f(x);
    return s * (1.0 - s);
  });
}

Var tanh(Var a) {
  return unary(
      OpKind::kTanh, a, [](double x) { return std::tanh(x); },
      [](double x) {
        const double t = std::tanh(x);
        return 1.0 - t * t;
      });
}

Var square(Var a) {
  return unary(
      OpKind::kSquare, a, [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}

Var sqrt(Var a) {
  return unary(
      OpKind::kSqrt, a, [](double x) { return std::sqrt(x); },
      [](double x) { return 0.5 / std::sqrt(x); });
}

Var sum(Var a) {
  const Tensor& av = a.value();
  double s = 0.0;
  for (double v : av.data()) s += v;
  return a.tape().record(OpKind::kSum, "sum", {a}, Tensor::scalar(s),
                         [](const Tensor& g, std::span<Tensor* const> gi) {
                           for (double& v : gi[0]->data()) v += g[0];
                         });
}

Var mean(Var a) {
  const Tensor& av = a.value();
  const double n = static_cast<double>(av.size());
  double s = 0.0;
  for (double v : av.data()) s += v;
  return a.tape().record(OpKind::kMean, "mean", {a}, Tensor::scalar(s / n),
                         [n](const Tensor& g, std::span<Tensor* const> gi) {
                           const double d = g[0] / n;
                           for (double& v : gi[0]->data()) v += d;
                         });
}

Var mean_rows(Var a) {
  const Tensor& av = a.value();
  require_rank2("mean_rows", av);
  const std::size_t m = av.dim(0), n = av.dim(1);
  Tensor c({1, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) c[j] += av[i * n + j];
  for (std::size_t j = 0; j < n; ++j) c[j] /= static_cast<double>(m);
  return a.tape().record(OpKind::kMean, "mean_rows", {a}, std::move(c),
                         [m, n](const Tensor& g, std::span<Tensor* const> gi) {
                           const double inv = 1.0 / static_cast<double>(m);
                           for (std::size_t i = 0; i < m; ++i)
                             for (std::size_t j = 0; j < n; ++j) (*gi[0])[i * n + j] += g[j] * inv;
                         });
}

Var sum_cols(Var a) {
  const Tensor& av = a.value();
  require_rank2("sum_cols", av);
  const std::size_t m = av.dim(0), n = av.dim(1);
  Tensor c({m, 1});
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += av[i * n + j];
    c[i] = s;
  }
  return a.tape().record(OpKind::kSum, "sum_cols", {a}, std::move(c),
                         [m, n](const Tensor& g, std::span<Tensor* const> gi) {
                           for (std::size_t i = 0; i < m; ++i)
                             for (std::size_t j = 0; j < n; ++j) (*gi[0])[i * n + j] += g[i];
                         });
}

Var max_over_axis(Var a, std::size_t axis) {
  const Tensor& av = a.value();
  if (axis >= av.rank()) {
    throw ShapeError("max_over_axis: axis " + std::to_string(axis) + " out of range for " +
                     shape_str(av.shape()));
  }
  std::size_t outer = 1, inner = 1;
  const std::size_t len = av.dim(axis);
  Shape out_shape;
  for (std::size_t d = 0; d < av.rank(); ++d) {
    if (d < axis) outer *= av.dim(d);
    if (d > axis) inner *= av.dim(d);
    if (d != axis) out_shape.push_back(av.dim(d));
  }
  if (out_shape.empty()) out_shape.push_back(1);

  Tensor c(out_shape);
  std::vector<std::size_t> arg(outer * inner, 0);
  for (std::size_t o = 0; o < outer; ++o) {
    const double* base = av.raw() + o * len * inner;
    double* dst = c.raw() + o * inner;
    std::size_t* idx = arg.data() + o * inner;
    std::copy_n(base, inner, dst);
    for (std::size_t l = 1; l < len; ++l) {
      const double* row = base + l * inner;
      for (std::size_t q = 0; q < inner; ++q) {
        if (row[q] > dst[q]) {
          dst[q] = row[q];
          idx[q] = l;
        }
      }
    }
  }
  return a.tape().record(OpKind::kMaxOverAxis, "max_over_axis", {a}, std::move(c),
                         [arg, len, inner](const Tensor& g, std::span<Tensor* const> gi) {
                           double* ga = gi[0]->raw();
                           const std::size_t outer = arg.size() / inner;
                           for (std::size_t o = 0, e = 0; o < outer; ++o)
                             for (std::size_t q = 0; q < inner; ++q, ++e)
                               ga[(o * len + arg[e]) * inner + q] += g[e];
                         },
                         arg);
}

Var broadcast_rows(Var a, std::size_t rows) {
  const Tensor& av = a.value();
  if (!(av.rank() == 1 || (av.rank() == 2 && av.dim(0) == 1))) {
    throw ShapeError("broadcast_rows: expected a row vector, got " + shape_str(av.shape()));
  }
  const std::size_t n = av.size();
  Tensor c({rows, n});
  for (std::size_t i = 0; i < rows; ++i) std::copy_n(av.raw(), n, c.raw() + i * n);
  return a.tape().record(OpKind::kBroadcastRows, "broadcast_rows", {a}, std::move(c),
                         [rows, n](const Tensor& g, std::span<Tensor* const> gi) {
                           for (std::size_t i = 0; i < rows; ++i)
                             for (std::size_t j = 0; j < n; ++j) (*gi[0])[j] += g[i * n + j];
                         });
}

Var l2_norm_rows(Var a) {
  const Tensor& av = a.value();
  require_rank2("l2_norm_rows", av);
  const std::size_t m = av.dim(0), n = av.dim(1);
  Tensor c({m, 1});
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += av[i * n + j] * av[i * n + j];
    c[i] = std::sqrt(s);
  }
  Tensor norms = c;
  return a.tape().record(OpKind::kL2NormRows, "l2_norm_rows", {a}, std::move(c),
                         [a, norms, m, n](const Tensor& g, std::span<Tensor* const> gi) {
                           const Tensor& av = a.value();
                           for (std::size_t i = 0; i < m; ++i) {
                             if (norms[i] == 0.0) continue;
                             const double f = g[i] / norms[i];
                             for (std::size_t j = 0; j < n; ++j) (*gi[0])[i * n + j] += f * av[i * n + j];
                           }
                         });
}

Var reshape(Var a, Shape shape) {
  Tensor c = a.value().reshaped(std::move(shape));
  return a.tape().record(OpKind::kReshape, "reshape", {a}, std::move(c),
                         [](const Tensor& g, std::span<Tensor* const> gi) {
                           auto dst = gi[0]->data();
                           for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
                         });
}

namespace {

void check_layers(std::span<const AffineLayerRef> layers, const Tensor& x) {
  if (layers.empty()) throw ValidationError("affine stack has no layers");
  std::size_t width = x.cols();
  for (const auto& l : layers) {
    const Tensor& w = l.weight.value();
    if (w.rank() != 2 || w.dim(0) != width) {
      throw ShapeError("affine stack: weight " + shape_str(w.shape()) + " does not accept width " +
                       std::to_string(width));
    }
    width = w.dim(1);
  }
}

}  // namespace

namespace {

/// Calls fn(f, df) with the activation and its derivative expressed in
/// terms of the activation's output, so loops specialise per activation.
template <typename Fn>
void with_activation(Activation a, double slope, Fn&& fn) {
  switch (a) {
    case Activation::kIdentity:
      fn([](double v) { return v; }, [](double) { return 1.0; });
      break;
    case Activation::kLeakyRelu:
      fn([slope](double v) { return v > 0.0 ? v : slope * v; },
         [slope](double y) { return y > 0.0 ? 1.0 : slope; });
      break;
    case Activation::kRelu:
      fn([](double v) { return v > 0.0 ? v : 0.0; }, [](double y) { return y > 0.0 ? 1.0 : 0.0; });
      break;
    case Activation::kSigmoid:
      fn([](double v) { return 1.0 / (1.0 + std::exp(-v)); }, [](double y) { return y * (1.0 - y); });
      break;
    case Activation::kTanh:
      fn([](double v) { return std::tanh(v); }, [](double y) { return 1.0 - y * y; });
      break;
  }
}

void bias_activate(double* h, const double* b, std::size_t m, std::size_t n, Activation a,
                   double slope) {
  with_activation(a, slope, [&](auto f, auto) {
    for (std::size_t i = 0; i < m; ++i) {
      double* row = h + i * n;
      for (std::size_t j = 0; j < n; ++j) row[j] = f(row[j] + b[j]);
    }
  });
}

}  // namespace

Var affine(Var x, Var w, Var b, Activation activation, double slope) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const Tensor& bv = b.value();
  require_rank2("affine", xv);
  require_rank2("affine", wv);
  if (xv.dim(1) != wv.dim(0) || bv.size() != wv.dim(1) || (bv.rank() == 2 && bv.dim(0) != 1)) {
    throw ShapeError("affine: incompatible shapes " + shape_str(xv.shape()) + ", " +
                     shape_str(wv.shape()) + ", " + shape_str(bv.shape()));
  }
  if (!(slope >= 0.0)) throw ValidationError("affine: negative activation slope");
  const std::size_t m = xv.dim(0), k = xv.dim(1), n = wv.dim(1);
  Tensor h({m, n});
  kernels::gemm(xv.raw(), wv.raw(), h.raw(), m, k, n);
  bias_activate(h.raw(), bv.raw(), m, n, activation, slope);
  Tape& tape = x.tape();
  const std::size_t self = tape.size();
  return tape.record(
      OpKind::kAffine, "affine", {x, w, b}, std::move(h),
      [&tape, self, x, w, activation, slope, m, k, n](const Tensor& g, std::span<Tensor* const> gi) {
        // Every activation's derivative is recoverable from its output.
        const double* hp = tape.value(self).raw();
        const double* gp = g.raw();
        std::vector<double> gz(m * n);
        with_activation(activation, slope, [&](auto, auto df) {
          for (std::size_t i = 0; i < m * n; ++i) gz[i] = 0.0 + gp[i] * df(hp[i]);
        });
        if (gi[0]) kernels::gemm_nt(gz.data(), w.value().raw(), gi[0]->raw(), m, n, k, true);
        if (gi[1]) kernels::gemm_tn(x.value().raw(), gz.data(), gi[1]->raw(), k, m, n, true);
        if (gi[2]) {
          double* gb = gi[2]->raw();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) gb[j] += gz[i * n + j];
        }
      });
}

Var affine_stack_forward(std::span<const AffineLayerRef> layers, Var x) {
  check_layers(layers, x.value());
  Var h = x;
  for (const auto& l : layers) h = affine(h, l.weight, l.bias, l.activation, l.slope);
  return h;
}

Tensor affine_stack_group_max(std::span<const AffineLayerRef> layers, const Tensor& x,
                              std::size_t group) {
  require_rank2("affine_stack_group_max", x);
  check_layers(layers, x);
  if (group == 0 || x.dim(0) % group != 0) {
    throw ShapeError("affine_stack_group_max: " + std::to_string(x.dim(0)) +
                     " rows do not split into groups of " + std::to_string(group));
  }
  constexpr std::size_t kChunk = 256;
  const std::size_t groups = x.dim(0) / group;
  const std::size_t out_w = layers.back().weight.value().dim(1);
  Tensor out({groups, out_w});
  std::vector<double> h, z;
  for (std::size_t gi = 0; gi < groups; ++gi) {
    double* dst = out.raw() + gi * out_w;
    for (std::size_t r0 = 0; r0 < group; r0 += kChunk) {
      const std::size_t rows = std::min(kChunk, group - r0);
      h.assign(x.raw() + (gi * group + r0) * x.dim(1), x.raw() + (gi * group + r0 + rows) * x.dim(1));
      for (const auto& l : layers) {
        const Tensor& w = l.weight.value();
        const Tensor& b = l.bias.value();
        const std::size_t k = w.dim(0), n = w.dim(1);
        z.resize(rows * n);
        kernels::gemm(h.data(), w.raw(), z.data(), rows, k, n);
        bias_activate(z.data(), b.raw(), rows, n, l.activation, l.slope);
        std::swap(h, z);
      }
      std::size_t i = 0;
      if (r0 == 0) {
        std::copy_n(h.data(), out_w, dst);
        i = 1;
      }
      for (; i < rows; ++i)
        for (std::size_t q = 0; q < out_w; ++q) dst[q] = h[i * out_w + q] > dst[q] ? h[i * out_w + q] : dst[q];
    }
  }
  return out;
}

Var input_gradient(std::span<const AffineLayerRef> layers, Var x) {
  const Tensor& xv = x.value();
  require_rank2("input_gradient", xv);
  check_layers(layers, xv);
  if (layers.back().weight.value().dim(1) != 1) {
    throw ShapeError("input_gradient: stack must end in a single output");
  }
  for (const auto& l : layers) {
    if (l.activation != Activation::kIdentity && l.activation != Activation::kLeakyRelu &&
        l.activation != Activation::kRelu) {
      throw ValidationError("input_gradient: only affine layers with identity/leaky-relu/relu "
                            "activations are supported");
    }
  }

  // Local slopes of every activation at the current input. These are
  // piecewise constant, so they enter the graph as constants.
  const std::size_t rows = xv.dim(0);
  std::vector<Tensor> slopes;
  slopes.reserve(layers.size());
  Tensor h = xv;
  for (const auto& l : layers) {
    const Tensor& w = l.weight.value();
    const Tensor& b = l.bias.value();
    const std::size_t k = w.dim(0), n = w.dim(1);
    Tensor z({rows, n});
    kernels::gemm(h.raw(), w.raw(), z.raw(), rows, k, n);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < n; ++j) z[i * n + j] += b[j];
    Tensor s(z.shape(), 1.0);
    for (std::size_t i = 0; i < z.size(); ++i) {
      if (l.activation == Activation::kLeakyRelu) {
        s[i] = z[i] > 0.0 ? 1.0 : l.slope;
        z[i] = z[i] > 0.0 ? z[i] : l.slope * z[i];
      } else if (l.activation == Activation::kRelu) {
        s[i] = z[i] > 0.0 ? 1.0 : 0.0;
        z[i] = z[i] > 0.0 ? z[i] : 0.0;
      }
    }
    slopes.push_back(std::move(s));
    h = std::move(z);
  }

  Tape& tape = x.tape();
  Var g = tape.constant(Tensor({rows, 1}, 1.0));
  for (std::size_t li = layers.size(); li-- > 0;) {
    const auto& l = layers[li];
    if (l.activation != Activation::kIdentity) g = mul(g, tape.constant(std::move(slopes[li])));
    g = matmul(g, transpose(l.weight));
  }
  return g;
}

}  // namespace ucomp
