#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ucomp/tensor.hpp"

namespace ucomp {

enum class OpKind : std::uint8_t {
  kLeaf,
  kMatmul,
  kAdd,
  kSub,
  kMul,
  kScale,
  kAddScalar,
  kConcatCols,
  kSliceCols,
  kLeakyRelu,
  kRelu,
  kSigmoid,
  kTanh,
  kSquare,
  kSqrt,
  kSum,
  kMean,
  kMaxOverAxis,
  kBroadcastRows,
  kL2NormRows,
  kReshape,
  kTranspose,
  kAffine,
  kCustom,
};

const char* op_name(OpKind kind);

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  bool valid() const noexcept { return tape_ != nullptr; }
  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Result of a reverse sweep: one gradient slot per tape node.
class Gradients {
 public:
  /// Gradient of the loss w.r.t. `v`; zeros of v's shape if unreachable.
  Tensor wrt(Var v) const;
  /// Gradient of a reached node, without copying.
  const Tensor& at(Var v) const;
  bool reached(Var v) const { return v.id() < grads_.size() && grads_[v.id()].has_value(); }

 private:
  friend class Tape;
  std::vector<std::optional<Tensor>> grads_;
  const Tape* tape_ = nullptr;
};

/// Append-only record of a computation for reverse-mode differentiation.
///
/// Nodes only reference earlier nodes, so the tape is a DAG in topological
/// order and a single reverse pass visits each node once.
class Tape {
 public:
  /// Accumulates the vector-Jacobian product into the input gradients.
  /// grad_in[i] is null when input i does not require a gradient.
  using BackwardFn = std::function<void(const Tensor& grad_out, std::span<Tensor* const> grad_in)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);

  /// Appends an op node. Raises NumericError if `value` is not finite and
  /// ShapeError if an input belongs to another tape.
  Var record(OpKind kind, std::string_view name, std::vector<Var> inputs, Tensor value,
             BackwardFn backward, std::vector<std::size_t> indices = {});

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  OpKind kind(Var v) const { return nodes_.at(v.id()).kind; }
  std::span<const std::size_t> inputs(Var v) const { return nodes_.at(v.id()).inputs; }

  /// Indices recorded by the op, e.g. the argmax of max_over_axis.
  const std::vector<std::size_t>& indices(Var v) const { return nodes_.at(v.id()).indices; }

  std::size_t size() const noexcept { return nodes_.size(); }

  /// Reverse sweep from a single-element loss. The tape is left intact, so
  /// backward may be called repeatedly (e.g. for different loss terms).
  Gradients backward(Var loss) const;

 private:
  struct Node {
    OpKind kind = OpKind::kLeaf;
    std::string name;
    std::vector<std::size_t> inputs;
    Tensor value;
    bool requires_grad = false;
    BackwardFn backward;
    std::vector<std::size_t> indices;
  };

  std::vector<Node> nodes_;
};

// Differentiable ops. Binary elementwise ops accept an rhs of the same shape,
// a row vector ([n] or [1,n]) broadcast over the rows of an [m,n] lhs, or a
// single element.

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var concat_cols(Var a, Var b);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
Var leaky_relu(Var a, double slope);
Var relu(Var a);
Var sigmoid(Var a);
Var tanh(Var a);
Var square(Var a);
Var sqrt(Var a);
Var sum(Var a);
Var mean(Var a);
/// Mean over axis 0 of a rank-2 tensor: [m,n] -> [1,n].
Var mean_rows(Var a);
/// Sum over axis 1 of a rank-2 tensor: [m,n] -> [m,1].
Var sum_cols(Var a);
/// Max over `axis`; argmax per output element recorded in Tape::indices.
/// Ties pick the lowest index.
Var max_over_axis(Var a, std::size_t axis);
/// [1,n] or [n] -> [rows,n]
Var broadcast_rows(Var a, std::size_t rows);
/// Euclidean norm of each row: [m,n] -> [m,1]. Zero rows get a zero subgradient.
Var l2_norm_rows(Var a);
Var reshape(Var a, Shape shape);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double s, Var a) { return scale(a, s); }

/// Activation of one layer in an affine stack.
enum class Activation : std::uint8_t { kIdentity, kLeakyRelu, kRelu, kSigmoid, kTanh };

/// One layer `h = act(x·W + b)` with W of shape [in,out] and b of [1,out].
struct AffineLayerRef {
  Var weight;
  Var bias;
  Activation activation = Activation::kIdentity;
  double slope = 0.2;
};

/// act(x·W + b) as a single node; same values and gradients as the
/// matmul/add/activation chain, with fewer intermediates. Needs slope >= 0.
Var affine(Var x, Var w, Var b, Activation activation, double slope = 0.2);

/// ∇ₓ of a scalar-output affine stack at each row of `x`, returned as tape
/// nodes that are differentiable w.r.t. the layer weights.
///
/// Piecewise-linear activations have constant local slopes, so the input
/// gradient is itself a short chain of masked matrix products. Any other
/// activation raises ShapeError.
Var input_gradient(std::span<const AffineLayerRef> layers, Var x);

/// Plain forward evaluation of the same stack on the tape.
Var affine_stack_forward(std::span<const AffineLayerRef> layers, Var x);

/// Row-wise max over consecutive groups of `group` rows of the stack output,
/// evaluated in row blocks without recording anything. Bit-identical to
/// affine_stack_forward followed by max_over_axis.
Tensor affine_stack_group_max(std::span<const AffineLayerRef> layers, const Tensor& x,
                              std::size_t group);

}  // namespace ucomp
