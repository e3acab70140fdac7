#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "mirror_opt/types.hpp"

/// Minimal reverse-mode automatic differentiation over dense matrices.
///
/// Every node stores a matrix value. Column vectors are n x 1 matrices and scalars are 1 x 1.
/// A tape is single-threaded; independent tapes may be used concurrently.
namespace mirror_opt::ad {

class Tape;

using MatrixPtr = std::shared_ptr<const Matrix>;

/// Handle to a node on a tape.
class Var {
 public:
  Var() = default;

  bool valid() const { return tape_ != nullptr; }
  int id() const { return id_; }
  Tape& tape() const { return *tape_; }
  const Matrix& value() const;
  const MatrixPtr& value_ptr() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  Index size() const { return value().size(); }
  /// Value of a 1 x 1 node.
  double scalar() const;
  /// Value flattened column-major into a vector.
  Vector vector() const;

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Initial adjoint for backward(): d(loss)/d(node) = weight.
struct Seed {
  Var node;
  Matrix weight;
};

class Tape {
 public:
  /// Receives the adjoint of the node's output and pushes contributions to its inputs.
  using BackwardFn = std::function<void(Tape&, const Matrix& out_adjoint)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that receives gradients.
  Var variable(Matrix value);
  /// Leaf that does not.
  Var constant(Matrix value);
  Var constant(MatrixPtr value);
  Var constant(double value);

  /// Adds an interior node. The backward function is dropped when no parent needs a gradient.
  Var record(Matrix value, std::initializer_list<Var> parents, BackwardFn backward);
  Var record(Matrix value, std::span<const Var> parents, BackwardFn backward);
  Var record(MatrixPtr value, std::span<const Var> parents, BackwardFn backward);
  Var record(MatrixPtr value, std::initializer_list<Var> parents, BackwardFn backward);

  bool requires_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id())].requires_grad; }
  const Matrix& value(Var v) const { return *nodes_[static_cast<std::size_t>(v.id())].value; }
  const MatrixPtr& value_ptr(Var v) const { return nodes_[static_cast<std::size_t>(v.id())].value; }

  /// Adds g to the adjoint of v; no-op when v does not require a gradient.
  void accumulate(Var v, const Matrix& g);

  /// Propagates from a scalar output seeded with 1.
  void backward(Var output);
  /// Propagates from several seeds at once.
  void backward(std::span<const Seed> seeds);

  /// Adjoint of v after backward(); zeros when nothing reached it.
  Matrix gradient(Var v) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    MatrixPtr value;
    Matrix adjoint;
    bool has_adjoint = false;
    bool requires_grad = false;
    BackwardFn backward;
  };
  Var push(Node node);
  void clear_adjoints();

  std::vector<Node> nodes_;
};

// Element-wise arithmetic; shapes must agree unless noted.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var neg(Var a);
Var scale(Var a, double s);
Var shift(Var a, double s);
Var mul(Var a, Var b);
Var div(Var a, Var b);
/// s is 1 x 1; returns s * a.
Var scalar_mul(Var s, Var a);
Var exp(Var a);
Var log(Var a);
Var sqrt(Var a);
Var square(Var a);
/// sqrt(a^2 + eps^2).
Var smooth_abs(Var a, double eps);
/// a where mask > 0, else 0. The mask is read as a constant.
Var mask_positive(Var a, const Matrix& mask);
Var relu(Var a);
Var sigmoid(Var a);
/// log(1 + exp(a)), computed stably.
Var softplus(Var a);

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator-(Var a);
Var operator*(double s, Var a);

// Reductions.
Var sum(Var a);
Var dot(Var a, Var b);
/// Row sums: r x c -> r x 1.
Var sum_cols(Var a);

// Linear algebra.
Var matmul(Var a, Var b);
/// a^T b.
Var matmul_tn(Var a, Var b);
/// a b^T.
Var matmul_nt(Var a, Var b);
/// Adds column vector v to every column of m.
Var add_colwise(Var m, Var v);
Var reshape(Var a, Index rows, Index cols);
/// Entries [offset, offset + n) of the column-major flattening, as an n x 1 vector.
Var slice(Var a, Index offset, Index n);
/// Stacks the column-major flattenings of the inputs into one vector.
Var concat(std::span<const Var> parts);
/// out(i) = a(index[i]) over the flattening of a; result is rows x cols.
Var gather(Var a, std::shared_ptr<const std::vector<Index>> index, Index rows, Index cols);
/// out(index[i]) += a(i); result is rows x cols.
Var scatter_add(Var a, std::shared_ptr<const std::vector<Index>> index, Index rows, Index cols);
/// Column-wise log-softmax.
Var log_softmax_cols(Var a);

/// Linear map out = fwd(a) with adjoint adj; the two must be exact transposes.
using LinearFn = std::function<Matrix(const Matrix&)>;
Var linear(Var a, LinearFn fwd, LinearFn adj);

}  // namespace mirror_opt::ad
