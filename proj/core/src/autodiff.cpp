#include "mirror_opt/autodiff.hpp"

#include <cmath>

#include <fmt/format.h>

#include "mirror_opt/error.hpp"

namespace mirror_opt::ad {

const Matrix& Var::value() const { return tape_->value(*this); }
const MatrixPtr& Var::value_ptr() const { return tape_->value_ptr(*this); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw DimensionError(fmt::format("expected a scalar node, got {}x{}", v.rows(), v.cols()));
  return v(0, 0);
}

Vector Var::vector() const {
  const Matrix& v = value();
  return Eigen::Map<const Vector>(v.data(), v.size());
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::variable(Matrix value) {
  Node n;
  n.value = std::make_shared<const Matrix>(std::move(value));
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::constant(Matrix value) { return constant(std::make_shared<const Matrix>(std::move(value))); }

Var Tape::constant(MatrixPtr value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::constant(double value) { return constant(Matrix::Constant(1, 1, value)); }

Var Tape::record(Matrix value, std::initializer_list<Var> parents, BackwardFn backward) {
  return record(std::move(value), std::span<const Var>(parents.begin(), parents.size()), std::move(backward));
}

Var Tape::record(Matrix value, std::span<const Var> parents, BackwardFn backward) {
  return record(std::make_shared<const Matrix>(std::move(value)), parents, std::move(backward));
}

Var Tape::record(MatrixPtr value, std::initializer_list<Var> parents, BackwardFn backward) {
  return record(std::move(value), std::span<const Var>(parents.begin(), parents.size()), std::move(backward));
}

Var Tape::record(MatrixPtr value, std::span<const Var> parents, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  for (const Var& p : parents) {
    if (&p.tape() != this) throw Error("autodiff: mixing nodes from different tapes");
    n.requires_grad = n.requires_grad || requires_grad(p);
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

void Tape::accumulate(Var v, const Matrix& g) {
  Node& n = nodes_[static_cast<std::size_t>(v.id())];
  if (!n.requires_grad) return;
  if (g.rows() != n.value->rows() || g.cols() != n.value->cols()) {
    throw DimensionError(fmt::format("autodiff: adjoint {}x{} for node {}x{}", g.rows(), g.cols(), n.value->rows(),
                                     n.value->cols()));
  }
  if (n.has_adjoint) {
    n.adjoint += g;
  } else {
    n.adjoint = g;
    n.has_adjoint = true;
  }
}

void Tape::clear_adjoints() {
  for (auto& n : nodes_) {
    n.has_adjoint = false;
    n.adjoint.resize(0, 0);
  }
}

void Tape::backward(Var output) {
  Seed s{output, Matrix::Ones(1, 1)};
  if (output.size() != 1) throw DimensionError("backward(output) needs a scalar output");
  backward(std::span<const Seed>(&s, 1));
}

void Tape::backward(std::span<const Seed> seeds) {
  clear_adjoints();
  int last = -1;
  for (const Seed& s : seeds) {
    accumulate(s.node, s.weight);
    last = std::max(last, s.node.id());
  }
  for (int i = last; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.has_adjoint || !n.backward) continue;
    // Interior adjoints are not needed after propagation; move them out to save memory.
    const Matrix adj = std::move(n.adjoint);
    n.has_adjoint = false;
    n.backward(*this, adj);
  }
}

Matrix Tape::gradient(Var v) const {
  const Node& n = nodes_[static_cast<std::size_t>(v.id())];
  if (n.has_adjoint) return n.adjoint;
  return Matrix::Zero(n.value->rows(), n.value->cols());
}

namespace {

void require_same_shape(Var a, Var b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(fmt::format("{}: shapes {}x{} and {}x{} differ", op, a.rows(), a.cols(), b.rows(), b.cols()));
  }
}

}  // namespace

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  return a.tape().record(a.value() + b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  return a.tape().record(a.value() - b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    if (t.requires_grad(b)) t.accumulate(b, -g);
  });
}

Var neg(Var a) {
  return a.tape().record(-a.value(), {a}, [a](Tape& t, const Matrix& g) { t.accumulate(a, -g); });
}

Var scale(Var a, double s) {
  return a.tape().record(s * a.value(), {a}, [a, s](Tape& t, const Matrix& g) { t.accumulate(a, s * g); });
}

Var shift(Var a, double s) {
  return a.tape().record((a.value().array() + s).matrix(), {a}, [a](Tape& t, const Matrix& g) { t.accumulate(a, g); });
}

Var mul(Var a, Var b) {
  require_same_shape(a, b, "mul");
  MatrixPtr av = a.value_ptr();
  MatrixPtr bv = b.value_ptr();
  return a.tape().record(av->cwiseProduct(*bv), {a, b}, [a, b, av, bv](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accumulate(a, g.cwiseProduct(*bv));
    if (t.requires_grad(b)) t.accumulate(b, g.cwiseProduct(*av));
  });
}

Var div(Var a, Var b) {
  require_same_shape(a, b, "div");
  MatrixPtr av = a.value_ptr();
  MatrixPtr bv = b.value_ptr();
  return a.tape().record(av->cwiseQuotient(*bv), {a, b}, [a, b, av, bv](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accumulate(a, g.cwiseQuotient(*bv));
    if (t.requires_grad(b)) {
      t.accumulate(b, (-g.array() * av->array() / bv->array().square()).matrix());
    }
  });
}

Var scalar_mul(Var s, Var a) {
  const double sv = s.scalar();
  MatrixPtr av = a.value_ptr();
  return a.tape().record(sv * *av, {s, a}, [s, a, sv, av](Tape& t, const Matrix& g) {
    if (t.requires_grad(s)) t.accumulate(s, Matrix::Constant(1, 1, g.cwiseProduct(*av).sum()));
    if (t.requires_grad(a)) t.accumulate(a, sv * g);
  });
}

Var exp(Var a) {
  auto out = std::make_shared<const Matrix>(a.value().array().exp().matrix());
  return a.tape().record(out, {a}, [a, out](Tape& t, const Matrix& g) { t.accumulate(a, g.cwiseProduct(*out)); });
}

Var log(Var a) {
  MatrixPtr av = a.value_ptr();
  return a.tape().record(av->array().log().matrix(), {a},
                         [a, av](Tape& t, const Matrix& g) { t.accumulate(a, g.cwiseQuotient(*av)); });
}

Var sqrt(Var a) {
  auto out = std::make_shared<const Matrix>(a.value().array().sqrt().matrix());
  return a.tape().record(out, {a}, [a, out](Tape& t, const Matrix& g) {
    t.accumulate(a, (0.5 * g.array() / out->array()).matrix());
  });
}

Var square(Var a) {
  MatrixPtr av = a.value_ptr();
  return a.tape().record(av->array().square().matrix(), {a},
                         [a, av](Tape& t, const Matrix& g) { t.accumulate(a, 2.0 * g.cwiseProduct(*av)); });
}

Var smooth_abs(Var a, double eps) {
  MatrixPtr av = a.value_ptr();
  auto out = std::make_shared<const Matrix>((av->array().square() + eps * eps).sqrt().matrix());
  return a.tape().record(out, {a}, [a, av, out](Tape& t, const Matrix& g) {
    t.accumulate(a, (g.array() * av->array() / out->array()).matrix());
  });
}

Var mask_positive(Var a, const Matrix& mask) {
  if (mask.rows() != a.rows() || mask.cols() != a.cols()) throw DimensionError("mask_positive: shape mismatch");
  auto keep = std::make_shared<const Matrix>((mask.array() > 0.0).cast<double>().matrix());
  return a.tape().record(a.value().cwiseProduct(*keep), {a},
                         [a, keep](Tape& t, const Matrix& g) { t.accumulate(a, g.cwiseProduct(*keep)); });
}

Var relu(Var a) { return mask_positive(a, a.value()); }

Var sigmoid(Var a) {
  auto out = std::make_shared<const Matrix>(a.value().unaryExpr([](double v) {
    if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  }));
  return a.tape().record(out, {a}, [a, out](Tape& t, const Matrix& g) {
    t.accumulate(a, (g.array() * out->array() * (1.0 - out->array())).matrix());
  });
}

Var softplus(Var a) {
  Matrix out = a.value().unaryExpr([](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); });
  return a.tape().record(std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    t.accumulate(a, g.cwiseProduct(t.value(a).unaryExpr([](double v) {
      if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
      const double e = std::exp(v);
      return e / (1.0 + e);
    })));
  });
}

Var operator+(Var a, Var b) { return add(a, b); }
Var operator-(Var a, Var b) { return sub(a, b); }
Var operator-(Var a) { return neg(a); }
Var operator*(double s, Var a) { return scale(a, s); }

Var sum(Var a) {
  const Index r = a.rows();
  const Index c = a.cols();
  return a.tape().record(Matrix::Constant(1, 1, a.value().sum()), {a},
                         [a, r, c](Tape& t, const Matrix& g) { t.accumulate(a, Matrix::Constant(r, c, g(0, 0))); });
}

Var dot(Var a, Var b) {
  require_same_shape(a, b, "dot");
  MatrixPtr av = a.value_ptr();
  MatrixPtr bv = b.value_ptr();
  return a.tape().record(Matrix::Constant(1, 1, av->cwiseProduct(*bv).sum()), {a, b},
                         [a, b, av, bv](Tape& t, const Matrix& g) {
                           if (t.requires_grad(a)) t.accumulate(a, g(0, 0) * *bv);
                           if (t.requires_grad(b)) t.accumulate(b, g(0, 0) * *av);
                         });
}

Var sum_cols(Var a) {
  const Index c = a.cols();
  return a.tape().record(a.value().rowwise().sum(), {a},
                         [a, c](Tape& t, const Matrix& g) { t.accumulate(a, g.replicate(1, c)); });
}

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) throw DimensionError("matmul: inner dimensions differ");
  MatrixPtr av = a.value_ptr();
  MatrixPtr bv = b.value_ptr();
  return a.tape().record(*av * *bv, {a, b}, [a, b, av, bv](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accumulate(a, g * bv->transpose());
    if (t.requires_grad(b)) t.accumulate(b, av->transpose() * g);
  });
}

Var matmul_tn(Var a, Var b) {
  if (a.rows() != b.rows()) throw DimensionError("matmul_tn: inner dimensions differ");
  MatrixPtr av = a.value_ptr();
  MatrixPtr bv = b.value_ptr();
  return a.tape().record(av->transpose() * *bv, {a, b}, [a, b, av, bv](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accumulate(a, *bv * g.transpose());
    if (t.requires_grad(b)) t.accumulate(b, *av * g);
  });
}

Var matmul_nt(Var a, Var b) {
  if (a.cols() != b.cols()) throw DimensionError("matmul_nt: inner dimensions differ");
  MatrixPtr av = a.value_ptr();
  MatrixPtr bv = b.value_ptr();
  return a.tape().record(*av * bv->transpose(), {a, b}, [a, b, av, bv](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accumulate(a, g * *bv);
    if (t.requires_grad(b)) t.accumulate(b, g.transpose() * *av);
  });
}

Var add_colwise(Var m, Var v) {
  if (v.cols() != 1 || v.rows() != m.rows()) throw DimensionError("add_colwise: vector length must match rows");
  Matrix out = m.value().colwise() + v.value().col(0);
  return m.tape().record(std::move(out), {m, v}, [m, v](Tape& t, const Matrix& g) {
    t.accumulate(m, g);
    if (t.requires_grad(v)) t.accumulate(v, g.rowwise().sum());
  });
}

Var reshape(Var a, Index rows, Index cols) {
  if (rows * cols != a.size()) throw DimensionError("reshape: size mismatch");
  const Index r0 = a.rows();
  const Index c0 = a.cols();
  Matrix out = Eigen::Map<const Matrix>(a.value().data(), rows, cols);
  return a.tape().record(std::move(out), {a}, [a, r0, c0](Tape& t, const Matrix& g) {
    t.accumulate(a, Eigen::Map<const Matrix>(g.data(), r0, c0));
  });
}

Var slice(Var a, Index offset, Index n) {
  if (offset < 0 || n < 0 || offset + n > a.size()) throw DimensionError("slice: range out of bounds");
  const Index r0 = a.rows();
  const Index c0 = a.cols();
  Matrix out = Eigen::Map<const Vector>(a.value().data() + offset, n);
  return a.tape().record(std::move(out), {a}, [a, r0, c0, offset, n](Tape& t, const Matrix& g) {
    Matrix full = Matrix::Zero(r0, c0);
    Eigen::Map<Vector>(full.data() + offset, n) = Eigen::Map<const Vector>(g.data(), n);
    t.accumulate(a, full);
  });
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  Index total = 0;
  for (const Var& p : parts) total += p.size();
  Matrix out(total, 1);
  Index at = 0;
  std::vector<Var> owned(parts.begin(), parts.end());
  for (const Var& p : parts) {
    out.middleRows(at, p.size()) = Eigen::Map<const Vector>(p.value().data(), p.size());
    at += p.size();
  }
  return parts.front().tape().record(std::move(out), parts, [owned](Tape& t, const Matrix& g) {
    Index pos = 0;
    for (const Var& p : owned) {
      if (t.requires_grad(p)) t.accumulate(p, Eigen::Map<const Matrix>(g.data() + pos, p.rows(), p.cols()));
      pos += p.size();
    }
  });
}

Var gather(Var a, std::shared_ptr<const std::vector<Index>> index, Index rows, Index cols) {
  if (static_cast<Index>(index->size()) != rows * cols) throw DimensionError("gather: index size != output size");
  const Matrix& av = a.value();
  Matrix out(rows, cols);
  for (std::size_t i = 0; i < index->size(); ++i) out.data()[i] = av.data()[(*index)[i]];
  const Index r0 = a.rows();
  const Index c0 = a.cols();
  return a.tape().record(std::move(out), {a}, [a, index, r0, c0](Tape& t, const Matrix& g) {
    Matrix full = Matrix::Zero(r0, c0);
    for (std::size_t i = 0; i < index->size(); ++i) full.data()[(*index)[i]] += g.data()[i];
    t.accumulate(a, full);
  });
}

Var scatter_add(Var a, std::shared_ptr<const std::vector<Index>> index, Index rows, Index cols) {
  if (static_cast<Index>(index->size()) != a.size()) throw DimensionError("scatter_add: index size != input size");
  const Matrix& av = a.value();
  Matrix out = Matrix::Zero(rows, cols);
  for (std::size_t i = 0; i < index->size(); ++i) out.data()[(*index)[i]] += av.data()[i];
  const Index r0 = a.rows();
  const Index c0 = a.cols();
  return a.tape().record(std::move(out), {a}, [a, index, r0, c0](Tape& t, const Matrix& g) {
    Matrix part(r0, c0);
    for (std::size_t i = 0; i < index->size(); ++i) part.data()[i] = g.data()[(*index)[i]];
    t.accumulate(a, part);
  });
}

Var log_softmax_cols(Var a) {
  const Matrix& av = a.value();
  Matrix out(av.rows(), av.cols());
  for (Index j = 0; j < av.cols(); ++j) {
    const double m = av.col(j).maxCoeff();
    const double lse = m + std::log((av.col(j).array() - m).exp().sum());
    out.col(j) = av.col(j).array() - lse;
  }
  auto soft = std::make_shared<const Matrix>(out.array().exp().matrix());
  return a.tape().record(std::move(out), {a}, [a, soft](Tape& t, const Matrix& g) {
    Matrix r = g - soft->cwiseProduct(g.colwise().sum().replicate(soft->rows(), 1));
    t.accumulate(a, r);
  });
}

Var linear(Var a, LinearFn fwd, LinearFn adj) {
  Matrix out = fwd(a.value());
  return a.tape().record(std::move(out), {a}, [a, adj = std::move(adj)](Tape& t, const Matrix& g) {
    t.accumulate(a, adj(g));
  });
}

}  // namespace mirror_opt::ad
