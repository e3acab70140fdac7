#include "mirror_opt/problems.hpp"

#include <random>

#include <fmt/format.h>

#include "mirror_opt/error.hpp"

namespace mirror_opt {

std::string_view to_string(ProblemKind kind) {
  switch (kind) {
    case ProblemKind::kDenoiseTv:
      return "denoise_tv";
    case ProblemKind::kInpaintTv:
      return "inpaint_tv";
    case ProblemKind::kSvmHinge:
      return "svm_hinge";
    case ProblemKind::kMlpClassify:
      return "mlp_classify";
    case ProblemKind::kCnnClassify:
      return "cnn_classify";
    case ProblemKind::kQuadratic:
      return "quadratic";
  }
  return "unknown";
}

ProblemKind problem_kind_from_string(std::string_view name) {
  for (ProblemKind k : {ProblemKind::kDenoiseTv, ProblemKind::kInpaintTv, ProblemKind::kSvmHinge,
                        ProblemKind::kMlpClassify, ProblemKind::kCnnClassify, ProblemKind::kQuadratic}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError(fmt::format("unknown problem kind '{}'", name));
}

void Problem::check_dim(Index n, const char* what) const {
  if (n != dim()) throw DimensionError(fmt::format("{}: expected dimension {}, got {}", what, dim(), n));
}

double Problem::objective(const Vector& x) const {
  check_dim(x.size(), "objective");
  return eval_objective(x);
}

Vector Problem::gradient(const Vector& x) const {
  check_dim(x.size(), "gradient");
  return eval_gradient(x);
}

std::shared_ptr<const Problem> Problem::subproblem(std::span<const Index>) const {
  throw ConfigError(fmt::format("problem '{}' is not a finite sum", to_string(kind())));
}

// ---------------------------------------------------------------------------------------
// Quadratic

QuadraticProblem::QuadraticProblem(Vector a, Vector b) : a_(std::move(a)), b_(std::move(b)) {
  if (a_.size() == 0) throw DimensionError("quadratic: empty curvature");
  if (a_.size() != b_.size()) throw DimensionError("quadratic: curvature and linear term differ in length");
  if (!a_.allFinite() || !b_.allFinite()) throw NonFiniteError("quadratic: non-finite coefficients");
  if ((a_.array() <= 0.0).any()) throw ConfigError("quadratic: curvature must be positive");
}

QuadraticProblem::QuadraticProblem(Vector a) : QuadraticProblem(a, Vector::Zero(a.size())) {}

double QuadraticProblem::eval_objective(const Vector& x) const {
  return 0.5 * x.dot(a_.cwiseProduct(x)) + b_.dot(x);
}

Vector QuadraticProblem::eval_gradient(const Vector& x) const { return a_.cwiseProduct(x) + b_; }

ad::Var QuadraticProblem::objective(ad::Tape& tape, ad::Var x) const {
  check_dim(x.size(), "objective");
  ad::Var a = tape.constant(Matrix(a_));
  ad::Var b = tape.constant(Matrix(b_));
  return ad::scale(ad::dot(x, ad::mul(a, x)), 0.5) + ad::dot(b, x);
}

ad::Var QuadraticProblem::gradient(ad::Tape& tape, ad::Var x) const {
  check_dim(x.size(), "gradient");
  return ad::mul(tape.constant(Matrix(a_)), x) + tape.constant(Matrix(b_));
}

std::optional<double> QuadraticProblem::minimum_value() const {
  return -0.5 * b_.dot(b_.cwiseQuotient(a_));
}

std::optional<Vector> QuadraticProblem::minimizer() const { return Vector(-b_.cwiseQuotient(a_)); }

std::shared_ptr<QuadraticProblem> sample_quadratic_family(const Vector& shared_diag, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector b(shared_diag.size());
  for (Index i = 0; i < b.size(); ++i) b[i] = normal(rng);
  return std::make_shared<QuadraticProblem>(shared_diag, std::move(b));
}

// ---------------------------------------------------------------------------------------
// Total variation

ImageGradient::ImageGradient(Index height, Index width) : h_(height), w_(width) {
  if (h_ < 2 || w_ < 2) throw DimensionError("image gradient needs at least a 2x2 image");
}

Vector ImageGradient::apply(const Vector& x) const {
  Vector d(num_differences());
  Index at = 0;
  for (Index j = 0; j + 1 < w_; ++j) {
    for (Index i = 0; i < h_; ++i) d[at++] = x[i + h_ * (j + 1)] - x[i + h_ * j];
  }
  for (Index j = 0; j < w_; ++j) {
    for (Index i = 0; i + 1 < h_; ++i) d[at++] = x[i + 1 + h_ * j] - x[i + h_ * j];
  }
  return d;
}

Vector ImageGradient::adjoint(const Vector& d) const {
  Vector x = Vector::Zero(num_pixels());
  Index at = 0;
  for (Index j = 0; j + 1 < w_; ++j) {
    for (Index i = 0; i < h_; ++i) {
      const double v = d[at++];
      x[i + h_ * (j + 1)] += v;
      x[i + h_ * j] -= v;
    }
  }
  for (Index j = 0; j < w_; ++j) {
    for (Index i = 0; i + 1 < h_; ++i) {
      const double v = d[at++];
      x[i + 1 + h_ * j] += v;
      x[i + h_ * j] -= v;
    }
  }
  return x;
}

ad::Var ImageGradient::apply(ad::Var x) const {
  const ImageGradient self = *this;
  return ad::linear(
      x, [self](const Matrix& v) { return Matrix(self.apply(Eigen::Map<const Vector>(v.data(), v.size()))); },
      [self](const Matrix& g) { return Matrix(self.adjoint(Eigen::Map<const Vector>(g.data(), g.size()))); });
}

ad::Var ImageGradient::adjoint(ad::Var d) const {
  const ImageGradient self = *this;
  return ad::linear(
      d, [self](const Matrix& g) { return Matrix(self.adjoint(Eigen::Map<const Vector>(g.data(), g.size()))); },
      [self](const Matrix& v) { return Matrix(self.apply(Eigen::Map<const Vector>(v.data(), v.size()))); });
}

TvProblem::TvProblem(Matrix y, double lambda, double eps)
    : grad_(y.rows(), y.cols()), y_(Eigen::Map<const Vector>(y.data(), y.size())), lambda_(lambda), eps_(eps) {
  if (!y_.allFinite()) throw NonFiniteError("tv: non-finite image");
  if (!(lambda_ >= 0.0) || !(eps_ > 0.0)) throw ConfigError("tv: need lambda >= 0 and eps > 0");
  mask_ = Vector::Ones(y_.size());
}

TvProblem::TvProblem(Matrix y, Matrix mask, double lambda, double eps) : TvProblem(std::move(y), lambda, eps) {
  if (mask.rows() != grad_.height() || mask.cols() != grad_.width()) throw DimensionError("tv: mask shape != image");
  if (((mask.array() != 0.0) && (mask.array() != 1.0)).any()) throw ConfigError("tv: mask entries must be 0 or 1");
  mask_ = Eigen::Map<const Vector>(mask.data(), mask.size());
  has_mask_ = true;
}

double TvProblem::missing_fraction() const { return 1.0 - mask_.sum() / static_cast<double>(mask_.size()); }

double TvProblem::eval_objective(const Vector& x) const {
  const Vector r = mask_.cwiseProduct(x - y_);
  const Vector d = grad_.apply(x);
  return r.squaredNorm() + lambda_ * (d.array().square() + eps_ * eps_).sqrt().sum();
}

Vector TvProblem::eval_gradient(const Vector& x) const {
  const Vector d = grad_.apply(x);
  const Vector s = (d.array() / (d.array().square() + eps_ * eps_).sqrt()).matrix();
  return 2.0 * mask_.cwiseProduct(x - y_) + lambda_ * grad_.adjoint(s);
}

ad::Var TvProblem::objective(ad::Tape& tape, ad::Var x) const {
  check_dim(x.size(), "objective");
  ad::Var r = ad::mul(tape.constant(Matrix(mask_)), x - tape.constant(Matrix(y_)));
  return ad::dot(r, r) + ad::scale(ad::sum(ad::smooth_abs(grad_.apply(x), eps_)), lambda_);
}

ad::Var TvProblem::gradient(ad::Tape& tape, ad::Var x) const {
  check_dim(x.size(), "gradient");
  ad::Var m = tape.constant(Matrix(mask_));
  ad::Var fidelity = ad::scale(ad::mul(m, x - tape.constant(Matrix(y_))), 2.0);
  ad::Var d = grad_.apply(x);
  ad::Var s = ad::div(d, ad::smooth_abs(d, eps_));
  return fidelity + ad::scale(grad_.adjoint(s), lambda_);
}

std::optional<double> TvProblem::minimum_value() const {
  if (lambda_ == 0.0) return 0.0;
  return std::nullopt;
}

std::optional<Vector> TvProblem::minimizer() const {
  if (lambda_ == 0.0 && !has_mask_) return y_;
  return std::nullopt;
}

// ---------------------------------------------------------------------------------------
// SVM

SvmHingeProblem::SvmHingeProblem(Matrix features, Vector labels, double c)
    : features_(std::make_shared<const Matrix>(std::move(features))), labels_(std::move(labels)), c_(c) {
  if (features_->rows() < 1) throw DimensionError("svm: need at least one sample");
  if (features_->rows() != labels_.size()) throw DimensionError("svm: feature rows != label count");
  if (((labels_.array() != 1.0) && (labels_.array() != -1.0)).any()) throw ConfigError("svm: labels must be +-1");
  if (!(c_ > 0.0)) throw ConfigError("svm: C must be positive");
}

Vector SvmHingeProblem::active_set(const Vector& x) const {
  const Index n = features_->cols();
  const Vector margin = labels_.cwiseProduct((*features_ * x.head(n)).array().matrix() +
                                             Vector::Constant(labels_.size(), x[n]));
  return ((1.0 - margin.array()) > 0.0).cast<double>().matrix();
}

double SvmHingeProblem::eval_objective(const Vector& x) const {
  const Index n = features_->cols();
  const Vector score = (*features_ * x.head(n)).array() + x[n];
  const Vector hinge = (1.0 - labels_.cwiseProduct(score).array()).max(0.0).matrix();
  return 0.5 * x.head(n).squaredNorm() + c_ / static_cast<double>(labels_.size()) * hinge.sum();
}

Vector SvmHingeProblem::eval_gradient(const Vector& x) const {
  const Index n = features_->cols();
  const Vector ya = labels_.cwiseProduct(active_set(x));
  const double k = c_ / static_cast<double>(labels_.size());
  Vector g(n + 1);
  g.head(n) = x.head(n) - k * features_->transpose() * ya;
  g[n] = -k * ya.sum();
  return g;
}

ad::Var SvmHingeProblem::objective(ad::Tape& tape, ad::Var x) const {
  check_dim(x.size(), "objective");
  const Index n = features_->cols();
  const Index m = features_->rows();
  ad::Var w = ad::slice(x, 0, n);
  ad::Var b = ad::slice(x, n, 1);
  ad::Var score = ad::matmul(tape.constant(features_), w) + ad::scalar_mul(b, tape.constant(Matrix(Matrix::Ones(m, 1))));
  ad::Var hinge = ad::relu(ad::shift(ad::neg(ad::mul(tape.constant(Matrix(labels_)), score)), 1.0));
  return ad::scale(ad::dot(w, w), 0.5) + ad::scale(ad::sum(hinge), c_ / static_cast<double>(m));
}

ad::Var SvmHingeProblem::gradient(ad::Tape& tape, ad::Var x) const {
  check_dim(x.size(), "gradient");
  const Index n = features_->cols();
  // The hinge part is piecewise constant in x; only the regularizer contributes curvature.
  const Vector ya = labels_.cwiseProduct(active_set(x.vector()));
  const double k = c_ / static_cast<double>(labels_.size());
  Matrix shift(n + 1, 1);
  shift.topRows(n) = -k * features_->transpose() * ya;
  shift(n, 0) = -k * ya.sum();
  Matrix keep = Matrix::Ones(n + 1, 1);
  keep(n, 0) = 0.0;
  return ad::mask_positive(x, keep) + tape.constant(std::move(shift));
}

std::shared_ptr<const Problem> SvmHingeProblem::subproblem(std::span<const Index> samples) const {
  if (samples.empty()) throw ConfigError("svm: empty batch");
  Matrix f(static_cast<Index>(samples.size()), features_->cols());
  Vector y(static_cast<Index>(samples.size()));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    f.row(static_cast<Index>(i)) = features_->row(samples[i]);
    y[static_cast<Index>(i)] = labels_[samples[i]];
  }
  return std::make_shared<SvmHingeProblem>(std::move(f), std::move(y), c_);
}

}  // namespace mirror_opt
