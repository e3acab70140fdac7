#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string_view>

#include "mirror_opt/autodiff.hpp"
#include "mirror_opt/types.hpp"

namespace mirror_opt {

enum class ProblemKind { kDenoiseTv, kInpaintTv, kSvmHinge, kMlpClassify, kCnnClassify, kQuadratic };

std::string_view to_string(ProblemKind kind);
ProblemKind problem_kind_from_string(std::string_view name);

/// Objective f: R^n -> R with an exact (sub)gradient.
///
/// Each problem offers two evaluation paths: plain values for running optimizers, and
/// tape expressions for both f and grad f so meta-training can differentiate through
/// gradient steps.
class Problem {
 public:
  virtual ~Problem() = default;

  virtual ProblemKind kind() const = 0;
  virtual Index dim() const = 0;

  double objective(const Vector& x) const;
  Vector gradient(const Vector& x) const;

  virtual ad::Var objective(ad::Tape& tape, ad::Var x) const = 0;
  virtual ad::Var gradient(ad::Tape& tape, ad::Var x) const = 0;

  virtual std::optional<double> minimum_value() const { return std::nullopt; }
  virtual std::optional<Vector> minimizer() const { return std::nullopt; }

  /// Number of summands for finite-sum objectives, 0 otherwise.
  virtual Index num_samples() const { return 0; }
  /// The same objective restricted to the given summands, rescaled to stay unbiased.
  virtual std::shared_ptr<const Problem> subproblem(std::span<const Index> samples) const;

 protected:
  virtual double eval_objective(const Vector& x) const = 0;
  virtual Vector eval_gradient(const Vector& x) const = 0;
  void check_dim(Index n, const char* what) const;
};

/// f(x) = 0.5 x^T diag(a) x + b^T x.
class QuadraticProblem final : public Problem {
 public:
  QuadraticProblem(Vector a, Vector b);
  /// b = 0.
  explicit QuadraticProblem(Vector a);

  ProblemKind kind() const override { return ProblemKind::kQuadratic; }
  Index dim() const override { return a_.size(); }
  using Problem::gradient;
  using Problem::objective;
  ad::Var objective(ad::Tape& tape, ad::Var x) const override;
  ad::Var gradient(ad::Tape& tape, ad::Var x) const override;
  std::optional<double> minimum_value() const override;
  std::optional<Vector> minimizer() const override;

  const Vector& curvature() const { return a_; }
  const Vector& linear_term() const { return b_; }

 protected:
  double eval_objective(const Vector& x) const override;
  Vector eval_gradient(const Vector& x) const override;

 private:
  Vector a_;
  Vector b_;
};

/// Quadratic with shared diagonal and b ~ N(0, I) drawn from the seed.
std::shared_ptr<QuadraticProblem> sample_quadratic_family(const Vector& shared_diag, std::uint64_t seed);

/// Forward differences with zero flux at the last row/column, stacked as
/// [horizontal differences; vertical differences] over column-major H x W images.
class ImageGradient {
 public:
  ImageGradient(Index height, Index width);
  Index height() const { return h_; }
  Index width() const { return w_; }
  Index num_pixels() const { return h_ * w_; }
  Index num_differences() const { return h_ * (w_ - 1) + (h_ - 1) * w_; }
  Vector apply(const Vector& x) const;
  Vector adjoint(const Vector& d) const;
  ad::Var apply(ad::Var x) const;
  ad::Var adjoint(ad::Var d) const;

 private:
  Index h_;
  Index w_;
};

/// f(x) = ||M o (x - y)||^2 + lambda sum_j sqrt((Dx)_j^2 + eps^2); M = 1 for denoising.
class TvProblem final : public Problem {
 public:
  static constexpr double kDefaultLambda = 0.15;
  static constexpr double kDefaultEps = 1e-8;

  /// Denoising of y (H x W).
  TvProblem(Matrix y, double lambda = kDefaultLambda, double eps = kDefaultEps);
  /// Inpainting of y with binary mask (1 = observed).
  TvProblem(Matrix y, Matrix mask, double lambda = kDefaultLambda, double eps = kDefaultEps);

  ProblemKind kind() const override { return has_mask_ ? ProblemKind::kInpaintTv : ProblemKind::kDenoiseTv; }
  Index dim() const override { return grad_.num_pixels(); }
  using Problem::gradient;
  using Problem::objective;
  ad::Var objective(ad::Tape& tape, ad::Var x) const override;
  ad::Var gradient(ad::Tape& tape, ad::Var x) const override;
  std::optional<double> minimum_value() const override;
  std::optional<Vector> minimizer() const override;

  Index height() const { return grad_.height(); }
  Index width() const { return grad_.width(); }
  double lambda() const { return lambda_; }
  const Vector& observed() const { return y_; }
  double missing_fraction() const;

 protected:
  double eval_objective(const Vector& x) const override;
  Vector eval_gradient(const Vector& x) const override;

 private:
  ImageGradient grad_;
  Vector y_;
  Vector mask_;
  bool has_mask_ = false;
  double lambda_;
  double eps_;
};

/// f(w, b) = 0.5 ||w||^2 + (C/m) sum_i max(0, 1 - y_i (w^T phi_i + b)); x = [w; b].
class SvmHingeProblem final : public Problem {
 public:
  SvmHingeProblem(Matrix features, Vector labels, double c = 1.0);

  ProblemKind kind() const override { return ProblemKind::kSvmHinge; }
  Index dim() const override { return features_->cols() + 1; }
  using Problem::gradient;
  using Problem::objective;
  ad::Var objective(ad::Tape& tape, ad::Var x) const override;
  ad::Var gradient(ad::Tape& tape, ad::Var x) const override;
  Index num_samples() const override { return features_->rows(); }
  std::shared_ptr<const Problem> subproblem(std::span<const Index> samples) const override;

  const Matrix& features() const { return *features_; }
  const Vector& labels() const { return labels_; }
  double c() const { return c_; }

 protected:
  double eval_objective(const Vector& x) const override;
  Vector eval_gradient(const Vector& x) const override;

 private:
  Vector active_set(const Vector& x) const;

  std::shared_ptr<const Matrix> features_;
  Vector labels_;
  double c_;
};

}  // namespace mirror_opt
