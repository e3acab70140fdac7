#pragma once

#include <memory>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "mirror_opt/problems.hpp"

namespace mirror_opt {

/// Labeled samples stored column-wise (features x samples).
struct ClassificationData {
  Eigen::MatrixXf features;
  std::vector<int> labels;
  int num_classes = 0;

  Index size() const { return features.cols(); }
  Index feature_dim() const { return features.rows(); }
};

/// Fully connected ReLU network. Parameters are laid out layer by layer as
/// A_l (column-major, d_l x d_{l-1}) followed by b_l.
struct DenseArchitecture {
  std::vector<Index> layer_sizes;

  Index num_layers() const { return static_cast<Index>(layer_sizes.size()) - 1; }
  Index num_params() const;
  Index weight_offset(Index layer) const;
  Index bias_offset(Index layer) const;
  /// Index of (A_l)_{p,q} in the flat vector; layers count from 1.
  Index weight_index(Index layer, Index p, Index q) const;
  Index bias_index(Index layer, Index p) const;
  void validate() const;
};

/// Single 3x3 valid convolution with C channels, ReLU, 2x2 max-pooling and a dense layer.
/// Layout: K (C x 9), conv bias (C), W (classes x C*pooled), dense bias (classes).
struct ConvArchitecture {
  Index image_size = 14;
  Index channels = 8;
  Index kernel = 3;
  Index pool = 2;
  Index classes = 10;

  Index conv_size() const { return image_size - kernel + 1; }
  Index pooled_size() const { return conv_size() / pool; }
  Index features() const { return channels * pooled_size() * pooled_size(); }
  Index num_params() const;
  Index kernel_offset() const { return 0; }
  Index conv_bias_offset() const { return channels * kernel * kernel; }
  Index dense_offset() const { return conv_bias_offset() + channels; }
  Index dense_bias_offset() const { return dense_offset() + classes * features(); }
  void validate() const;
};

/// Entries of each layer drawn from Uniform(-1/fan_in, 1/fan_in).
Vector init_dense_params(const DenseArchitecture& arch, std::mt19937_64& rng);
Vector init_conv_params(const ConvArchitecture& arch, std::mt19937_64& rng);

/// Mean cross-entropy of a dense classifier. With a single output unit the loss is
/// binary cross-entropy on the logit and labels must be 0 or 1.
class DenseClassifier final : public Problem {
 public:
  DenseClassifier(DenseArchitecture arch, std::shared_ptr<const ClassificationData> data);
  DenseClassifier(DenseArchitecture arch, std::shared_ptr<const ClassificationData> data, std::vector<Index> subset);

  ProblemKind kind() const override { return ProblemKind::kMlpClassify; }
  Index dim() const override { return arch_.num_params(); }
  using Problem::gradient;
  using Problem::objective;
  ad::Var objective(ad::Tape& tape, ad::Var x) const override;
  ad::Var gradient(ad::Tape& tape, ad::Var x) const override;
  Index num_samples() const override { return static_cast<Index>(subset_.size()); }
  std::shared_ptr<const Problem> subproblem(std::span<const Index> samples) const override;

  const DenseArchitecture& architecture() const { return arch_; }
  /// Network outputs (last layer pre-activation) for the given inputs.
  Matrix logits(const Vector& x, const Matrix& inputs) const;
  /// Fraction of samples whose argmax (or sign for one output) matches the label.
  double accuracy(const Vector& x) const;

 protected:
  double eval_objective(const Vector& x) const override;
  Vector eval_gradient(const Vector& x) const override;

 private:
  struct Batch {
    std::shared_ptr<const Matrix> inputs;
    std::shared_ptr<const Matrix> targets;
  };
  Batch batch(std::size_t begin, std::size_t end) const;
  // Returns loss and optionally the gradient as tape nodes over one batch.
  std::pair<ad::Var, ad::Var> evaluate(ad::Tape& tape, ad::Var x, const Batch& b, bool want_grad) const;

  DenseArchitecture arch_;
  std::shared_ptr<const ClassificationData> data_;
  std::vector<Index> subset_;
  Batch cached_;
};

/// Mean softmax cross-entropy of the convolutional classifier on square images.
class ConvClassifier final : public Problem {
 public:
  ConvClassifier(ConvArchitecture arch, std::shared_ptr<const ClassificationData> data);
  ConvClassifier(ConvArchitecture arch, std::shared_ptr<const ClassificationData> data, std::vector<Index> subset);

  ProblemKind kind() const override { return ProblemKind::kCnnClassify; }
  Index dim() const override { return arch_.num_params(); }
  using Problem::gradient;
  using Problem::objective;
  ad::Var objective(ad::Tape& tape, ad::Var x) const override;
  ad::Var gradient(ad::Tape& tape, ad::Var x) const override;
  Index num_samples() const override { return static_cast<Index>(subset_.size()); }
  std::shared_ptr<const Problem> subproblem(std::span<const Index> samples) const override;

  const ConvArchitecture& architecture() const { return arch_; }
  Matrix logits(const Vector& x, std::span<const Index> samples) const;

 protected:
  double eval_objective(const Vector& x) const override;
  Vector eval_gradient(const Vector& x) const override;

 private:
  struct Batch {
    std::shared_ptr<const Matrix> columns;  // im2col patches, kernel^2 x (positions * n)
    std::shared_ptr<const Matrix> targets;
    Index count = 0;
  };
  Batch batch(std::size_t begin, std::size_t end) const;
  std::pair<ad::Var, ad::Var> evaluate(ad::Tape& tape, ad::Var x, const Batch& b, bool want_grad) const;

  ConvArchitecture arch_;
  std::shared_ptr<const ClassificationData> data_;
  std::vector<Index> subset_;
  Batch cached_;
};

}  // namespace mirror_opt
