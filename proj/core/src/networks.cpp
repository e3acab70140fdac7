#include "mirror_opt/networks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "mirror_opt/error.hpp"

namespace mirror_opt {

namespace {

// Problems up to this many samples keep their batch materialized; larger ones are
// evaluated in chunks.
constexpr std::size_t kCacheLimit = 4096;
constexpr std::size_t kChunk = 2048;

std::vector<Index> all_indices(Index n) {
  std::vector<Index> v(static_cast<std::size_t>(n));
  std::iota(v.begin(), v.end(), Index{0});
  return v;
}

void check_subset(const std::vector<Index>& subset, Index n) {
  if (subset.empty()) throw ConfigError("classifier: empty sample set");
  for (Index i : subset) {
    if (i < 0 || i >= n) throw DimensionError(fmt::format("classifier: sample {} out of range", i));
  }
}

Matrix make_targets(const ClassificationData& data, const std::vector<Index>& subset, std::size_t begin,
                    std::size_t end, Index outputs) {
  const Index n = static_cast<Index>(end - begin);
  if (outputs == 1) {
    Matrix t(1, n);
    for (Index j = 0; j < n; ++j) {
      const int label = data.labels[static_cast<std::size_t>(subset[begin + static_cast<std::size_t>(j)])];
      if (label != 0 && label != 1) throw ConfigError("single-output classifier needs labels 0/1");
      t(0, j) = label;
    }
    return t;
  }
  Matrix t = Matrix::Zero(outputs, n);
  for (Index j = 0; j < n; ++j) {
    const int label = data.labels[static_cast<std::size_t>(subset[begin + static_cast<std::size_t>(j)])];
    if (label < 0 || label >= outputs) throw ConfigError(fmt::format("label {} outside {} classes", label, outputs));
    t(label, j) = 1.0;
  }
  return t;
}

// Mean cross-entropy and its derivative with respect to the logits.
std::pair<ad::Var, ad::Var> output_loss(ad::Var logits, ad::Var targets, bool want_grad) {
  const double inv_n = 1.0 / static_cast<double>(logits.cols());
  if (logits.rows() == 1) {
    ad::Var loss = ad::scale(ad::sum(ad::softplus(logits) - ad::mul(targets, logits)), inv_n);
    ad::Var delta = want_grad ? ad::scale(ad::sigmoid(logits) - targets, inv_n) : ad::Var();
    return {loss, delta};
  }
  ad::Var ls = ad::log_softmax_cols(logits);
  ad::Var loss = ad::scale(ad::sum(ad::mul(targets, ls)), -inv_n);
  ad::Var delta = want_grad ? ad::scale(ad::exp(ls) - targets, inv_n) : ad::Var();
  return {loss, delta};
}

}  // namespace

// ---------------------------------------------------------------------------------------
// Architectures

void DenseArchitecture::validate() const {
  if (layer_sizes.size() < 2) throw ConfigError("dense architecture needs at least input and output sizes");
  for (Index s : layer_sizes) {
    if (s < 1) throw ConfigError("dense architecture layer sizes must be positive");
  }
}

Index DenseArchitecture::num_params() const {
  Index n = 0;
  for (Index l = 1; l <= num_layers(); ++l) {
    n += layer_sizes[static_cast<std::size_t>(l)] * (layer_sizes[static_cast<std::size_t>(l - 1)] + 1);
  }
  return n;
}

Index DenseArchitecture::weight_offset(Index layer) const {
  Index n = 0;
  for (Index l = 1; l < layer; ++l) {
    n += layer_sizes[static_cast<std::size_t>(l)] * (layer_sizes[static_cast<std::size_t>(l - 1)] + 1);
  }
  return n;
}

Index DenseArchitecture::bias_offset(Index layer) const {
  return weight_offset(layer) +
         layer_sizes[static_cast<std::size_t>(layer)] * layer_sizes[static_cast<std::size_t>(layer - 1)];
}

Index DenseArchitecture::weight_index(Index layer, Index p, Index q) const {
  return weight_offset(layer) + p + layer_sizes[static_cast<std::size_t>(layer)] * q;
}

Index DenseArchitecture::bias_index(Index layer, Index p) const { return bias_offset(layer) + p; }

void ConvArchitecture::validate() const {
  if (image_size < kernel || channels < 1 || kernel < 1 || pool < 1 || classes < 1 || pooled_size() < 1) {
    throw ConfigError("invalid convolutional architecture");
  }
}

Index ConvArchitecture::num_params() const {
  return channels * kernel * kernel + channels + classes * features() + classes;
}

Vector init_dense_params(const DenseArchitecture& arch, std::mt19937_64& rng) {
  arch.validate();
  Vector x(arch.num_params());
  for (Index l = 1; l <= arch.num_layers(); ++l) {
    const double bound = 1.0 / static_cast<double>(arch.layer_sizes[static_cast<std::size_t>(l - 1)]);
    std::uniform_real_distribution<double> u(-bound, bound);
    const Index begin = arch.weight_offset(l);
    const Index end = l == arch.num_layers() ? x.size() : arch.weight_offset(l + 1);
    for (Index i = begin; i < end; ++i) x[i] = u(rng);
  }
  return x;
}

Vector init_conv_params(const ConvArchitecture& arch, std::mt19937_64& rng) {
  arch.validate();
  Vector x(arch.num_params());
  std::uniform_real_distribution<double> conv(-1.0 / static_cast<double>(arch.kernel * arch.kernel),
                                              1.0 / static_cast<double>(arch.kernel * arch.kernel));
  for (Index i = 0; i < arch.dense_offset(); ++i) x[i] = conv(rng);
  std::uniform_real_distribution<double> dense(-1.0 / static_cast<double>(arch.features()),
                                               1.0 / static_cast<double>(arch.features()));
  for (Index i = arch.dense_offset(); i < x.size(); ++i) x[i] = dense(rng);
  return x;
}

// ---------------------------------------------------------------------------------------
// Dense classifier

DenseClassifier::DenseClassifier(DenseArchitecture arch, std::shared_ptr<const ClassificationData> data)
    : DenseClassifier(arch, data, all_indices(data ? data->size() : 0)) {}

DenseClassifier::DenseClassifier(DenseArchitecture arch, std::shared_ptr<const ClassificationData> data,
                                 std::vector<Index> subset)
    : arch_(std::move(arch)), data_(std::move(data)), subset_(std::move(subset)) {
  arch_.validate();
  if (!data_) throw ConfigError("classifier: missing data");
  if (data_->feature_dim() != arch_.layer_sizes.front()) {
    throw DimensionError(fmt::format("classifier: data has {} features, network expects {}", data_->feature_dim(),
                                     arch_.layer_sizes.front()));
  }
  if (static_cast<Index>(data_->labels.size()) != data_->size()) throw DimensionError("classifier: label count");
  check_subset(subset_, data_->size());
  if (subset_.size() <= kCacheLimit) cached_ = batch(0, subset_.size());
}

DenseClassifier::Batch DenseClassifier::batch(std::size_t begin, std::size_t end) const {
  Matrix inputs(data_->feature_dim(), static_cast<Index>(end - begin));
  for (std::size_t j = begin; j < end; ++j) {
    inputs.col(static_cast<Index>(j - begin)) = data_->features.col(subset_[j]).cast<double>();
  }
  return Batch{std::make_shared<const Matrix>(std::move(inputs)),
               std::make_shared<const Matrix>(make_targets(*data_, subset_, begin, end, arch_.layer_sizes.back()))};
}

std::pair<ad::Var, ad::Var> DenseClassifier::evaluate(ad::Tape& tape, ad::Var x, const Batch& b,
                                                      bool want_grad) const {
  const Index layers = arch_.num_layers();
  std::vector<ad::Var> weights, pre, act;
  act.push_back(tape.constant(b.inputs));
  for (Index l = 1; l <= layers; ++l) {
    const Index rows = arch_.layer_sizes[static_cast<std::size_t>(l)];
    const Index cols = arch_.layer_sizes[static_cast<std::size_t>(l - 1)];
    ad::Var a = ad::reshape(ad::slice(x, arch_.weight_offset(l), rows * cols), rows, cols);
    ad::Var bias = ad::slice(x, arch_.bias_offset(l), rows);
    ad::Var z = ad::add_colwise(ad::matmul(a, act.back()), bias);
    weights.push_back(a);
    pre.push_back(z);
    act.push_back(l < layers ? ad::relu(z) : z);
  }
  auto [loss, delta] = output_loss(act.back(), tape.constant(b.targets), want_grad);
  if (!want_grad) return {loss, ad::Var()};
  std::vector<ad::Var> parts(static_cast<std::size_t>(2 * layers));
  for (Index l = layers; l >= 1; --l) {
    const auto i = static_cast<std::size_t>(l - 1);
    parts[2 * i] = ad::matmul_nt(delta, act[i]);
    parts[2 * i + 1] = ad::sum_cols(delta);
    if (l > 1) delta = ad::mask_positive(ad::matmul_tn(weights[i], delta), pre[i - 1].value());
  }
  return {loss, ad::concat(parts)};
}

ad::Var DenseClassifier::objective(ad::Tape& tape, ad::Var x) const {
  check_dim(x.size(), "objective");
  const Batch b = cached_.inputs ? cached_ : batch(0, subset_.size());
  return evaluate(tape, x, b, false).first;
}

ad::Var DenseClassifier::gradient(ad::Tape& tape, ad::Var x) const {
  check_dim(x.size(), "gradient");
  const Batch b = cached_.inputs ? cached_ : batch(0, subset_.size());
  return evaluate(tape, x, b, true).second;
}

double DenseClassifier::eval_objective(const Vector& x) const {
  if (cached_.inputs) {
    ad::Tape tape;
    return evaluate(tape, tape.constant(Matrix(x)), cached_, false).first.scalar();
  }
  double total = 0.0;
  for (std::size_t begin = 0; begin < subset_.size(); begin += kChunk) {
    const std::size_t end = std::min(subset_.size(), begin + kChunk);
    ad::Tape tape;
    total += evaluate(tape, tape.constant(Matrix(x)), batch(begin, end), false).first.scalar() *
             static_cast<double>(end - begin);
  }
  return total / static_cast<double>(subset_.size());
}

Vector DenseClassifier::eval_gradient(const Vector& x) const {
  if (cached_.inputs) {
    ad::Tape tape;
    return evaluate(tape, tape.constant(Matrix(x)), cached_, true).second.vector();
  }
  Vector total = Vector::Zero(x.size());
  for (std::size_t begin = 0; begin < subset_.size(); begin += kChunk) {
    const std::size_t end = std::min(subset_.size(), begin + kChunk);
    ad::Tape tape;
    total += evaluate(tape, tape.constant(Matrix(x)), batch(begin, end), true).second.vector() *
             static_cast<double>(end - begin);
  }
  return total / static_cast<double>(subset_.size());
}

std::shared_ptr<const Problem> DenseClassifier::subproblem(std::span<const Index> samples) const {
  if (samples.empty()) throw ConfigError("classifier: empty batch");
  std::vector<Index> sub;
  sub.reserve(samples.size());
  for (Index s : samples) {
    if (s < 0 || s >= num_samples()) throw DimensionError("classifier: batch index out of range");
    sub.push_back(subset_[static_cast<std::size_t>(s)]);
  }
  return std::make_shared<DenseClassifier>(arch_, data_, std::move(sub));
}

Matrix DenseClassifier::logits(const Vector& x, const Matrix& inputs) const {
  check_dim(x.size(), "logits");
  Matrix h = inputs;
  for (Index l = 1; l <= arch_.num_layers(); ++l) {
    const Index rows = arch_.layer_sizes[static_cast<std::size_t>(l)];
    const Index cols = arch_.layer_sizes[static_cast<std::size_t>(l - 1)];
    const Eigen::Map<const Matrix> a(x.data() + arch_.weight_offset(l), rows, cols);
    Matrix z = (a * h).colwise() + x.segment(arch_.bias_offset(l), rows);
    h = l < arch_.num_layers() ? Matrix(z.cwiseMax(0.0)) : z;
  }
  return h;
}

double DenseClassifier::accuracy(const Vector& x) const {
  Index correct = 0;
  for (std::size_t begin = 0; begin < subset_.size(); begin += kChunk) {
    const std::size_t end = std::min(subset_.size(), begin + kChunk);
    const Batch b = batch(begin, end);
    const Matrix z = logits(x, *b.inputs);
    for (Index j = 0; j < z.cols(); ++j) {
      const int label = data_->labels[static_cast<std::size_t>(subset_[begin + static_cast<std::size_t>(j)])];
      Index guess = 0;
      if (z.rows() == 1) {
        guess = z(0, j) > 0.0 ? 1 : 0;
      } else {
        z.col(j).maxCoeff(&guess);
      }
      correct += guess == label ? 1 : 0;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(subset_.size());
}

// ---------------------------------------------------------------------------------------
// Convolutional classifier

ConvClassifier::ConvClassifier(ConvArchitecture arch, std::shared_ptr<const ClassificationData> data)
    : ConvClassifier(arch, data, all_indices(data ? data->size() : 0)) {}

ConvClassifier::ConvClassifier(ConvArchitecture arch, std::shared_ptr<const ClassificationData> data,
                               std::vector<Index> subset)
    : arch_(arch), data_(std::move(data)), subset_(std::move(subset)) {
  arch_.validate();
  if (!data_) throw ConfigError("classifier: missing data");
  if (data_->feature_dim() != arch_.image_size * arch_.image_size) {
    throw DimensionError(fmt::format("conv classifier: data has {} features, expected {}x{} images",
                                     data_->feature_dim(), arch_.image_size, arch_.image_size));
  }
  check_subset(subset_, data_->size());
  if (subset_.size() <= kCacheLimit) cached_ = batch(0, subset_.size());
}

ConvClassifier::Batch ConvClassifier::batch(std::size_t begin, std::size_t end) const {
  const Index s = arch_.image_size;
  const Index k = arch_.kernel;
  const Index c = arch_.conv_size();
  const Index positions = c * c;
  const Index n = static_cast<Index>(end - begin);
  Matrix cols(k * k, positions * n);
  for (Index j = 0; j < n; ++j) {
    const auto img = data_->features.col(subset_[begin + static_cast<std::size_t>(j)]);
    for (Index pi = 0; pi < c; ++pi) {
      for (Index pj = 0; pj < c; ++pj) {
        const Index col = pi * c + pj + positions * j;
        for (Index u = 0; u < k; ++u) {
          for (Index v = 0; v < k; ++v) cols(u * k + v, col) = img((pi + u) * s + (pj + v));
        }
      }
    }
  }
  Batch b;
  b.columns = std::make_shared<const Matrix>(std::move(cols));
  b.targets = std::make_shared<const Matrix>(make_targets(*data_, subset_, begin, end, arch_.classes));
  b.count = n;
  return b;
}

std::pair<ad::Var, ad::Var> ConvClassifier::evaluate(ad::Tape& tape, ad::Var x, const Batch& b,
                                                     bool want_grad) const {
  const Index ch = arch_.channels;
  const Index kk = arch_.kernel * arch_.kernel;
  const Index c = arch_.conv_size();
  const Index ps = arch_.pooled_size();
  const Index positions = c * c;
  const Index feats = arch_.features();
  const Index n = b.count;

  ad::Var columns = tape.constant(b.columns);
  ad::Var kernel = ad::reshape(ad::slice(x, arch_.kernel_offset(), ch * kk), ch, kk);
  ad::Var conv_bias = ad::slice(x, arch_.conv_bias_offset(), ch);
  ad::Var conv = ad::add_colwise(ad::matmul(kernel, columns), conv_bias);
  ad::Var act = ad::relu(conv);

  // Max-pooling as a gather of the first maximal entry in each window.
  const Matrix& av = act.value();
  auto index = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(feats * n));
  for (Index j = 0; j < n; ++j) {
    for (Index ci = 0; ci < ch; ++ci) {
      for (Index qi = 0; qi < ps; ++qi) {
        for (Index qj = 0; qj < ps; ++qj) {
          Index best = -1;
          double best_value = 0.0;
          for (Index a = 0; a < arch_.pool; ++a) {
            for (Index bb = 0; bb < arch_.pool; ++bb) {
              const Index pos = (qi * arch_.pool + a) * c + (qj * arch_.pool + bb);
              const Index flat = ci + ch * (pos + positions * j);
              if (best < 0 || av.data()[flat] > best_value) {
                best = flat;
                best_value = av.data()[flat];
              }
            }
          }
          (*index)[static_cast<std::size_t>(ci * ps * ps + qi * ps + qj + feats * j)] = best;
        }
      }
    }
  }
  std::shared_ptr<const std::vector<Index>> pool_index = std::move(index);
  ad::Var pooled = ad::gather(act, pool_index, feats, n);
  ad::Var dense = ad::reshape(ad::slice(x, arch_.dense_offset(), arch_.classes * feats), arch_.classes, feats);
  ad::Var dense_bias = ad::slice(x, arch_.dense_bias_offset(), arch_.classes);
  ad::Var logits = ad::add_colwise(ad::matmul(dense, pooled), dense_bias);

  auto [loss, delta] = output_loss(logits, tape.constant(b.targets), want_grad);
  if (!want_grad) return {loss, ad::Var()};
  ad::Var g_dense = ad::matmul_nt(delta, pooled);
  ad::Var g_dense_bias = ad::sum_cols(delta);
  ad::Var d_pooled = ad::matmul_tn(dense, delta);
  ad::Var d_act = ad::scatter_add(d_pooled, pool_index, ch, positions * n);
  ad::Var d_conv = ad::mask_positive(d_act, conv.value());
  ad::Var g_kernel = ad::matmul_nt(d_conv, columns);
  ad::Var g_conv_bias = ad::sum_cols(d_conv);
  const std::vector<ad::Var> parts{g_kernel, g_conv_bias, g_dense, g_dense_bias};
  return {loss, ad::concat(parts)};
}

ad::Var ConvClassifier::objective(ad::Tape& tape, ad::Var x) const {
  check_dim(x.size(), "objective");
  const Batch b = cached_.columns ? cached_ : batch(0, subset_.size());
  return evaluate(tape, x, b, false).first;
}

ad::Var ConvClassifier::gradient(ad::Tape& tape, ad::Var x) const {
  check_dim(x.size(), "gradient");
  const Batch b = cached_.columns ? cached_ : batch(0, subset_.size());
  return evaluate(tape, x, b, true).second;
}

double ConvClassifier::eval_objective(const Vector& x) const {
  if (cached_.columns) {
    ad::Tape tape;
    return evaluate(tape, tape.constant(Matrix(x)), cached_, false).first.scalar();
  }
  double total = 0.0;
  for (std::size_t begin = 0; begin < subset_.size(); begin += kChunk) {
    const std::size_t end = std::min(subset_.size(), begin + kChunk);
    ad::Tape tape;
    total += evaluate(tape, tape.constant(Matrix(x)), batch(begin, end), false).first.scalar() *
             static_cast<double>(end - begin);
  }
  return total / static_cast<double>(subset_.size());
}

Vector ConvClassifier::eval_gradient(const Vector& x) const {
  if (cached_.columns) {
    ad::Tape tape;
    return evaluate(tape, tape.constant(Matrix(x)), cached_, true).second.vector();
  }
  Vector total = Vector::Zero(x.size());
  for (std::size_t begin = 0; begin < subset_.size(); begin += kChunk) {
    const std::size_t end = std::min(subset_.size(), begin + kChunk);
    ad::Tape tape;
    total += evaluate(tape, tape.constant(Matrix(x)), batch(begin, end), true).second.vector() *
             static_cast<double>(end - begin);
  }
  return total / static_cast<double>(subset_.size());
}

std::shared_ptr<const Problem> ConvClassifier::subproblem(std::span<const Index> samples) const {
  if (samples.empty()) throw ConfigError("classifier: empty batch");
  std::vector<Index> sub;
  sub.reserve(samples.size());
  for (Index s : samples) {
    if (s < 0 || s >= num_samples()) throw DimensionError("classifier: batch index out of range");
    sub.push_back(subset_[static_cast<std::size_t>(s)]);
  }
  return std::make_shared<ConvClassifier>(arch_, data_, std::move(sub));
}

Matrix ConvClassifier::logits(const Vector& x, std::span<const Index> samples) const {
  check_dim(x.size(), "logits");
  std::vector<Index> sub(samples.begin(), samples.end());
  ConvClassifier view(arch_, data_, std::move(sub));
  const Batch b = view.batch(0, view.subset_.size());
  const Index ch = arch_.channels;
  const Index kk = arch_.kernel * arch_.kernel;
  Matrix conv = (Eigen::Map<const Matrix>(x.data(), ch, kk) * *b.columns).colwise() + x.segment(ch * kk, ch);
  conv = conv.cwiseMax(0.0);
  const Index c = arch_.conv_size();
  const Index ps = arch_.pooled_size();
  const Index positions = c * c;
  Matrix pooled(arch_.features(), b.count);
  for (Index j = 0; j < b.count; ++j) {
    for (Index ci = 0; ci < ch; ++ci) {
      for (Index qi = 0; qi < ps; ++qi) {
        for (Index qj = 0; qj < ps; ++qj) {
          double m = -std::numeric_limits<double>::infinity();
          for (Index a = 0; a < arch_.pool; ++a) {
            for (Index bb = 0; bb < arch_.pool; ++bb) {
              const Index pos = (qi * arch_.pool + a) * c + (qj * arch_.pool + bb);
              m = std::max(m, conv(ci, pos + positions * j));
            }
          }
          pooled(ci * ps * ps + qi * ps + qj, j) = m;
        }
      }
    }
  }
  const Eigen::Map<const Matrix> dense(x.data() + arch_.dense_offset(), arch_.classes, arch_.features());
  return (dense * pooled).colwise() + x.segment(arch_.dense_bias_offset(), arch_.classes);
}

}  // namespace mirror_opt
