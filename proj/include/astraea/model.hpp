#pragma once

// Small differentiable classifiers used by every client: multinomial softmax
// regression and a one-hidden-layer tanh MLP. Both share one flat parameter
// layout so weights can be transmitted and averaged without knowing the model.

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace astraea {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

enum class ModelKind { softmax_regression, mlp };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

/// Architecture descriptor. Determines the length and layout of a
/// ParameterVector.
///
/// Canonical layout (row-major blocks, concatenated in this order):
///   softmax_regression: W[num_classes x input_dim], b[num_classes]
///   mlp:                W1[hidden x input_dim], b1[hidden],
///                       W2[num_classes x hidden], b2[num_classes]
struct ModelArch {
  ModelKind kind = ModelKind::softmax_regression;
  std::size_t input_dim = 0;
  std::size_t hidden_units = 0;  // mlp only
  std::size_t num_classes = 0;

  static ModelArch softmax(std::size_t input_dim, std::size_t num_classes);
  static ModelArch mlp(std::size_t input_dim, std::size_t hidden_units, std::size_t num_classes);

  std::size_t num_params() const;
  void validate() const;

  nlohmann::json to_json() const;
  static ModelArch from_json(const nlohmann::json& j);

  bool operator==(const ModelArch&) const = default;
};

/// Flat model weights tagged with their architecture.
class ParameterVector {
 public:
  ParameterVector() = default;
  /// Throws ConfigError on length mismatch, NumericError on a non-finite entry.
  ParameterVector(ModelArch arch, std::vector<double> values);

  static ParameterVector zeros(const ModelArch& arch);
  /// Deterministic uniform(-0.05, 0.05) initialization.
  static ParameterVector random_uniform(const ModelArch& arch, std::uint64_t seed, double half_width = 0.05);

  const ModelArch& arch() const noexcept { return arch_; }
  std::size_t size() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }

  /// Index of the first non-finite entry, if any.
  std::optional<std::size_t> first_non_finite() const;

  bool operator==(const ParameterVector&) const = default;

 private:
  ModelArch arch_;
  std::vector<double> values_;
};

/// Elementwise a - b; shapes must agree.
ParameterVector difference(const ParameterVector& a, const ParameterVector& b);
/// max_i |a_i - b_i|.
double max_abs_diff(const ParameterVector& a, const ParameterVector& b);

struct Batch {
  Matrix features;          // [batch_size x feature_dim]
  std::vector<int> labels;  // class ids in [0, num_classes)

  /// Throws ConfigError if empty, ragged, or a label is out of range.
  void validate(std::size_t num_classes) const;
};

/// Class-probability matrix [rows x num_classes]; every row sums to 1.
Matrix forward(const ParameterVector& params, const Eigen::Ref<const Matrix>& features);

struct LossAndGrad {
  double loss = 0.0;
  ParameterVector grad;
};

/// Mean categorical cross-entropy over the batch and its gradient.
LossAndGrad loss_and_grad(const ParameterVector& params, const Eigen::Ref<const Matrix>& features,
                          std::span<const int> labels);
LossAndGrad loss_and_grad(const ParameterVector& params, const Batch& batch);

/// Mean cross-entropy only.
double mean_loss(const ParameterVector& params, const Eigen::Ref<const Matrix>& features,
                 std::span<const int> labels);

enum class OptimizerKind { sgd, adam };

std::string to_string(OptimizerKind kind);
OptimizerKind optimizer_kind_from_string(const std::string& name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::sgd;
  double learning_rate = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

/// Per-client optimizer state. Adam moments are sized lazily on the first step.
struct OptimizerState {
  OptimizerConfig config;
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::uint64_t step_count = 0;

  explicit OptimizerState(OptimizerConfig cfg = {});
};

std::pair<ParameterVector, OptimizerState> optimizer_step(const ParameterVector& params,
                                                          const ParameterVector& grad,
                                                          OptimizerState state);

/// argmax per row, ties to the lowest class id.
std::vector<int> predict(const ParameterVector& params, const Eigen::Ref<const Matrix>& features);

double top1_accuracy(const ParameterVector& params, const Eigen::Ref<const Matrix>& features,
                     std::span<const int> labels);

}  // namespace astraea
