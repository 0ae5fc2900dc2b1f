#include "astraea/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "astraea/error.hpp"
#include "astraea/random.hpp"

namespace astraea {

namespace {

constexpr double kProbFloor = 1e-12;

using ConstMap = Eigen::Map<const Matrix>;
using ConstVecMap = Eigen::Map<const Vector>;
using MutMap = Eigen::Map<Matrix>;
using MutVecMap = Eigen::Map<Vector>;

// Views into a flat parameter buffer following the canonical layout.
struct SoftmaxView {
  ConstMap weight;
  ConstVecMap bias;
};

struct MlpView {
  ConstMap w1;
  ConstVecMap b1;
  ConstMap w2;
  ConstVecMap b2;
};

SoftmaxView softmax_view(const ModelArch& a, const double* p) {
  const auto n = static_cast<Eigen::Index>(a.num_classes);
  const auto d = static_cast<Eigen::Index>(a.input_dim);
  return {ConstMap(p, n, d), ConstVecMap(p + n * d, n)};
}

MlpView mlp_view(const ModelArch& a, const double* p) {
  const auto n = static_cast<Eigen::Index>(a.num_classes);
  const auto d = static_cast<Eigen::Index>(a.input_dim);
  const auto h = static_cast<Eigen::Index>(a.hidden_units);
  const double* q = p;
  ConstMap w1(q, h, d);
  q += h * d;
  ConstVecMap b1(q, h);
  q += h;
  ConstMap w2(q, n, h);
  q += n * h;
  ConstVecMap b2(q, n);
  return {w1, b1, w2, b2};
}

void check_features(const ModelArch& arch, const Eigen::Ref<const Matrix>& x) {
  if (static_cast<std::size_t>(x.cols()) != arch.input_dim) {
    throw ConfigError("feature dimension " + std::to_string(x.cols()) + " does not match model input_dim " +
                      std::to_string(arch.input_dim));
  }
}

// Row-wise log-sum-exp stabilized softmax in place; returns the row log-normalizers.
Vector softmax_rows(Matrix& logits) {
  Vector lse(logits.rows());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    auto row = logits.row(i);
    const double m = row.maxCoeff();
    row.array() -= m;
    row = row.array().exp().matrix();
    const double s = row.sum();
    row /= s;
    lse(i) = m + std::log(s);
  }
  return lse;
}

struct ForwardCache {
  Matrix hidden;  // mlp only
  Matrix logits;  // pre-softmax
};

ForwardCache compute_logits(const ParameterVector& params, const Eigen::Ref<const Matrix>& x) {
  const ModelArch& arch = params.arch();
  ForwardCache cache;
  if (arch.kind == ModelKind::softmax_regression) {
    auto v = softmax_view(arch, params.values().data());
    cache.logits = x * v.weight.transpose();
    cache.logits.rowwise() += v.bias.transpose();
  } else {
    auto v = mlp_view(arch, params.values().data());
    cache.hidden = x * v.w1.transpose();
    cache.hidden.rowwise() += v.b1.transpose();
    cache.hidden = cache.hidden.array().tanh().matrix();
    cache.logits = cache.hidden * v.w2.transpose();
    cache.logits.rowwise() += v.b2.transpose();
  }
  return cache;
}

void check_labels(std::span<const int> labels, std::size_t rows, std::size_t num_classes) {
  if (labels.size() != rows) {
    throw ConfigError("label count " + std::to_string(labels.size()) + " does not match feature rows " +
                      std::to_string(rows));
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
      throw ConfigError("label " + std::to_string(labels[i]) + " at row " + std::to_string(i) +
                        " outside [0, " + std::to_string(num_classes) + ")");
    }
  }
}

void check_finite(const Eigen::Ref<const Matrix>& x, const char* what) {
  const double* p = x.data();
  const auto n = static_cast<std::size_t>(x.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(p[i])) throw NumericError(std::string("non-finite ") + what, i);
  }
}

}  // namespace

std::string to_string(ModelKind kind) {
  return kind == ModelKind::softmax_regression ? "softmax" : "mlp";
}

ModelKind model_kind_from_string(const std::string& name) {
  if (name == "softmax" || name == "softmax_regression") return ModelKind::softmax_regression;
  if (name == "mlp") return ModelKind::mlp;
  throw ConfigError("unknown model kind '" + name + "' (expected softmax|mlp)");
}

ModelArch ModelArch::softmax(std::size_t input_dim, std::size_t num_classes) {
  ModelArch a{ModelKind::softmax_regression, input_dim, 0, num_classes};
  a.validate();
  return a;
}

ModelArch ModelArch::mlp(std::size_t input_dim, std::size_t hidden_units, std::size_t num_classes) {
  ModelArch a{ModelKind::mlp, input_dim, hidden_units, num_classes};
  a.validate();
  return a;
}

std::size_t ModelArch::num_params() const {
  if (kind == ModelKind::softmax_regression) return num_classes * input_dim + num_classes;
  return hidden_units * input_dim + hidden_units + num_classes * hidden_units + num_classes;
}

void ModelArch::validate() const {
  if (input_dim == 0) throw ConfigError("model input_dim must be >= 1");
  if (num_classes < 2) throw ConfigError("model num_classes must be >= 2");
  if (kind == ModelKind::mlp && hidden_units == 0) throw ConfigError("mlp hidden_units must be >= 1");
}

nlohmann::json ModelArch::to_json() const {
  nlohmann::json j{{"kind", to_string(kind)}, {"input_dim", input_dim}, {"num_classes", num_classes}};
  if (kind == ModelKind::mlp) j["hidden_units"] = hidden_units;
  j["num_params"] = num_params();
  return j;
}

ModelArch ModelArch::from_json(const nlohmann::json& j) {
  ModelArch a;
  a.kind = model_kind_from_string(j.at("kind").get<std::string>());
  a.input_dim = j.at("input_dim").get<std::size_t>();
  a.num_classes = j.at("num_classes").get<std::size_t>();
  a.hidden_units = j.value("hidden_units", std::size_t{0});
  a.validate();
  return a;
}

ParameterVector::ParameterVector(ModelArch arch, std::vector<double> values)
    : arch_(arch), values_(std::move(values)) {
  if (values_.size() != arch_.num_params()) {
    throw ConfigError("parameter vector has " + std::to_string(values_.size()) + " entries, architecture needs " +
                      std::to_string(arch_.num_params()));
  }
  if (auto bad = first_non_finite()) throw NumericError("non-finite parameter", *bad);
}

ParameterVector ParameterVector::zeros(const ModelArch& arch) {
  return ParameterVector(arch, std::vector<double>(arch.num_params(), 0.0));
}

ParameterVector ParameterVector::random_uniform(const ModelArch& arch, std::uint64_t seed, double half_width) {
  Rng rng(derive_seed(seed, {stream::kInit}));
  std::uniform_real_distribution<double> dist(-half_width, half_width);
  std::vector<double> v(arch.num_params());
  for (double& x : v) x = dist(rng);
  return ParameterVector(arch, std::move(v));
}

std::optional<std::size_t> ParameterVector::first_non_finite() const {
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) return i;
  }
  return std::nullopt;
}

ParameterVector difference(const ParameterVector& a, const ParameterVector& b) {
  if (a.arch() != b.arch()) throw ConfigError("parameter vectors have different architectures");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return ParameterVector(a.arch(), std::move(out));
}

double max_abs_diff(const ParameterVector& a, const ParameterVector& b) {
  if (a.size() != b.size()) throw ConfigError("parameter vectors differ in length");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

void Batch::validate(std::size_t num_classes) const {
  if (features.rows() == 0) throw ConfigError("batch must contain at least one sample");
  check_labels(labels, static_cast<std::size_t>(features.rows()), num_classes);
}

Matrix forward(const ParameterVector& params, const Eigen::Ref<const Matrix>& features) {
  check_features(params.arch(), features);
  ForwardCache cache = compute_logits(params, features);
  softmax_rows(cache.logits);
  return std::move(cache.logits);
}

LossAndGrad loss_and_grad(const ParameterVector& params, const Eigen::Ref<const Matrix>& features,
                          std::span<const int> labels) {
  const ModelArch& arch = params.arch();
  check_features(arch, features);
  if (features.rows() == 0) throw ConfigError("batch must contain at least one sample");
  check_labels(labels, static_cast<std::size_t>(features.rows()), arch.num_classes);
  check_finite(features, "feature");

  ForwardCache cache = compute_logits(params, features);
  check_finite(cache.logits, "logit");
  Matrix logits = cache.logits;
  const Vector lse = softmax_rows(cache.logits);
  Matrix& probs = cache.logits;

  const auto rows = features.rows();
  const double inv_b = 1.0 / static_cast<double>(rows);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < rows; ++i) {
    const double log_p = logits(i, labels[static_cast<std::size_t>(i)]) - lse(i);
    loss -= std::max(log_p, std::log(kProbFloor));
  }
  loss *= inv_b;
  if (!std::isfinite(loss)) throw NumericError("non-finite loss", 0);

  // dL/dlogits = (softmax - onehot) / B
  Matrix delta = probs;
  for (Eigen::Index i = 0; i < rows; ++i) delta(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
  delta *= inv_b;

  std::vector<double> g(arch.num_params(), 0.0);
  const auto n = static_cast<Eigen::Index>(arch.num_classes);
  const auto d = static_cast<Eigen::Index>(arch.input_dim);
  if (arch.kind == ModelKind::softmax_regression) {
    MutMap(g.data(), n, d).noalias() = delta.transpose() * features;
    MutVecMap(g.data() + n * d, n) = delta.colwise().sum().transpose();
  } else {
    const auto h = static_cast<Eigen::Index>(arch.hidden_units);
    auto v = mlp_view(arch, params.values().data());
    double* q = g.data();
    double* gw1 = q;
    double* gb1 = gw1 + h * d;
    double* gw2 = gb1 + h;
    double* gb2 = gw2 + n * h;
    MutMap(gw2, n, h).noalias() = delta.transpose() * cache.hidden;
    MutVecMap(gb2, n) = delta.colwise().sum().transpose();
    Matrix dz = (delta * v.w2).array() * (1.0 - cache.hidden.array().square());
    MutMap(gw1, h, d).noalias() = dz.transpose() * features;
    MutVecMap(gb1, h) = dz.colwise().sum().transpose();
  }
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!std::isfinite(g[i])) throw NumericError("non-finite gradient", i);
  }
  return {loss, ParameterVector(arch, std::move(g))};
}

LossAndGrad loss_and_grad(const ParameterVector& params, const Batch& batch) {
  return loss_and_grad(params, batch.features, batch.labels);
}

double mean_loss(const ParameterVector& params, const Eigen::Ref<const Matrix>& features,
                 std::span<const int> labels) {
  const ModelArch& arch = params.arch();
  check_features(arch, features);
  if (features.rows() == 0) throw ConfigError("batch must contain at least one sample");
  check_labels(labels, static_cast<std::size_t>(features.rows()), arch.num_classes);
  ForwardCache cache = compute_logits(params, features);
  Matrix logits = cache.logits;
  const Vector lse = softmax_rows(cache.logits);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    loss -= std::max(logits(i, labels[static_cast<std::size_t>(i)]) - lse(i), std::log(kProbFloor));
  }
  return loss / static_cast<double>(features.rows());
}

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::sgd ? "sgd" : "adam"; }

OptimizerKind optimizer_kind_from_string(const std::string& name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "adam") return OptimizerKind::adam;
  throw ConfigError("unknown optimizer '" + name + "' (expected sgd|adam)");
}

void OptimizerConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning rate must be finite and >= 0");
  if (kind == OptimizerKind::adam) {
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("adam beta1 must be in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("adam beta2 must be in [0, 1)");
    if (!(epsilon > 0.0)) throw ConfigError("adam epsilon must be > 0");
  }
}

OptimizerState::OptimizerState(OptimizerConfig cfg) : config(cfg) {}

std::pair<ParameterVector, OptimizerState> optimizer_step(const ParameterVector& params,
                                                          const ParameterVector& grad,
                                                          OptimizerState state) {
  if (params.size() != grad.size()) {
    throw ConfigError("gradient length " + std::to_string(grad.size()) + " does not match parameters " +
                      std::to_string(params.size()));
  }
  const OptimizerConfig& cfg = state.config;
  const double lr = cfg.learning_rate;
  std::vector<double> out(params.values().begin(), params.values().end());

  if (cfg.kind == OptimizerKind::sgd) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= lr * grad[i];
  } else {
    if (state.first_moment.empty()) {
      state.first_moment.assign(params.size(), 0.0);
      state.second_moment.assign(params.size(), 0.0);
    } else if (state.first_moment.size() != params.size()) {
      throw ConfigError("adam moment accumulators do not match parameter length");
    }
    ++state.step_count;
    const double t = static_cast<double>(state.step_count);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double g = grad[i];
      double& m = state.first_moment[i];
      double& v = state.second_moment[i];
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
      v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
      const double m_hat = m / bc1;
      const double v_hat = v / bc2;
      out[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  }
  return {ParameterVector(params.arch(), std::move(out)), std::move(state)};
}

std::vector<int> predict(const ParameterVector& params, const Eigen::Ref<const Matrix>& features) {
  check_features(params.arch(), features);
  const Matrix logits = compute_logits(params, features).logits;
  std::vector<int> out(static_cast<std::size_t>(features.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < logits.cols(); ++c) {
      if (logits(i, c) > logits(i, best)) best = c;
    }
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

double top1_accuracy(const ParameterVector& params, const Eigen::Ref<const Matrix>& features,
                     std::span<const int> labels) {
  if (features.rows() == 0) throw ConfigError("accuracy needs a nonempty dataset");
  check_labels(labels, static_cast<std::size_t>(features.rows()), params.arch().num_classes);
  const std::vector<int> pred = predict(params, features);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

}  // namespace astraea
