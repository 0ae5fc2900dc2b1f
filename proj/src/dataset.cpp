#include "astraea/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <numeric>
#include <random>

#include "astraea/apportion.hpp"
#include "astraea/error.hpp"
#include "astraea/random.hpp"

namespace astraea {

LabeledDataset::LabeledDataset(std::size_t num_classes, std::size_t feature_dim)
    : num_classes_(num_classes), feature_dim_(feature_dim) {
  if (num_classes == 0) throw ConfigError("dataset needs at least one class");
  if (feature_dim == 0) throw ConfigError("dataset feature_dim must be >= 1");
}

void LabeledDataset::add(std::uint64_t id, std::span<const double> features, int label) {
  if (features.size() != feature_dim_) {
    throw ConfigError("sample has " + std::to_string(features.size()) + " features, dataset expects " +
                      std::to_string(feature_dim_));
  }
  if (label < 0 || static_cast<std::size_t>(label) >= num_classes_) {
    throw ConfigError("label " + std::to_string(label) + " outside [0, " + std::to_string(num_classes_) + ")");
  }
  features_.insert(features_.end(), features.begin(), features.end());
  labels_.push_back(label);
  ids_.push_back(id);
}

void LabeledDataset::append(const LabeledDataset& other) {
  if (other.num_classes_ != num_classes_ || other.feature_dim_ != feature_dim_) {
    throw ConfigError("cannot append datasets with different shapes");
  }
  features_.insert(features_.end(), other.features_.begin(), other.features_.end());
  labels_.insert(labels_.end(), other.labels_.begin(), other.labels_.end());
  ids_.insert(ids_.end(), other.ids_.begin(), other.ids_.end());
}

void LabeledDataset::reserve(std::size_t n) {
  features_.reserve(n * feature_dim_);
  labels_.reserve(n);
  ids_.reserve(n);
}

std::span<const double> LabeledDataset::features(std::size_t i) const {
  return {features_.data() + i * feature_dim_, feature_dim_};
}

Eigen::Map<const Matrix> LabeledDataset::feature_matrix() const {
  return {features_.data(), static_cast<Eigen::Index>(size()), static_cast<Eigen::Index>(feature_dim_)};
}

Matrix LabeledDataset::gather(std::span<const std::size_t> rows) const {
  Matrix out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(feature_dim_));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::memcpy(out.row(static_cast<Eigen::Index>(r)).data(), features_.data() + rows[r] * feature_dim_,
                feature_dim_ * sizeof(double));
  }
  return out;
}

std::vector<int> LabeledDataset::gather_labels(std::span<const std::size_t> rows) const {
  std::vector<int> out(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) out[r] = labels_[rows[r]];
  return out;
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> rows) const {
  LabeledDataset out(num_classes_, feature_dim_);
  out.reserve(rows.size());
  for (std::size_t r : rows) out.add(ids_[r], features(r), labels_[r]);
  return out;
}

void LabeledDataset::shuffle(std::uint64_t seed) {
  std::vector<std::size_t> order(size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  *this = subset(order);
}

std::uint64_t LabeledDataset::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  feed(&num_classes_, sizeof num_classes_);
  feed(&feature_dim_, sizeof feature_dim_);
  feed(ids_.data(), ids_.size() * sizeof(std::uint64_t));
  feed(labels_.data(), labels_.size() * sizeof(int));
  feed(features_.data(), features_.size() * sizeof(double));
  return h;
}

ClassDistribution::ClassDistribution(std::vector<std::int64_t> c) : counts(std::move(c)) {
  for (std::int64_t x : counts) {
    if (x < 0) throw ConfigError("class counts must be nonnegative");
  }
}

std::int64_t ClassDistribution::total() const { return std::accumulate(counts.begin(), counts.end(), std::int64_t{0}); }

std::vector<double> ClassDistribution::probs() const {
  std::vector<double> p(counts.size(), 0.0);
  const std::int64_t t = total();
  if (t == 0) return p;
  for (std::size_t i = 0; i < counts.size(); ++i) p[i] = static_cast<double>(counts[i]) / static_cast<double>(t);
  return p;
}

ClassDistribution& ClassDistribution::operator+=(const ClassDistribution& other) {
  if (counts.empty()) counts.assign(other.counts.size(), 0);
  if (other.counts.size() != counts.size()) throw ConfigError("class distributions differ in class count");
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
  return *this;
}

ClassDistribution class_histogram(const LabeledDataset& dataset) {
  ClassDistribution h(dataset.num_classes());
  for (int label : dataset.labels()) ++h.counts[static_cast<std::size_t>(label)];
  return h;
}

namespace {

std::string size_name(SizeProfile s) { return s == SizeProfile::even ? "even" : "power_law"; }
std::string local_name(LocalProfile l) { return l == LocalProfile::balanced ? "balanced" : "random"; }
std::string global_name(GlobalProfile g) {
  switch (g) {
    case GlobalProfile::as_is: return "as_is";
    case GlobalProfile::balanced: return "balanced";
    case GlobalProfile::frequency: return "frequency";
  }
  return "?";
}

void check_frequency(std::span<const double> freq, std::size_t num_classes) {
  if (freq.size() != num_classes) {
    throw ConfigError("frequency vector has " + std::to_string(freq.size()) + " entries, expected " +
                      std::to_string(num_classes));
  }
  double sum = 0.0;
  for (double f : freq) {
    if (!(f >= 0.0) || !std::isfinite(f)) throw ConfigError("frequency entries must be finite and >= 0");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("frequency vector must sum to 1 (got " + std::to_string(sum) + ")");
}

std::vector<std::vector<std::size_t>> indices_by_class(const LabeledDataset& ds) {
  std::vector<std::vector<std::size_t>> by_class(ds.num_classes());
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[static_cast<std::size_t>(ds.label(i))].push_back(i);
  return by_class;
}

// Orders samples so that every prefix tracks the class proportions as closely
// as possible: position j takes the class with the largest deficit
// share_c * (j + 1) - taken_c. Ties go to the lowest class id.
std::vector<std::size_t> stratified_order(std::vector<std::vector<std::size_t>> by_class) {
  std::size_t n = 0;
  for (const auto& v : by_class) n += v.size();
  std::vector<std::size_t> taken(by_class.size(), 0);
  std::vector<std::size_t> order;
  order.reserve(n);
  for (std::size_t j = 0; j < n; ++j) {
    std::size_t best = by_class.size();
    long double best_deficit = 0.0L;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
      if (taken[c] == by_class[c].size()) continue;
      const long double deficit = static_cast<long double>(by_class[c].size()) * (j + 1) / n - taken[c];
      if (best == by_class.size() || deficit > best_deficit) {
        best = c;
        best_deficit = deficit;
      }
    }
    order.push_back(by_class[best][taken[best]++]);
  }
  return order;
}

}  // namespace

void PartitionProfile::validate(std::size_t num_classes) const {
  if (size == SizeProfile::power_law && (!std::isfinite(exponent) || exponent < 0.0)) {
    throw ConfigError("partition.exponent must be finite and >= 0");
  }
  if (total < 0) throw ConfigError("partition.total must be >= 0");
  if (global == GlobalProfile::frequency) check_frequency(frequency, num_classes);
}

nlohmann::json PartitionProfile::to_json() const {
  nlohmann::json j{{"size", size_name(size)}, {"local", local_name(local)}, {"global", global_name(global)}};
  if (size == SizeProfile::power_law) j["exponent"] = exponent;
  if (global == GlobalProfile::frequency) j["frequency"] = frequency;
  if (total > 0) j["total"] = total;
  return j;
}

PartitionProfile PartitionProfile::from_json(const nlohmann::json& j) {
  PartitionProfile p;
  const std::string s = j.value("size", std::string("even"));
  if (s == "even") p.size = SizeProfile::even;
  else if (s == "power_law") p.size = SizeProfile::power_law;
  else throw ConfigError("partition.size must be even|power_law, got '" + s + "'");
  p.exponent = j.value("exponent", 1.0);
  const std::string l = j.value("local", std::string("random"));
  if (l == "balanced") p.local = LocalProfile::balanced;
  else if (l == "random") p.local = LocalProfile::random;
  else throw ConfigError("partition.local must be balanced|random, got '" + l + "'");
  const std::string g = j.value("global", std::string("as_is"));
  if (g == "as_is") p.global = GlobalProfile::as_is;
  else if (g == "balanced") p.global = GlobalProfile::balanced;
  else if (g == "frequency") p.global = GlobalProfile::frequency;
  else throw ConfigError("partition.global must be as_is|balanced|frequency, got '" + g + "'");
  if (j.contains("frequency")) p.frequency = j.at("frequency").get<std::vector<double>>();
  p.total = j.value("total", std::int64_t{0});
  return p;
}

std::size_t ClientPartition::total_samples() const {
  std::size_t n = 0;
  for (const auto& c : clients) n += c.size();
  return n;
}

ClassDistribution ClientPartition::global_histogram() const {
  if (clients.empty()) return {};
  ClassDistribution h(clients.front().num_classes());
  for (const auto& c : clients) h += class_histogram(c);
  return h;
}

LabeledDataset make_synthetic(std::size_t num_classes, std::span<const std::int64_t> per_class_counts,
                              std::size_t feature_dim, double separation, std::uint64_t seed,
                              std::uint64_t id_offset) {
  if (per_class_counts.size() != num_classes) throw ConfigError("per_class_counts must have num_classes entries");
  if (!(separation > 0.0)) throw ConfigError("separation must be > 0");
  for (std::int64_t c : per_class_counts) {
    if (c < 0) throw ConfigError("per-class counts must be >= 0");
  }

  const double radius = separation / std::numbers::sqrt2;
  Matrix means = Matrix::Zero(static_cast<Eigen::Index>(num_classes), static_cast<Eigen::Index>(feature_dim));
  if (feature_dim >= num_classes) {
    for (std::size_t c = 0; c < num_classes; ++c) means(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(c)) = radius;
  } else {
    Rng geo(derive_seed(num_classes * 1000003ULL + feature_dim, {stream::kSynthetic}));
    std::normal_distribution<double> n01;
    for (Eigen::Index c = 0; c < means.rows(); ++c) {
      for (Eigen::Index d = 0; d < means.cols(); ++d) means(c, d) = n01(geo);
      means.row(c) *= radius / means.row(c).norm();
    }
  }

  LabeledDataset ds(num_classes, feature_dim);
  const auto total = std::accumulate(per_class_counts.begin(), per_class_counts.end(), std::int64_t{0});
  ds.reserve(static_cast<std::size_t>(total));
  Rng rng(derive_seed(seed, {stream::kSynthetic}));
  std::normal_distribution<double> noise;
  std::vector<double> x(feature_dim);
  std::uint64_t next_id = id_offset;
  for (std::size_t c = 0; c < num_classes; ++c) {
    for (std::int64_t k = 0; k < per_class_counts[c]; ++k) {
      for (std::size_t d = 0; d < feature_dim; ++d) {
        x[d] = means(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(d)) + noise(rng);
      }
      ds.add(next_id++, x, static_cast<int>(c));
    }
  }
  return ds;
}

LabeledDataset resample_to_frequency(const LabeledDataset& dataset, std::span<const double> freq,
                                     std::int64_t total, std::uint64_t seed) {
  check_frequency(freq, dataset.num_classes());
  if (total < 0) throw ConfigError("resample total must be >= 0");
  const std::vector<std::int64_t> want = apportion(freq, total);
  auto by_class = indices_by_class(dataset);
  for (std::size_t c = 0; c < want.size(); ++c) {
    const auto have = static_cast<std::int64_t>(by_class[c].size());
    if (want[c] > have) throw ShortageError(static_cast<int>(c), want[c], have);
  }
  std::vector<std::size_t> keep;
  keep.reserve(static_cast<std::size_t>(total));
  for (std::size_t c = 0; c < want.size(); ++c) {
    Rng rng(derive_seed(seed, {stream::kResample, c}));
    std::shuffle(by_class[c].begin(), by_class[c].end(), rng);
    keep.insert(keep.end(), by_class[c].begin(), by_class[c].begin() + want[c]);
  }
  std::sort(keep.begin(), keep.end());
  return dataset.subset(keep);
}

std::int64_t max_feasible_total(const ClassDistribution& available, std::span<const double> freq) {
  check_frequency(freq, available.num_classes());
  // Apportionment never exceeds floor(f*T) + 1, so the answer lies below the
  // tightest per-class ratio plus N.
  long double bound = static_cast<long double>(available.total());
  for (std::size_t c = 0; c < freq.size(); ++c) {
    if (freq[c] > 0.0) bound = std::min(bound, static_cast<long double>(available.counts[c]) / freq[c]);
  }
  auto feasible = [&](std::int64_t t) {
    const auto want = apportion(freq, t);
    for (std::size_t c = 0; c < want.size(); ++c) {
      if (want[c] > available.counts[c]) return false;
    }
    return true;
  };
  std::int64_t t = static_cast<std::int64_t>(std::floor(bound)) + static_cast<std::int64_t>(freq.size());
  t = std::min(t, available.total());
  while (t > 0 && !feasible(t)) --t;
  return t;
}

ClientPartition partition_clients(const LabeledDataset& dataset, std::size_t num_clients,
                                  const PartitionProfile& profile, std::uint64_t seed) {
  if (num_clients == 0) throw ConfigError("partition needs K >= 1 clients");
  profile.validate(dataset.num_classes());

  LabeledDataset pool;
  if (profile.global == GlobalProfile::as_is) {
    pool = dataset;
  } else {
    std::vector<double> freq = profile.frequency;
    if (profile.global == GlobalProfile::balanced) {
      freq.assign(dataset.num_classes(), 1.0 / static_cast<double>(dataset.num_classes()));
    }
    std::int64_t total = profile.total;
    if (total == 0) total = max_feasible_total(class_histogram(dataset), freq);
    pool = resample_to_frequency(dataset, freq, total, derive_seed(seed, {stream::kPartition, 0}));
  }
  if (pool.size() < num_clients) {
    throw ConfigError("cannot split " + std::to_string(pool.size()) + " samples across " +
                      std::to_string(num_clients) + " clients");
  }

  std::vector<double> weights(num_clients, 1.0);
  if (profile.size == SizeProfile::power_law) {
    for (std::size_t i = 0; i < num_clients; ++i) weights[i] = std::pow(static_cast<double>(i + 1), -profile.exponent);
  }
  const std::vector<std::int64_t> sizes = apportion(weights, static_cast<std::int64_t>(pool.size()));
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (sizes[i] == 0) {
      throw ConfigError("power-law exponent " + std::to_string(profile.exponent) + " leaves client " +
                        std::to_string(i) + " empty; lower the exponent or add data");
    }
  }

  std::vector<std::size_t> order;
  if (profile.local == LocalProfile::random) {
    order.resize(pool.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(seed, {stream::kPartition, 1}));
    std::shuffle(order.begin(), order.end(), rng);
  } else {
    auto by_class = indices_by_class(pool);
    for (std::size_t c = 0; c < by_class.size(); ++c) {
      Rng rng(derive_seed(seed, {stream::kPartition, 2, c}));
      std::shuffle(by_class[c].begin(), by_class[c].end(), rng);
    }
    order = stratified_order(std::move(by_class));
  }

  ClientPartition out;
  out.profile = profile;
  out.clients.reserve(num_clients);
  std::size_t cursor = 0;
  for (std::int64_t s : sizes) {
    std::span<const std::size_t> rows(order.data() + cursor, static_cast<std::size_t>(s));
    out.clients.push_back(pool.subset(rows));
    cursor += static_cast<std::size_t>(s);
  }
  return out;
}

std::vector<double> english_letter_frequency() {
  // Percent frequency of a..z in English text.
  std::vector<double> f{8.167, 1.492, 2.782, 4.253, 12.702, 2.228, 2.015, 6.094, 6.966, 0.153, 0.772, 4.025, 2.406,
                        6.749, 7.507, 1.929, 0.095,  5.987, 6.327, 9.056, 2.758, 0.978, 2.360, 0.150, 1.974, 0.074};
  const double sum = std::accumulate(f.begin(), f.end(), 0.0);
  for (double& x : f) x /= sum;
  return f;
}

std::vector<double> zipf_frequency(std::size_t num_classes, double exponent) {
  if (num_classes == 0) throw ConfigError("zipf needs at least one class");
  std::vector<double> f(num_classes);
  double sum = 0.0;
  for (std::size_t i = 0; i < num_classes; ++i) sum += f[i] = std::pow(static_cast<double>(i + 1), -exponent);
  for (double& x : f) x /= sum;
  return f;
}

std::vector<double> normal_frequency(std::size_t num_classes) {
  if (num_classes == 0) throw ConfigError("normal_frequency needs at least one class");
  std::vector<double> f(num_classes);
  double sum = 0.0;
  for (std::size_t i = 0; i < num_classes; ++i) {
    const double z = -3.0 + 6.0 * (static_cast<double>(i) + 0.5) / static_cast<double>(num_classes);
    sum += f[i] = std::exp(-0.5 * z * z);
  }
  for (double& x : f) x /= sum;
  return f;
}

}  // namespace astraea
