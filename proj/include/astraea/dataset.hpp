#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "astraea/model.hpp"

namespace astraea {

/// Labeled samples with stable ids. Features are stored row-major in one
/// contiguous buffer so a dataset can be viewed as an Eigen matrix without
/// copying.
class LabeledDataset {
 public:
  LabeledDataset() = default;
  LabeledDataset(std::size_t num_classes, std::size_t feature_dim);

  std::size_t size() const noexcept { return labels_.size(); }
  bool empty() const noexcept { return labels_.empty(); }
  std::size_t num_classes() const noexcept { return num_classes_; }
  std::size_t feature_dim() const noexcept { return feature_dim_; }

  /// Throws ConfigError on a dimension mismatch or out-of-range label.
  void add(std::uint64_t id, std::span<const double> features, int label);
  void append(const LabeledDataset& other);
  void reserve(std::size_t n);

  std::span<const double> features(std::size_t i) const;
  int label(std::size_t i) const { return labels_[i]; }
  std::uint64_t id(std::size_t i) const { return ids_[i]; }
  const std::vector<int>& labels() const noexcept { return labels_; }
  const std::vector<std::uint64_t>& ids() const noexcept { return ids_; }

  Eigen::Map<const Matrix> feature_matrix() const;
  /// Copies the selected rows into a dense matrix.
  Matrix gather(std::span<const std::size_t> rows) const;
  std::vector<int> gather_labels(std::span<const std::size_t> rows) const;
  LabeledDataset subset(std::span<const std::size_t> rows) const;
  /// Fisher-Yates shuffle of the sample order.
  void shuffle(std::uint64_t seed);

  /// FNV-1a over ids, labels and feature bytes, in storage order.
  std::uint64_t fingerprint() const;

 private:
  std::size_t num_classes_ = 0;
  std::size_t feature_dim_ = 0;
  std::vector<double> features_;
  std::vector<int> labels_;
  std::vector<std::uint64_t> ids_;
};

/// Per-class sample counts.
struct ClassDistribution {
  std::vector<std::int64_t> counts;

  ClassDistribution() = default;
  explicit ClassDistribution(std::size_t num_classes) : counts(num_classes, 0) {}
  explicit ClassDistribution(std::vector<std::int64_t> c);

  std::size_t num_classes() const noexcept { return counts.size(); }
  std::int64_t total() const;
  /// counts / total; all zeros when total == 0.
  std::vector<double> probs() const;

  ClassDistribution& operator+=(const ClassDistribution& other);
  friend ClassDistribution operator+(ClassDistribution a, const ClassDistribution& b) { return a += b; }
  bool operator==(const ClassDistribution&) const = default;
};

ClassDistribution class_histogram(const LabeledDataset& dataset);

enum class SizeProfile { even, power_law };
enum class LocalProfile { balanced, random };
/// `as_is` keeps the source class mix; `balanced` and `frequency` resample first.
enum class GlobalProfile { as_is, balanced, frequency };

struct PartitionProfile {
  SizeProfile size = SizeProfile::even;
  double exponent = 1.0;  // power_law: client i gets weight (i+1)^-exponent
  LocalProfile local = LocalProfile::random;
  GlobalProfile global = GlobalProfile::as_is;
  std::vector<double> frequency;  // global == frequency
  std::int64_t total = 0;         // resampled size; 0 = largest feasible

  void validate(std::size_t num_classes) const;
  nlohmann::json to_json() const;
  static PartitionProfile from_json(const nlohmann::json& j);
};

struct ClientPartition {
  std::vector<LabeledDataset> clients;  // client id = index
  PartitionProfile profile;

  std::size_t size() const noexcept { return clients.size(); }
  std::size_t total_samples() const;
  ClassDistribution histogram(std::size_t client) const { return class_histogram(clients.at(client)); }
  ClassDistribution global_histogram() const;
};

/// Gaussian class clusters with unit noise. Class means depend only on
/// (num_classes, feature_dim, separation): with feature_dim >= num_classes the
/// mean of class c is separation/sqrt(2) * e_c, so every pair of means is
/// exactly `separation` apart; otherwise means are fixed pseudo-random
/// directions of the same norm. `seed` drives only the noise, so train and test
/// sets drawn with different seeds share cluster geometry. Sample ids are
/// `id_offset + index` in class-major order.
LabeledDataset make_synthetic(std::size_t num_classes, std::span<const std::int64_t> per_class_counts,
                              std::size_t feature_dim, double separation, std::uint64_t seed,
                              std::uint64_t id_offset = 0);

/// Subsamples `dataset` so its histogram equals the largest-remainder
/// apportionment of freq * total. Throws ShortageError naming the first class
/// without enough samples.
LabeledDataset resample_to_frequency(const LabeledDataset& dataset, std::span<const double> freq,
                                     std::int64_t total, std::uint64_t seed);

/// Largest total for which resample_to_frequency would succeed.
std::int64_t max_feasible_total(const ClassDistribution& available, std::span<const double> freq);

/// Splits `dataset` into K disjoint client shards following `profile`.
ClientPartition partition_clients(const LabeledDataset& dataset, std::size_t num_clients,
                                  const PartitionProfile& profile, std::uint64_t seed);

/// Reads an IDX image/label pair (MNIST/EMNIST layout). Pixels are scaled to
/// [0, 1]. `num_classes` of 0 means max label + 1.
LabeledDataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                        std::size_t num_classes = 0);

/// Relative letter frequencies a..z of English text, normalized to sum 1.
std::vector<double> english_letter_frequency();
/// p_i proportional to (i+1)^-exponent.
std::vector<double> zipf_frequency(std::size_t num_classes, double exponent);
/// Standard normal density at evenly spaced points over [-3, 3], normalized.
std::vector<double> normal_frequency(std::size_t num_classes);

}  // namespace astraea
