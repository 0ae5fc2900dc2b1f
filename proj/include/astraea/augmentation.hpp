#pragma once

// Global-distribution-driven minority-class augmentation. The server derives
// per-class targets from the global histogram; clients then synthesize the
// missing samples from their own holdings of each minority class.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "astraea/dataset.hpp"

namespace astraea {

struct AugmentationPlan {
  double alpha = 0.0;
  double mean_count = 0.0;               // C-bar, mean over all classes
  std::vector<int> aug_set;              // ascending class ids with 0 < C_i < C-bar
  std::vector<std::int64_t> current;     // C_i
  std::vector<std::int64_t> target;      // per class; equals current outside aug_set

  std::int64_t deficit(std::size_t cls) const { return target[cls] - current[cls]; }
  std::int64_t total_deficit() const;
  bool in_set(int cls) const;
  nlohmann::json to_json() const;
};

/// Targets round(C_i * (C-bar / C_i)^alpha) for every class below the mean.
/// Classes with no samples cannot be augmented and keep a target of 0.
AugmentationPlan compute_plan(const ClassDistribution& global, double alpha);

enum class TransformKind { vector_jitter, image_affine };

struct TransformConfig {
  TransformKind kind = TransformKind::vector_jitter;

  // vector_jitter: x' = s * x + N(0, sigma^2), s ~ U[scale_min, scale_max]
  double sigma = 0.1;
  double scale_min = 1.0;
  double scale_max = 1.0;

  // image_affine: row-major grayscale image of image_rows x image_cols.
  std::size_t image_rows = 0;
  std::size_t image_cols = 0;
  double max_shift = 0.1;         // fraction of width/height
  double max_rotation_deg = 10.0;
  double max_shear_deg = 10.0;
  double max_zoom = 0.1;          // zoom factor in [1 - max_zoom, 1 + max_zoom]

  void validate(std::size_t feature_dim) const;
  nlohmann::json to_json() const;
  static TransformConfig from_json(const nlohmann::json& j);
};

struct Sample {
  std::vector<double> features;
  int label = 0;
};

/// One random augmentation of `sample`. The label is never changed.
Sample transform_sample(const Sample& sample, const TransformConfig& config, std::uint64_t seed);

/// Applies `plan` to every client. Each minority class's deficit is split over
/// the clients holding that class in proportion to their holdings (largest
/// remainder), then spread round-robin over each holder's samples of the class.
/// Augmented samples get fresh ids; every client dataset is shuffled afterwards.
/// Throws ConfigError if the partition's histogram differs from the plan's.
ClientPartition apply_plan(const ClientPartition& partition, const AugmentationPlan& plan,
                           const TransformConfig& transform, std::uint64_t seed);

/// Per-client extra samples for class `cls` under `plan` (the apportionment step alone).
std::vector<std::int64_t> client_gains(const ClientPartition& partition, const AugmentationPlan& plan, int cls);

}  // namespace astraea
