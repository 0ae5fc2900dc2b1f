#include "astraea/augmentation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "astraea/apportion.hpp"
#include "astraea/error.hpp"
#include "astraea/random.hpp"

namespace astraea {

std::int64_t AugmentationPlan::total_deficit() const {
  std::int64_t d = 0;
  for (int c : aug_set) d += deficit(static_cast<std::size_t>(c));
  return d;
}

bool AugmentationPlan::in_set(int cls) const { return std::binary_search(aug_set.begin(), aug_set.end(), cls); }

nlohmann::json AugmentationPlan::to_json() const {
  nlohmann::json classes = nlohmann::json::array();
  for (std::size_t c = 0; c < current.size(); ++c) {
    classes.push_back({{"class", c}, {"current", current[c]}, {"target", target[c]}, {"augment", in_set(static_cast<int>(c))}});
  }
  return {{"alpha", alpha}, {"mean_count", mean_count}, {"aug_set", aug_set}, {"classes", classes}};
}

AugmentationPlan compute_plan(const ClassDistribution& global, double alpha) {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be finite and >= 0");
  if (global.num_classes() == 0 || global.total() <= 0) throw ConfigError("augmentation plan needs a nonempty global histogram");

  AugmentationPlan plan;
  plan.alpha = alpha;
  plan.current = global.counts;
  plan.target = global.counts;
  plan.mean_count = static_cast<double>(global.total()) / static_cast<double>(global.num_classes());
  for (std::size_t c = 0; c < global.num_classes(); ++c) {
    const auto count = static_cast<double>(global.counts[c]);
    if (global.counts[c] == 0 || !(count < plan.mean_count)) continue;
    plan.aug_set.push_back(static_cast<int>(c));
    // C * (Cbar/C)^alpha written as C^(1-alpha) * Cbar^alpha so that alpha = 0
    // and alpha = 1 hit C and Cbar without rounding error.
    const double t = std::pow(count, 1.0 - alpha) * std::pow(plan.mean_count, alpha);
    plan.target[c] = std::max<std::int64_t>(global.counts[c], std::llround(t));
  }
  return plan;
}

void TransformConfig::validate(std::size_t feature_dim) const {
  if (kind == TransformKind::vector_jitter) {
    if (!(sigma >= 0.0)) throw ConfigError("transform.sigma must be >= 0");
    if (!(scale_min <= scale_max) || !(scale_min > 0.0)) throw ConfigError("transform scale range must be nonempty and positive");
  } else {
    if (image_rows == 0 || image_cols == 0) throw ConfigError("image_affine needs image_rows and image_cols");
    if (image_rows * image_cols != feature_dim) {
      throw ConfigError("image_affine expects " + std::to_string(image_rows * image_cols) + " features, data has " +
                        std::to_string(feature_dim));
    }
    if (max_shift < 0.0 || max_rotation_deg < 0.0 || max_shear_deg < 0.0 || max_zoom < 0.0 || max_zoom >= 1.0) {
      throw ConfigError("image_affine ranges must be >= 0 (zoom < 1)");
    }
  }
}

nlohmann::json TransformConfig::to_json() const {
  if (kind == TransformKind::vector_jitter) {
    return {{"kind", "vector_jitter"}, {"sigma", sigma}, {"scale_min", scale_min}, {"scale_max", scale_max}};
  }
  return {{"kind", "image_affine"},          {"image_rows", image_rows},      {"image_cols", image_cols},
          {"max_shift", max_shift},          {"max_rotation_deg", max_rotation_deg},
          {"max_shear_deg", max_shear_deg},  {"max_zoom", max_zoom}};
}

TransformConfig TransformConfig::from_json(const nlohmann::json& j) {
  TransformConfig t;
  const std::string kind = j.value("kind", std::string("vector_jitter"));
  if (kind == "vector_jitter") t.kind = TransformKind::vector_jitter;
  else if (kind == "image_affine") t.kind = TransformKind::image_affine;
  else throw ConfigError("transform.kind must be vector_jitter|image_affine, got '" + kind + "'");
  static const std::vector<std::string> known{"kind",       "sigma",     "scale_min",        "scale_max",
                                              "image_rows", "image_cols", "max_shift",        "max_rotation_deg",
                                              "max_shear_deg", "max_zoom"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) throw ConfigError("unknown key 'transform." + key + "'");
  }
  t.sigma = j.value("sigma", t.sigma);
  t.scale_min = j.value("scale_min", t.scale_min);
  t.scale_max = j.value("scale_max", t.scale_max);
  t.image_rows = j.value("image_rows", t.image_rows);
  t.image_cols = j.value("image_cols", t.image_cols);
  t.max_shift = j.value("max_shift", t.max_shift);
  t.max_rotation_deg = j.value("max_rotation_deg", t.max_rotation_deg);
  t.max_shear_deg = j.value("max_shear_deg", t.max_shear_deg);
  t.max_zoom = j.value("max_zoom", t.max_zoom);
  return t;
}

namespace {

std::vector<double> jitter(std::span<const double> x, const TransformConfig& cfg, Rng& rng) {
  std::uniform_real_distribution<double> scale_dist(cfg.scale_min, cfg.scale_max);
  const double s = cfg.scale_min == cfg.scale_max ? cfg.scale_min : scale_dist(rng);
  std::vector<double> out(x.size());
  if (cfg.sigma == 0.0) {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = s * x[i];
    return out;
  }
  std::normal_distribution<double> noise(0.0, cfg.sigma);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = s * x[i] + noise(rng);
  return out;
}

double uniform_symmetric(Rng& rng, double half) {
  if (half == 0.0) return 0.0;
  return std::uniform_real_distribution<double>(-half, half)(rng);
}

// Random rotation, shear, zoom and shift about the image center; output pixels
// are pulled back through the inverse map with bilinear interpolation and zero
// fill outside the source.
std::vector<double> affine(std::span<const double> img, const TransformConfig& cfg, Rng& rng) {
  const auto rows = static_cast<double>(cfg.image_rows);
  const auto cols = static_cast<double>(cfg.image_cols);
  const double theta = uniform_symmetric(rng, cfg.max_rotation_deg) * std::numbers::pi / 180.0;
  const double shear = uniform_symmetric(rng, cfg.max_shear_deg) * std::numbers::pi / 180.0;
  const double zx = 1.0 + uniform_symmetric(rng, cfg.max_zoom);
  const double zy = 1.0 + uniform_symmetric(rng, cfg.max_zoom);
  const double tx = uniform_symmetric(rng, cfg.max_shift) * cols;
  const double ty = uniform_symmetric(rng, cfg.max_shift) * rows;

  // Forward map A = R(theta) * Shear(shear) * diag(zx, zy).
  const double c = std::cos(theta), s = std::sin(theta);
  const double sh = std::tan(shear);
  const double a00 = c * zx, a01 = (c * sh - s) * zy;
  const double a10 = s * zx, a11 = (s * sh + c) * zy;
  const double det = a00 * a11 - a01 * a10;
  const double i00 = a11 / det, i01 = -a01 / det, i10 = -a10 / det, i11 = a00 / det;

  const double cx = (cols - 1.0) / 2.0, cy = (rows - 1.0) / 2.0;
  const auto at = [&](long r, long q) -> double {
    if (r < 0 || q < 0 || r >= static_cast<long>(cfg.image_rows) || q >= static_cast<long>(cfg.image_cols)) return 0.0;
    return img[static_cast<std::size_t>(r) * cfg.image_cols + static_cast<std::size_t>(q)];
  };

  std::vector<double> out(img.size());
  for (std::size_t r = 0; r < cfg.image_rows; ++r) {
    for (std::size_t q = 0; q < cfg.image_cols; ++q) {
      const double dx = static_cast<double>(q) - cx - tx;
      const double dy = static_cast<double>(r) - cy - ty;
      const double sx = i00 * dx + i01 * dy + cx;
      const double sy = i10 * dx + i11 * dy + cy;
      const double fx = std::floor(sx), fy = std::floor(sy);
      const double wx = sx - fx, wy = sy - fy;
      const auto x0 = static_cast<long>(fx), y0 = static_cast<long>(fy);
      out[r * cfg.image_cols + q] = (1 - wy) * ((1 - wx) * at(y0, x0) + wx * at(y0, x0 + 1)) +
                                    wy * ((1 - wx) * at(y0 + 1, x0) + wx * at(y0 + 1, x0 + 1));
    }
  }
  return out;
}

}  // namespace

Sample transform_sample(const Sample& sample, const TransformConfig& config, std::uint64_t seed) {
  config.validate(sample.features.size());
  Rng rng(seed);
  Sample out;
  out.label = sample.label;
  out.features = config.kind == TransformKind::vector_jitter ? jitter(sample.features, config, rng)
                                                             : affine(sample.features, config, rng);
  return out;
}

std::vector<std::int64_t> client_gains(const ClientPartition& partition, const AugmentationPlan& plan, int cls) {
  std::vector<std::int64_t> holdings(partition.size(), 0);
  for (std::size_t k = 0; k < partition.size(); ++k) {
    holdings[k] = class_histogram(partition.clients[k]).counts.at(static_cast<std::size_t>(cls));
  }
  const std::int64_t d = plan.deficit(static_cast<std::size_t>(cls));
  if (d == 0) return std::vector<std::int64_t>(partition.size(), 0);
  return apportion(std::span<const std::int64_t>(holdings), d);
}

ClientPartition apply_plan(const ClientPartition& partition, const AugmentationPlan& plan,
                           const TransformConfig& transform, std::uint64_t seed) {
  if (partition.size() == 0) throw ConfigError("cannot augment an empty partition");
  const ClassDistribution global = partition.global_histogram();
  if (global.counts != plan.current) throw ConfigError("augmentation plan was computed from a different global histogram");
  transform.validate(partition.clients.front().feature_dim());

  // gains[k][i] for aug_set[i]
  std::vector<std::vector<std::int64_t>> gains(partition.size(), std::vector<std::int64_t>(plan.aug_set.size(), 0));
  for (std::size_t i = 0; i < plan.aug_set.size(); ++i) {
    const auto g = client_gains(partition, plan, plan.aug_set[i]);
    for (std::size_t k = 0; k < partition.size(); ++k) gains[k][i] = g[k];
  }

  // Fresh ids: one contiguous block per client after the current maximum, so
  // assignment does not depend on the order clients are processed in.
  std::uint64_t next_free = 0;
  for (const auto& c : partition.clients) {
    for (std::uint64_t id : c.ids()) next_free = std::max(next_free, id + 1);
  }
  std::vector<std::uint64_t> id_base(partition.size());
  for (std::size_t k = 0; k < partition.size(); ++k) {
    id_base[k] = next_free;
    for (std::int64_t g : gains[k]) next_free += static_cast<std::uint64_t>(g);
  }

  ClientPartition out;
  out.profile = partition.profile;
  out.clients.reserve(partition.size());
  for (std::size_t k = 0; k < partition.size(); ++k) {
    const LabeledDataset& src = partition.clients[k];
    LabeledDataset ds = src;
    const std::uint64_t client_seed = derive_seed(seed, {stream::kAugment, k});
    std::uint64_t next_id = id_base[k];
    for (std::size_t i = 0; i < plan.aug_set.size(); ++i) {
      const std::int64_t gain = gains[k][i];
      if (gain == 0) continue;
      const int cls = plan.aug_set[i];
      std::vector<std::size_t> holders;
      for (std::size_t r = 0; r < src.size(); ++r) {
        if (src.label(r) == cls) holders.push_back(r);
      }
      if (holders.empty()) throw ConfigError("client " + std::to_string(k) + " asked to augment absent class " + std::to_string(cls));
      for (std::int64_t a = 0; a < gain; ++a) {
        const std::size_t row = holders[static_cast<std::size_t>(a) % holders.size()];
        Sample s{std::vector<double>(src.features(row).begin(), src.features(row).end()), cls};
        Sample aug = transform_sample(s, transform, derive_seed(client_seed, {static_cast<std::uint64_t>(cls), static_cast<std::uint64_t>(a)}));
        ds.add(next_id++, aug.features, aug.label);
      }
    }
    ds.shuffle(derive_seed(seed, {stream::kShuffle, k}));
    out.clients.push_back(std::move(ds));
  }
  return out;
}

}  // namespace astraea
