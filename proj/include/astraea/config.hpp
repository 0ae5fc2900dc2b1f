#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "astraea/dataset.hpp"
#include "astraea/engine.hpp"
#include "astraea/model.hpp"

namespace astraea {

enum class RunMode { astraea, fedavg, proposition_check, schedule_only };

std::string to_string(RunMode mode);

enum class DatasetSource { synthetic, idx };

struct SyntheticSettings {
  std::size_t num_classes = 10;
  std::size_t feature_dim = 20;
  std::int64_t train_per_class = 600;
  std::int64_t test_per_class = 100;
  double separation = 3.0;
};

struct IdxSettings {
  std::filesystem::path images;
  std::filesystem::path labels;
  std::filesystem::path test_images;  // optional; otherwise a balanced hold-out
  std::filesystem::path test_labels;
  std::int64_t holdout_per_class = 100;
};

struct PropositionSettings {
  std::size_t rounds = 10;
  std::size_t clients = 4;
  std::size_t local_epochs = 1;
  double lr = 0.5;
};

/// Everything one invocation needs. Built from defaults, then a JSON config
/// file, then command-line overrides, in that order of precedence.
struct RunConfig {
  RunMode mode = RunMode::astraea;
  TrainingConfig training;
  ModelKind model_kind = ModelKind::softmax_regression;
  std::size_t hidden_units = 32;
  PartitionProfile partition;
  DatasetSource dataset = DatasetSource::synthetic;
  SyntheticSettings synthetic;
  IdxSettings idx;
  PropositionSettings proposition;
  std::vector<std::vector<std::int64_t>> client_distributions;  // schedule-only fixtures
  std::optional<double> target_accuracy;
  std::filesystem::path out_dir = "astraea_out";

  nlohmann::json resolved;  // fully defaulted config as parsed
};

/// The complete default config, one entry per accepted key.
nlohmann::json default_config_json();

/// Validates and converts a (possibly partial) config document. Unknown keys
/// are rejected; errors name the key and the violated constraint.
RunConfig parse_config_json(const nlohmann::json& doc);

/// Reads `path` (JSON) and parses it.
RunConfig parse_config(const std::filesystem::path& path);

/// Merges `overrides` over the file contents (if any) before parsing.
RunConfig resolve_config(const std::optional<std::filesystem::path>& path, const nlohmann::json& overrides);

/// Executes the configured mode, writing the manifest and CSV outputs to
/// out_dir. Progress and the final summary go to `log`. Returns a process exit
/// status.
int run(const RunConfig& config, std::ostream& log);

}  // namespace astraea
