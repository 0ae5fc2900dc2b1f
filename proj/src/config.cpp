#include "astraea/config.hpp"

#include <fstream>

#include "astraea/error.hpp"

namespace astraea {

namespace {

const nlohmann::json& defaults() {
  static const nlohmann::json d = {
      {"mode", "astraea"},
      {"k", 100},
      {"b", 20},
      {"c", 50},
      {"alpha", 0.67},
      {"gamma", 10},
      {"local_epochs", 1},
      {"mediator_epochs", 2},
      {"rounds", 20},
      {"seed", 1},
      {"optimizer", "adam"},
      {"lr", 0.001},
      {"static_schedule", false},
      {"threads", 1},
      {"wire_bytes_per_param", 4},
      {"checkpoint_interval", 0},
      {"stop_at_best_validation", false},
      {"target_accuracy", nullptr},
      {"out_dir", "astraea_out"},
      {"dataset", "synthetic"},
      {"idx_images", ""},
      {"idx_labels", ""},
      {"idx_test_images", ""},
      {"idx_test_labels", ""},
      {"idx_holdout_per_class", 100},
      {"model", {{"kind", "softmax"}, {"hidden_units", 32}}},
      {"synthetic",
       {{"num_classes", 10}, {"feature_dim", 20}, {"train_per_class", 600}, {"test_per_class", 100}, {"separation", 3.0}}},
      {"partition",
       {{"size", "power_law"},
        {"exponent", 1.0},
        {"local", "random"},
        {"global", "zipf"},
        {"zipf_exponent", 1.0},
        {"frequency", nlohmann::json::array()},
        {"total", 0}}},
      {"transform",
       {{"kind", "vector_jitter"},
        {"sigma", 0.1},
        {"scale_min", 1.0},
        {"scale_max", 1.0},
        {"image_rows", 0},
        {"image_cols", 0},
        {"max_shift", 0.1},
        {"max_rotation_deg", 10.0},
        {"max_shear_deg", 10.0},
        {"max_zoom", 0.1}}},
      {"proposition", {{"rounds", 10}, {"clients", 4}, {"local_epochs", 1}, {"lr", 0.5}}},
      {"client_distributions", nlohmann::json::array()},
  };
  return d;
}

void reject_unknown(const nlohmann::json& doc, const nlohmann::json& schema, const std::string& prefix) {
  if (!doc.is_object()) throw ConfigError((prefix.empty() ? std::string("config") : prefix) + ": expected an object");
  for (const auto& [key, value] : doc.items()) {
    const std::string name = prefix.empty() ? key : prefix + "." + key;
    if (!schema.contains(key)) throw ConfigError("unknown key '" + name + "'");
    if (schema.at(key).is_object()) reject_unknown(value, schema.at(key), name);
  }
}

const nlohmann::json& at_path(const nlohmann::json& doc, const std::string& dotted) {
  const nlohmann::json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = dotted.find('.', start);
    node = &node->at(dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start));
    if (dot == std::string::npos) return *node;
    start = dot + 1;
  }
}

// Typed lookup that names the key on failure.
template <typename T>
T get(const nlohmann::json& doc, const std::string& dotted) {
  const nlohmann::json& node = at_path(doc, dotted);
  try {
    return node.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(dotted + ": wrong type (got " + node.dump() + ")");
  }
}

std::size_t get_count(const nlohmann::json& doc, const std::string& key, std::size_t min_value) {
  const nlohmann::json& node = at_path(doc, key);
  if (!node.is_number_integer()) throw ConfigError(key + ": must be an integer (got " + node.dump() + ")");
  const auto v = node.get<std::int64_t>();
  if (v < static_cast<std::int64_t>(min_value)) throw ConfigError(key + ": must be >= " + std::to_string(min_value));
  return static_cast<std::size_t>(v);
}

RunMode run_mode_from_string(const std::string& s) {
  if (s == "astraea") return RunMode::astraea;
  if (s == "fedavg") return RunMode::fedavg;
  if (s == "proposition-check" || s == "proposition_check") return RunMode::proposition_check;
  if (s == "schedule-only" || s == "schedule_only") return RunMode::schedule_only;
  throw ConfigError("mode: must be astraea|fedavg|proposition-check|schedule-only (got '" + s + "')");
}

template <typename Fn>
auto wrap(const std::string& key, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

}  // namespace

std::string to_string(RunMode mode) {
  switch (mode) {
    case RunMode::astraea: return "astraea";
    case RunMode::fedavg: return "fedavg";
    case RunMode::proposition_check: return "proposition-check";
    case RunMode::schedule_only: return "schedule-only";
  }
  return "?";
}

nlohmann::json default_config_json() { return defaults(); }

RunConfig parse_config_json(const nlohmann::json& doc) {
  reject_unknown(doc, defaults(), "");
  nlohmann::json full = defaults();
  full.merge_patch(doc);
  // merge_patch drops null members; keep the key present for lookups.
  if (!full.contains("target_accuracy")) full["target_accuracy"] = nullptr;

  RunConfig cfg;
  cfg.mode = run_mode_from_string(get<std::string>(full, "mode"));

  TrainingConfig& t = cfg.training;
  t.mode = cfg.mode == RunMode::fedavg ? Mode::fedavg : Mode::astraea;
  t.num_clients = get_count(full, "k", 1);
  t.batch_size = get_count(full, "b", 1);
  t.clients_per_round = get_count(full, "c", 1);
  if (t.clients_per_round > t.num_clients) {
    throw ConfigError("c: must not exceed k (c = " + std::to_string(t.clients_per_round) + ", k = " +
                      std::to_string(t.num_clients) + ")");
  }
  t.alpha = get<double>(full, "alpha");
  if (!(t.alpha >= 0.0 && t.alpha <= 1.0)) throw ConfigError("alpha: must lie in [0, 1]");
  t.gamma = get_count(full, "gamma", 1);
  t.local_epochs = get_count(full, "local_epochs", 1);
  t.mediator_epochs = get_count(full, "mediator_epochs", 1);
  t.rounds = get_count(full, "rounds", 1);
  t.seed = get<std::uint64_t>(full, "seed");
  t.optimizer.kind = wrap("optimizer", [&] { return optimizer_kind_from_string(get<std::string>(full, "optimizer")); });
  t.optimizer.learning_rate = get<double>(full, "lr");
  if (!(t.optimizer.learning_rate > 0.0)) throw ConfigError("lr: must be > 0");
  t.static_schedule = get<bool>(full, "static_schedule");
  t.threads = get_count(full, "threads", 1);
  t.wire_bytes_per_param = get_count(full, "wire_bytes_per_param", 1);
  t.checkpoint_interval = get_count(full, "checkpoint_interval", 0);
  t.stop_at_best_validation = get<bool>(full, "stop_at_best_validation");
  t.transform = wrap("transform", [&] { return TransformConfig::from_json(full.at("transform")); });

  if (!full.at("target_accuracy").is_null()) cfg.target_accuracy = get<double>(full, "target_accuracy");
  cfg.out_dir = get<std::string>(full, "out_dir");
  if (cfg.out_dir.empty()) throw ConfigError("out_dir: must not be empty");
  t.checkpoint_dir = cfg.out_dir / "checkpoints";

  cfg.model_kind = wrap("model.kind", [&] { return model_kind_from_string(get<std::string>(full, "model.kind")); });
  cfg.hidden_units = get_count(full, "model.hidden_units", 1);

  const std::string source = get<std::string>(full, "dataset");
  if (source == "synthetic") cfg.dataset = DatasetSource::synthetic;
  else if (source == "idx") cfg.dataset = DatasetSource::idx;
  else throw ConfigError("dataset: must be synthetic|idx (got '" + source + "')");
  cfg.idx.images = get<std::string>(full, "idx_images");
  cfg.idx.labels = get<std::string>(full, "idx_labels");
  cfg.idx.test_images = get<std::string>(full, "idx_test_images");
  cfg.idx.test_labels = get<std::string>(full, "idx_test_labels");
  cfg.idx.holdout_per_class = static_cast<std::int64_t>(get_count(full, "idx_holdout_per_class", 0));
  if (cfg.dataset == DatasetSource::idx && (cfg.idx.images.empty() || cfg.idx.labels.empty())) {
    throw ConfigError("idx_images/idx_labels: required when dataset = idx");
  }
  if (cfg.idx.test_images.empty() != cfg.idx.test_labels.empty()) {
    throw ConfigError("idx_test_images/idx_test_labels: give both or neither");
  }

  cfg.synthetic.num_classes = get_count(full, "synthetic.num_classes", 2);
  cfg.synthetic.feature_dim = get_count(full, "synthetic.feature_dim", 1);
  cfg.synthetic.train_per_class = static_cast<std::int64_t>(get_count(full, "synthetic.train_per_class", 1));
  cfg.synthetic.test_per_class = static_cast<std::int64_t>(get_count(full, "synthetic.test_per_class", 1));
  cfg.synthetic.separation = get<double>(full, "synthetic.separation");
  if (!(cfg.synthetic.separation > 0.0)) throw ConfigError("synthetic.separation: must be > 0");

  // Partition: named global shapes resolve to frequency vectors once the class
  // count is known (see runner); here we only validate the shape.
  const auto& p = full.at("partition");
  PartitionProfile& profile = cfg.partition;
  const std::string global = get<std::string>(full, "partition.global");
  nlohmann::json pj = p;
  if (global == "zipf" || global == "letters" || global == "normal") pj["global"] = "frequency";
  pj.erase("zipf_exponent");
  if (pj.at("frequency").empty()) pj.erase("frequency");
  profile = wrap("partition", [&] { return PartitionProfile::from_json(pj); });
  if (profile.size == SizeProfile::power_law && !(profile.exponent >= 0.0)) throw ConfigError("partition.exponent: must be >= 0");
  const double zipf_exponent = get<double>(full, "partition.zipf_exponent");
  if (!(zipf_exponent >= 0.0)) throw ConfigError("partition.zipf_exponent: must be >= 0");
  if (global == "frequency" && profile.frequency.empty()) throw ConfigError("partition.frequency: required when global = frequency");

  cfg.proposition.rounds = get_count(full, "proposition.rounds", 1);
  cfg.proposition.clients = get_count(full, "proposition.clients", 1);
  cfg.proposition.local_epochs = get_count(full, "proposition.local_epochs", 1);
  cfg.proposition.lr = get<double>(full, "proposition.lr");
  if (!(cfg.proposition.lr > 0.0)) throw ConfigError("proposition.lr: must be > 0");

  cfg.client_distributions = get<std::vector<std::vector<std::int64_t>>>(full, "client_distributions");
  for (std::size_t i = 0; i < cfg.client_distributions.size(); ++i) {
    const auto& row = cfg.client_distributions[i];
    if (row.size() != cfg.client_distributions.front().size() || row.empty()) {
      throw ConfigError("client_distributions[" + std::to_string(i) + "]: rows must be nonempty and equally long");
    }
    std::int64_t total = 0;
    for (auto v : row) {
      if (v < 0) throw ConfigError("client_distributions[" + std::to_string(i) + "]: counts must be >= 0");
      total += v;
    }
    if (total == 0) throw ConfigError("client_distributions[" + std::to_string(i) + "]: client has no samples");
  }

  wrap("config", [&] {
    t.validate();
    return 0;
  });
  cfg.resolved = std::move(full);
  return cfg;
}

RunConfig parse_config(const std::filesystem::path& path) { return resolve_config(path, nlohmann::json::object()); }

RunConfig resolve_config(const std::optional<std::filesystem::path>& path, const nlohmann::json& overrides) {
  nlohmann::json doc = nlohmann::json::object();
  if (path) {
    std::ifstream in(*path);
    if (!in) throw ConfigError("cannot open config file '" + path->string() + "'");
    try {
      doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError("config file '" + path->string() + "' is not valid JSON: " + e.what());
    }
  }
  reject_unknown(doc, defaults(), "");
  reject_unknown(overrides, defaults(), "");
  doc.merge_patch(overrides);
  return parse_config_json(doc);
}

}  // namespace astraea
