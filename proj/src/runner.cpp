#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "astraea/apportion.hpp"
#include "astraea/augmentation.hpp"
#include "astraea/config.hpp"
#include "astraea/error.hpp"
#include "astraea/random.hpp"

namespace astraea {

namespace {

constexpr std::uint64_t kTestIdOffset = std::uint64_t{1} << 40;

struct Data {
  LabeledDataset train;
  LabeledDataset test;
};

std::vector<double> resolve_frequency(const RunConfig& cfg, std::size_t num_classes) {
  const auto& p = cfg.resolved.at("partition");
  const std::string global = p.at("global").get<std::string>();
  if (global == "zipf") return zipf_frequency(num_classes, p.at("zipf_exponent").get<double>());
  if (global == "normal") return normal_frequency(num_classes);
  if (global == "letters") {
    if (num_classes != 26) throw ConfigError("partition.global: letters needs 26 classes, data has " + std::to_string(num_classes));
    return english_letter_frequency();
  }
  if (global == "balanced") return std::vector<double>(num_classes, 1.0 / static_cast<double>(num_classes));
  return cfg.partition.frequency;
}

PartitionProfile resolved_profile(const RunConfig& cfg, std::size_t num_classes) {
  PartitionProfile profile = cfg.partition;
  if (profile.global == GlobalProfile::frequency) profile.frequency = resolve_frequency(cfg, num_classes);
  return profile;
}

Data load_data(const RunConfig& cfg, PartitionProfile& profile) {
  const std::uint64_t seed = cfg.training.seed;
  if (cfg.dataset == DatasetSource::synthetic) {
    const auto& s = cfg.synthetic;
    const std::int64_t train_total = s.train_per_class * static_cast<std::int64_t>(s.num_classes);
    std::vector<std::int64_t> counts(s.num_classes, s.train_per_class);
    if (profile.global != GlobalProfile::as_is) {
      const auto freq = profile.global == GlobalProfile::balanced
                            ? std::vector<double>(s.num_classes, 1.0 / static_cast<double>(s.num_classes))
                            : profile.frequency;
      // Generate exactly the requested mix; the partition resample then keeps all of it.
      counts = apportion(std::span<const double>(freq), train_total);
      if (profile.total == 0) profile.total = train_total;
    }
    std::vector<std::int64_t> test_counts(s.num_classes, s.test_per_class);
    return {make_synthetic(s.num_classes, counts, s.feature_dim, s.separation, derive_seed(seed, {stream::kSynthetic, 0})),
            make_synthetic(s.num_classes, test_counts, s.feature_dim, s.separation,
                           derive_seed(seed, {stream::kSynthetic, 1}), kTestIdOffset)};
  }

  LabeledDataset all = load_idx(cfg.idx.images, cfg.idx.labels);
  if (!cfg.idx.test_images.empty()) {
    LabeledDataset test = load_idx(cfg.idx.test_images, cfg.idx.test_labels, all.num_classes());
    return {std::move(all), std::move(test)};
  }
  // Balanced hold-out: the first holdout_per_class samples of each class after a seeded shuffle.
  std::vector<std::vector<std::size_t>> by_class(all.num_classes());
  for (std::size_t i = 0; i < all.size(); ++i) by_class[static_cast<std::size_t>(all.label(i))].push_back(i);
  std::vector<std::size_t> test_rows, train_rows;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    Rng rng(derive_seed(seed, {stream::kPartition, 99, c}));
    std::shuffle(by_class[c].begin(), by_class[c].end(), rng);
    const auto take = std::min<std::size_t>(by_class[c].size(), static_cast<std::size_t>(cfg.idx.holdout_per_class));
    test_rows.insert(test_rows.end(), by_class[c].begin(), by_class[c].begin() + static_cast<std::ptrdiff_t>(take));
    train_rows.insert(train_rows.end(), by_class[c].begin() + static_cast<std::ptrdiff_t>(take), by_class[c].end());
  }
  std::sort(test_rows.begin(), test_rows.end());
  std::sort(train_rows.begin(), train_rows.end());
  if (test_rows.empty()) throw ConfigError("idx_holdout_per_class: hold-out test set is empty");
  return {all.subset(train_rows), all.subset(test_rows)};
}

// Synthetic data is generated in the requested class mix, so the frequency must
// be known first; IDX data fixes the class count only once loaded.
Data prepare(const RunConfig& cfg, PartitionProfile& profile) {
  if (cfg.dataset == DatasetSource::synthetic) {
    profile = resolved_profile(cfg, cfg.synthetic.num_classes);
    return load_data(cfg, profile);
  }
  profile = cfg.partition;
  Data data = load_data(cfg, profile);
  profile = resolved_profile(cfg, data.train.num_classes());
  return data;
}

ModelArch make_arch(const RunConfig& cfg, const LabeledDataset& train) {
  if (cfg.model_kind == ModelKind::mlp) return ModelArch::mlp(train.feature_dim(), cfg.hidden_units, train.num_classes());
  return ModelArch::softmax(train.feature_dim(), train.num_classes());
}

std::string hex(std::uint64_t v) { return fmt::format("{:016x}", v); }

std::uint64_t partition_fingerprint(const ClientPartition& p) {
  std::uint64_t h = 0;
  for (const auto& c : p.clients) h = mix64(h ^ c.fingerprint());
  return h;
}

class OutputDir {
 public:
  explicit OutputDir(std::filesystem::path dir) : dir_(std::move(dir)) { std::filesystem::create_directories(dir_); }

  template <typename Writer>
  void write(const std::string& name, Writer&& writer) {
    std::ofstream out(dir_ / name);
    if (!out) throw ConfigError("cannot write " + (dir_ / name).string());
    writer(out);
    files_.push_back(name);
  }

  void finish(nlohmann::json manifest) {
    files_.push_back("manifest.json");
    manifest["outputs"] = files_;
    std::ofstream(dir_ / "manifest.json") << manifest.dump(2) << '\n';
  }

  const std::filesystem::path& path() const { return dir_; }

 private:
  std::filesystem::path dir_;
  std::vector<std::string> files_;
};

nlohmann::json base_manifest(const RunConfig& cfg) {
  return {{"software", {{"name", "astraea"}, {"version", ASTRAEA_VERSION}}},
          {"mode", to_string(cfg.mode)},
          {"seed", cfg.training.seed},
          {"config", cfg.resolved}};
}

nlohmann::json schedules_json(const std::vector<ScheduleRecord>& schedules) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& s : schedules) {
    nlohmann::json meds = nlohmann::json::array();
    for (const auto& m : s.assignment.mediators) meds.push_back(m.clients);
    out.push_back({{"round", s.round}, {"mediators", meds}});
  }
  return out;
}

int run_training(const RunConfig& cfg, std::ostream& log) {
  PartitionProfile profile;
  Data data = prepare(cfg, profile);
  const ModelArch arch = make_arch(cfg, data.train);
  const ClientPartition partition =
      partition_clients(data.train, cfg.training.num_clients, profile, derive_seed(cfg.training.seed, {stream::kPartition}));

  TrainingConfig training = cfg.training;
  training.checkpoint_dir = cfg.out_dir / "checkpoints";
  const bool mediated = cfg.mode == RunMode::astraea;
  fmt::print(log, "{}: K={} c={} R={} |w|={} train={} test={}\n", to_string(cfg.mode), training.num_clients,
             training.clients_per_round, training.rounds, arch.num_params(), partition.total_samples(), data.test.size());
  const RunResult result = mediated ? run_astraea(training, arch, partition, data.test)
                                    : run_fedavg_baseline(training, arch, partition, data.test);

  OutputDir out(cfg.out_dir);
  out.write("rounds.csv", [&](std::ostream& os) { write_rounds_csv(os, result.reports); });
  if (mediated) {
    out.write("kld.csv", [&](std::ostream& os) { write_kld_csv(os, result.kld_records); });
  } else {
    // Without mediators each sampled client is its own group.
    std::vector<MediatorKldRecord> records;
    for (const auto& r : result.reports) {
      for (ClientId id : sample_clients(training.num_clients, training.clients_per_round, training.seed, r.round)) {
        records.push_back({r.round, id, 1, kld_to_uniform(partition.histogram(id))});
      }
    }
    out.write("kld.csv", [&](std::ostream& os) { write_kld_csv(os, records); });
  }
  const ConfusionMatrix cm = confusion(result.final_weights, data.test);
  out.write("confusion.csv", [&](std::ostream& os) { write_confusion_csv(os, cm); });
  out.write("traffic.csv", [&](std::ostream& os) { write_traffic_csv(os, result.ledger); });
  out.write("timing.csv", [&](std::ostream& os) {
    write_timing_csv(os, result.reports, training.local_epochs, training.mediator_epochs, training.gamma, mediated);
  });

  const RoundReport& last = result.reports.back();
  const double final_accuracy = cm.accuracy();
  nlohmann::json manifest = base_manifest(cfg);
  manifest["model"] = arch.to_json();
  manifest["partition_profile"] = profile.to_json();
  manifest["fingerprints"] = {{"train", hex(data.train.fingerprint())},
                              {"test", hex(data.test.fingerprint())},
                              {"partition", hex(partition_fingerprint(partition))}};
  if (mediated) {
    manifest["fingerprints"]["augmented_partition"] = hex(result.augmented_fingerprint);
    manifest["augmentation_plan"] = result.plan->to_json();
    manifest["schedules"] = schedules_json(result.schedules);
  }
  nlohmann::json results{{"final_accuracy", final_accuracy},
                         {"last_round_accuracy", last.accuracy},
                         {"best_round", result.best_round},
                         {"cumulative_bytes", result.ledger.cumulative_bytes()}};
  if (cfg.target_accuracy) {
    const auto cost = cost_to_target(result.reports, *cfg.target_accuracy);
    results["target_accuracy"] = *cfg.target_accuracy;
    results["cost_to_target_bytes"] = cost ? nlohmann::json(*cost) : nlohmann::json(nullptr);
  }
  manifest["results"] = results;
  if (training.checkpoint_interval > 0) manifest["checkpoint_dir"] = "checkpoints";
  out.finish(manifest);

  fmt::print(log, "final accuracy: {:.4f}\n", final_accuracy);
  fmt::print(log, "cumulative traffic: {:.3f} MB\n", static_cast<double>(result.ledger.cumulative_bytes()) / 1e6);
  if (cfg.target_accuracy) {
    const auto cost = cost_to_target(result.reports, *cfg.target_accuracy);
    if (cost) fmt::print(log, "cost to {:.4f}: {:.3f} MB\n", *cfg.target_accuracy, static_cast<double>(*cost) / 1e6);
    else fmt::print(log, "cost to {:.4f}: not reached\n", *cfg.target_accuracy);
  }
  return 0;
}

int run_proposition(const RunConfig& cfg, std::ostream& log) {
  PartitionProfile unused = cfg.partition;
  unused.global = GlobalProfile::as_is;
  Data data = load_data(cfg, unused);
  // Clients share one balanced dataset.
  const std::vector<double> uniform(data.train.num_classes(), 1.0 / static_cast<double>(data.train.num_classes()));
  const std::int64_t total = max_feasible_total(class_histogram(data.train), uniform);
  const LabeledDataset balanced = resample_to_frequency(data.train, uniform, total, derive_seed(cfg.training.seed, {stream::kResample}));
  const ModelArch arch = make_arch(cfg, balanced);
  std::vector<LabeledDataset> copies(cfg.proposition.clients, balanced);
  const PropositionResult r =
      proposition_check(arch, copies, cfg.proposition.rounds, cfg.proposition.local_epochs, cfg.proposition.lr, cfg.training.seed);

  OutputDir out(cfg.out_dir);
  out.write("proposition.csv", [&](std::ostream& os) {
    os << "round,max_abs_divergence\n";
    for (std::size_t i = 0; i < r.per_round.size(); ++i) fmt::print(os, "{},{:.6e}\n", i + 1, r.per_round[i]);
  });
  nlohmann::json manifest = base_manifest(cfg);
  manifest["model"] = arch.to_json();
  manifest["fingerprints"] = {{"balanced", hex(balanced.fingerprint())}};
  manifest["results"] = {{"max_divergence", r.max_divergence}, {"rounds", cfg.proposition.rounds}};
  out.finish(manifest);
  fmt::print(log, "max divergence: {:.6e}\n", r.max_divergence);
  return 0;
}

int run_schedule_only(const RunConfig& cfg, std::ostream& log) {
  std::vector<MediatorKldRecord> records;
  std::vector<ScheduleRecord> schedules;
  std::vector<double> mediator_kld, client_kld;
  nlohmann::json manifest = base_manifest(cfg);

  auto schedule_round = [&](std::size_t round, const std::map<ClientId, ClassDistribution>& scheduled,
                            const std::map<ClientId, ClassDistribution>& raw) {
    MediatorAssignment a = reschedule(scheduled, cfg.training.gamma);
    const KldReport rep = kld_report(a, scheduled);
    for (std::size_t m = 0; m < a.mediators.size(); ++m) {
      records.push_back({round, m, a.mediators[m].clients.size(), rep.mediator_kld[m]});
      mediator_kld.push_back(rep.mediator_kld[m]);
    }
    for (const auto& [id, h] : raw) client_kld.push_back(kld_to_uniform(h));
    schedules.push_back({round, std::move(a)});
  };

  if (!cfg.client_distributions.empty()) {
    std::map<ClientId, ClassDistribution> dists;
    for (std::size_t i = 0; i < cfg.client_distributions.size(); ++i) dists.emplace(i, ClassDistribution(cfg.client_distributions[i]));
    schedule_round(1, dists, dists);
    manifest["source"] = "client_distributions";
  } else {
    PartitionProfile profile;
    Data data = prepare(cfg, profile);
    const ClientPartition partition =
        partition_clients(data.train, cfg.training.num_clients, profile, derive_seed(cfg.training.seed, {stream::kPartition}));
    // Post-augmentation histograms follow from the plan alone; no samples need synthesizing.
    const AugmentationPlan plan = compute_plan(partition.global_histogram(), cfg.training.alpha);
    std::vector<ClassDistribution> raw(partition.size()), augmented(partition.size());
    for (std::size_t k = 0; k < partition.size(); ++k) raw[k] = augmented[k] = partition.histogram(k);
    for (int cls : plan.aug_set) {
      const auto gains = client_gains(partition, plan, cls);
      for (std::size_t k = 0; k < partition.size(); ++k) augmented[k].counts[static_cast<std::size_t>(cls)] += gains[k];
    }
    std::vector<ClientId> frozen;
    for (std::size_t round = 1; round <= cfg.training.rounds; ++round) {
      const auto online = cfg.training.static_schedule && round > 1
                              ? frozen
                              : sample_clients(cfg.training.num_clients, cfg.training.clients_per_round, cfg.training.seed, round);
      frozen = online;
      std::map<ClientId, ClassDistribution> scheduled, unaugmented;
      for (ClientId id : online) {
        scheduled.emplace(id, augmented[id]);
        unaugmented.emplace(id, raw[id]);
      }
      schedule_round(round, scheduled, unaugmented);
      if (cfg.training.static_schedule) {
        // One assignment serves every round.
        for (std::size_t r = round + 1; r <= cfg.training.rounds; ++r) {
          for (std::size_t m = 0; m < schedules.back().assignment.mediators.size(); ++m) {
            const auto& rec = records[records.size() - schedules.back().assignment.mediators.size() + m];
            records.push_back({r, rec.mediator_id, rec.size, rec.kld});
          }
        }
        break;
      }
    }
    manifest["source"] = "partition";
    manifest["augmentation_plan"] = plan.to_json();
    manifest["fingerprints"] = {{"train", hex(data.train.fingerprint())}, {"partition", hex(partition_fingerprint(partition))}};
  }

  const KldStats med = summarize(mediator_kld);
  const KldStats cli = summarize(client_kld);
  OutputDir out(cfg.out_dir);
  out.write("kld.csv", [&](std::ostream& os) { write_kld_csv(os, records); });
  manifest["schedules"] = schedules_json(schedules);
  manifest["results"] = {{"mediator_kld", med.to_json()}, {"client_kld", cli.to_json()}};
  out.finish(manifest);
  fmt::print(log, "mediators: {}  mean mediator KLD: {:.4f}  mean client KLD: {:.4f}\n", med.count, med.mean, cli.mean);
  return 0;
}

}  // namespace

int run(const RunConfig& config, std::ostream& log) {
  try {
    switch (config.mode) {
      case RunMode::astraea:
      case RunMode::fedavg: return run_training(config, log);
      case RunMode::proposition_check: return run_proposition(config, log);
      case RunMode::schedule_only: return run_schedule_only(config, log);
    }
  } catch (const Error& e) {
    fmt::print(log, "error: {}\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    fmt::print(log, "error: {}\n", e.what());
    return 1;
  }
  return 1;
}

}  // namespace astraea
