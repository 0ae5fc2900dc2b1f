#include "astraea/engine.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <numeric>
#include <thread>

#include <fmt/format.h>

#include "astraea/error.hpp"
#include "astraea/random.hpp"

namespace astraea {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

void check_partition(const TrainingConfig& cfg, const ModelArch& arch, const ClientPartition& partition,
                     const LabeledDataset& test_set) {
  if (partition.size() != cfg.num_clients) {
    throw ConfigError("partition has " + std::to_string(partition.size()) + " clients but K = " + std::to_string(cfg.num_clients));
  }
  for (std::size_t k = 0; k < partition.size(); ++k) {
    const auto& c = partition.clients[k];
    if (c.empty()) throw ConfigError("client " + std::to_string(k) + " holds no data");
    if (c.feature_dim() != arch.input_dim || c.num_classes() != arch.num_classes) {
      throw ConfigError("client " + std::to_string(k) + " data does not match the model architecture");
    }
  }
  if (test_set.empty()) throw ConfigError("test set is empty");
  if (test_set.feature_dim() != arch.input_dim || test_set.num_classes() != arch.num_classes) {
    throw ConfigError("test set does not match the model architecture");
  }
}

LocalTraining local_training(const TrainingConfig& cfg) { return {cfg.local_epochs, cfg.batch_size, cfg.optimizer}; }

// Runs fn(i) for i in [0, n) on up to `threads` workers, rethrowing the first failure.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  auto worker = [&] {
    for (std::size_t i = next++; i < n && !failed; i = next++) {
      try {
        fn(i);
      } catch (...) {
        if (!failed.exchange(true)) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < std::min(threads, n); ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

double pooled_loss(const ParameterVector& w, const ClientPartition& partition, std::span<const ClientId> ids) {
  double weighted = 0.0;
  std::size_t n = 0;
  for (ClientId id : ids) {
    const auto& d = partition.clients[id];
    weighted += mean_loss(w, d.feature_matrix(), d.labels()) * static_cast<double>(d.size());
    n += d.size();
  }
  return weighted / static_cast<double>(n);
}

// Bookkeeping shared by both training loops.
struct RoundTracker {
  const TrainingConfig& cfg;
  const LabeledDataset& test_set;
  RunResult& result;
  double best_accuracy = -1.0;
  ParameterVector best_weights;

  void finish_round(std::size_t round, const ParameterVector& w, RoundReport report, Clock::time_point t0) {
    report.round = round;
    report.accuracy = top1_accuracy(w, test_set.feature_matrix(), test_set.labels());
    const TrafficEntry& e = result.ledger.close_round(round);
    report.down_bytes = e.down_bytes;
    report.up_bytes = e.up_bytes;
    report.bytes = e.bytes();
    report.cumulative_bytes = e.cumulative_bytes;
    report.wall_seconds = seconds_since(t0);
    if (report.accuracy > best_accuracy) {
      best_accuracy = report.accuracy;
      best_weights = w;
      result.best_round = round;
    }
    if (cfg.record_trajectory) result.trajectory.push_back(w);
    if (cfg.checkpoint_interval > 0 && round % cfg.checkpoint_interval == 0) {
      save_checkpoint(cfg.checkpoint_dir.empty() ? std::filesystem::path(".") : cfg.checkpoint_dir, round, w);
    }
    result.reports.push_back(report);
  }

  void finish_run(const ParameterVector& w) {
    result.final_weights = cfg.stop_at_best_validation ? best_weights : w;
  }
};

}  // namespace

std::string to_string(Mode mode) { return mode == Mode::astraea ? "astraea" : "fedavg"; }

void TrainingConfig::validate() const {
  if (num_clients < 1) throw ConfigError("k: must be >= 1");
  if (clients_per_round < 1 || clients_per_round > num_clients) throw ConfigError("c: must satisfy 1 <= c <= k");
  if (batch_size < 1) throw ConfigError("b: must be >= 1");
  if (gamma < 1) throw ConfigError("gamma: must be >= 1");
  if (local_epochs < 1) throw ConfigError("local_epochs: must be >= 1");
  if (mediator_epochs < 1) throw ConfigError("mediator_epochs: must be >= 1");
  if (rounds < 1) throw ConfigError("rounds: must be >= 1");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha: must lie in [0, 1]");
  if (threads < 1) throw ConfigError("threads: must be >= 1");
  if (wire_bytes_per_param < 1) throw ConfigError("wire_bytes_per_param: must be >= 1");
  try {
    optimizer.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("lr/optimizer: ") + e.what());
  }
}

nlohmann::json TrainingConfig::to_json() const {
  return {{"mode", to_string(mode)},
          {"k", num_clients},
          {"b", batch_size},
          {"c", clients_per_round},
          {"alpha", alpha},
          {"gamma", gamma},
          {"local_epochs", local_epochs},
          {"mediator_epochs", mediator_epochs},
          {"rounds", rounds},
          {"optimizer", to_string(optimizer.kind)},
          {"lr", optimizer.learning_rate},
          {"seed", seed},
          {"static_schedule", static_schedule},
          {"threads", threads},
          {"wire_bytes_per_param", wire_bytes_per_param},
          {"transform", transform.to_json()},
          {"checkpoint_interval", checkpoint_interval},
          {"stop_at_best_validation", stop_at_best_validation}};
}

std::uint64_t client_train_seed(std::uint64_t run_seed, std::size_t round, ClientId client, std::size_t pass) {
  return derive_seed(run_seed, {stream::kClientTrain, round, client, pass});
}

ParameterVector client_update(const ParameterVector& w, const LabeledDataset& data, const LocalTraining& training,
                              std::uint64_t seed, double* epoch_seconds) {
  if (data.empty()) throw ConfigError("client_update needs a nonempty dataset");
  if (training.local_epochs < 1 || training.batch_size < 1) throw ConfigError("client_update needs E >= 1 and B >= 1");
  training.optimizer.validate();

  std::vector<std::size_t> by_id(data.size());
  std::iota(by_id.begin(), by_id.end(), 0);
  std::sort(by_id.begin(), by_id.end(), [&](std::size_t a, std::size_t b) { return data.id(a) < data.id(b); });

  OptimizerState state(training.optimizer);
  ParameterVector current = w;
  const auto t0 = Clock::now();
  std::vector<std::size_t> order;
  for (std::size_t epoch = 0; epoch < training.local_epochs; ++epoch) {
    order = by_id;
    Rng rng(derive_seed(seed, {epoch}));
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += training.batch_size) {
      const std::size_t stop = std::min(order.size(), start + training.batch_size);
      std::span<const std::size_t> rows(order.data() + start, stop - start);
      const Matrix x = data.gather(rows);
      const std::vector<int> y = data.gather_labels(rows);
      auto lg = loss_and_grad(current, x, y);
      auto [next, next_state] = optimizer_step(current, lg.grad, std::move(state));
      current = std::move(next);
      state = std::move(next_state);
    }
  }
  if (epoch_seconds) *epoch_seconds = seconds_since(t0) / static_cast<double>(training.local_epochs);
  return current;
}

ParameterVector mediator_update(std::span<const MediatorMember> members, const ParameterVector& w,
                                std::size_t mediator_epochs, const LocalTraining& training, std::uint64_t run_seed,
                                std::size_t round, double* epoch_seconds) {
  if (members.empty()) throw ConfigError("mediator has no clients");
  if (mediator_epochs < 1) throw ConfigError("mediator_epochs must be >= 1");
  ParameterVector current = w;
  double epoch_total = 0.0;
  std::size_t updates = 0;
  for (std::size_t pass = 0; pass < mediator_epochs; ++pass) {
    for (const auto& m : members) {
      double t = 0.0;
      current = client_update(current, *m.data, training, client_train_seed(run_seed, round, m.id, pass), &t);
      epoch_total += t;
      ++updates;
    }
  }
  if (epoch_seconds) *epoch_seconds = epoch_total / static_cast<double>(updates);
  return difference(current, w);
}

ParameterVector aggregate_deltas(const ParameterVector& w, std::vector<Contribution> contributions) {
  if (contributions.empty()) throw ConfigError("aggregation needs at least one contribution");
  std::sort(contributions.begin(), contributions.end(),
            [](const Contribution& a, const Contribution& b) { return a.order_key < b.order_key; });
  std::size_t n = 0;
  for (const auto& c : contributions) {
    if (c.delta.size() != w.size()) throw ConfigError("update length does not match the global model");
    n += c.samples;
  }
  if (n == 0) throw ConfigError("aggregation weights sum to zero");
  std::vector<double> out(w.values().begin(), w.values().end());
  for (const auto& c : contributions) {
    const double share = static_cast<double>(c.samples) / static_cast<double>(n);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += share * c.delta[i];
  }
  return ParameterVector(w.arch(), std::move(out));
}

ParameterVector fedavg_aggregate(const ParameterVector& w,
                                 std::span<const std::pair<std::size_t, ParameterVector>> client_weights) {
  std::vector<Contribution> contributions;
  contributions.reserve(client_weights.size());
  for (std::size_t i = 0; i < client_weights.size(); ++i) {
    contributions.push_back({client_weights[i].first, i, difference(client_weights[i].second, w)});
  }
  return aggregate_deltas(w, std::move(contributions));
}

std::vector<ClientId> sample_clients(std::size_t num_clients, std::size_t count, std::uint64_t run_seed,
                                     std::size_t round) {
  if (count > num_clients) throw ConfigError("cannot sample more clients than exist");
  std::vector<ClientId> ids(num_clients);
  std::iota(ids.begin(), ids.end(), 0);
  Rng rng(derive_seed(run_seed, {stream::kSampling, round}));
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, num_clients - 1);
    std::swap(ids[i], ids[pick(rng)]);
  }
  ids.resize(count);
  std::sort(ids.begin(), ids.end());
  return ids;
}

RunResult run_astraea(const TrainingConfig& config, const ModelArch& arch, const ClientPartition& partition,
                      const LabeledDataset& test_set) {
  config.validate();
  arch.validate();
  if (config.mode != Mode::astraea) throw ConfigError("run_astraea needs mode = astraea");
  check_partition(config, arch, partition, test_set);

  RunResult result;
  result.ledger = TrafficLedger(config.wire_bytes_per_param);
  RoundTracker tracker{config, test_set, result, -1.0, {}};
  const LocalTraining training = local_training(config);

  // Initialization: every client declares its class histogram (N int64 counts).
  for (std::size_t k = 0; k < partition.size(); ++k) result.ledger.raw_up(arch.num_classes * sizeof(std::int64_t));
  result.ledger.close_round(0);

  // Rebalancing.
  const AugmentationPlan plan = compute_plan(partition.global_histogram(), config.alpha);
  const ClientPartition data = apply_plan(partition, plan, config.transform, derive_seed(config.seed, {stream::kAugment}));
  result.plan = plan;
  std::uint64_t fp = 0;
  for (const auto& c : data.clients) fp = mix64(fp ^ c.fingerprint());
  result.augmented_fingerprint = fp;

  std::vector<ClassDistribution> hist(data.size());
  for (std::size_t k = 0; k < data.size(); ++k) hist[k] = class_histogram(data.clients[k]);

  ParameterVector w = ParameterVector::random_uniform(arch, config.seed);
  result.initial_weights = w;
  std::optional<MediatorAssignment> frozen;
  std::vector<ClientId> frozen_online;

  for (std::size_t round = 1; round <= config.rounds; ++round) {
    const auto t0 = Clock::now();
    std::vector<ClientId> online;
    MediatorAssignment assignment;
    std::map<ClientId, ClassDistribution> dists;
    if (config.static_schedule && frozen) {
      online = frozen_online;
      assignment = *frozen;
      for (ClientId id : online) dists.emplace(id, hist[id]);
    } else {
      online = sample_clients(config.num_clients, config.clients_per_round, config.seed, round);
      for (ClientId id : online) dists.emplace(id, hist[id]);
      assignment = reschedule(dists, config.gamma);
      if (config.static_schedule) {
        frozen = assignment;
        frozen_online = online;
      }
    }
    const KldReport kr = kld_report(assignment, dists);
    result.schedules.push_back({round, assignment});
    for (std::size_t m = 0; m < assignment.mediators.size(); ++m) {
      result.kld_records.push_back({round, m, assignment.mediators[m].clients.size(), kr.mediator_kld[m]});
    }

    // Transfers: server -> mediator, mediator -> each client and back, mediator -> server.
    for (const auto& med : assignment.mediators) {
      result.ledger.model_down(arch.num_params());
      for (std::size_t i = 0; i < med.clients.size(); ++i) {
        result.ledger.model_down(arch.num_params());
        result.ledger.model_up(arch.num_params());
      }
      result.ledger.model_up(arch.num_params());
    }

    const std::size_t num_meds = assignment.mediators.size();
    std::vector<Contribution> contributions(num_meds);
    std::vector<double> epoch_seconds(num_meds, 0.0);
    parallel_for(num_meds, config.threads, [&](std::size_t m) {
      const Mediator& med = assignment.mediators[m];
      std::vector<MediatorMember> members;
      std::size_t n_m = 0;
      for (ClientId id : med.clients) {
        members.push_back({id, &data.clients[id]});
        n_m += data.clients[id].size();
      }
      contributions[m].samples = n_m;
      contributions[m].order_key = *std::min_element(med.clients.begin(), med.clients.end());
      contributions[m].delta =
          mediator_update(members, w, config.mediator_epochs, training, config.seed, round, &epoch_seconds[m]);
    });
    w = aggregate_deltas(w, std::move(contributions));

    RoundReport report;
    report.num_mediators = num_meds;
    report.mediator_kld = kr.mediators;
    report.client_kld = kr.clients;
    report.train_loss = pooled_loss(w, data, online);
    report.mean_epoch_seconds = std::accumulate(epoch_seconds.begin(), epoch_seconds.end(), 0.0) / static_cast<double>(num_meds);
    tracker.finish_round(round, w, report, t0);
  }
  tracker.finish_run(w);
  return result;
}

RunResult run_fedavg_baseline(const TrainingConfig& config, const ModelArch& arch, const ClientPartition& partition,
                              const LabeledDataset& test_set) {
  config.validate();
  arch.validate();
  if (config.mode != Mode::fedavg) throw ConfigError("run_fedavg_baseline needs mode = fedavg");
  check_partition(config, arch, partition, test_set);

  RunResult result;
  result.ledger = TrafficLedger(config.wire_bytes_per_param);
  RoundTracker tracker{config, test_set, result, -1.0, {}};
  const LocalTraining training = local_training(config);
  result.ledger.close_round(0);

  ParameterVector w = ParameterVector::random_uniform(arch, config.seed);
  result.initial_weights = w;
  for (std::size_t round = 1; round <= config.rounds; ++round) {
    const auto t0 = Clock::now();
    const std::vector<ClientId> online = sample_clients(config.num_clients, config.clients_per_round, config.seed, round);
    for (std::size_t i = 0; i < online.size(); ++i) {
      result.ledger.model_down(arch.num_params());
      result.ledger.model_up(arch.num_params());
    }

    std::vector<Contribution> contributions(online.size());
    std::vector<double> epoch_seconds(online.size(), 0.0);
    parallel_for(online.size(), config.threads, [&](std::size_t i) {
      const ClientId id = online[i];
      const LabeledDataset& d = partition.clients[id];
      const ParameterVector wk = client_update(w, d, training, client_train_seed(config.seed, round, id, 0), &epoch_seconds[i]);
      contributions[i] = {d.size(), id, difference(wk, w)};
    });
    w = aggregate_deltas(w, std::move(contributions));

    std::vector<double> client_kld;
    for (ClientId id : online) client_kld.push_back(kld_to_uniform(class_histogram(partition.clients[id])));

    RoundReport report;
    report.client_kld = summarize(client_kld);
    report.train_loss = pooled_loss(w, partition, online);
    report.mean_epoch_seconds =
        std::accumulate(epoch_seconds.begin(), epoch_seconds.end(), 0.0) / static_cast<double>(online.size());
    tracker.finish_round(round, w, report, t0);
  }
  tracker.finish_run(w);
  return result;
}

PropositionResult proposition_check(const ModelArch& arch, std::span<const LabeledDataset> client_data,
                                    std::size_t rounds, std::size_t local_epochs, double learning_rate,
                                    std::uint64_t seed) {
  if (client_data.empty()) throw ConfigError("proposition check needs at least one client");
  if (rounds < 1 || local_epochs < 1) throw ConfigError("proposition check needs rounds >= 1 and local_epochs >= 1");

  LabeledDataset pooled(arch.num_classes, arch.input_dim);
  for (const auto& d : client_data) {
    if (d.empty()) throw ConfigError("proposition check client holds no data");
    pooled.append(d);
  }
  const OptimizerConfig gd{OptimizerKind::sgd, learning_rate};
  gd.validate();

  ParameterVector fed = ParameterVector::random_uniform(arch, seed);
  ParameterVector central = fed;
  PropositionResult out;
  for (std::size_t r = 1; r <= rounds; ++r) {
    std::vector<std::pair<std::size_t, ParameterVector>> locals;
    for (std::size_t k = 0; k < client_data.size(); ++k) {
      const LocalTraining full_batch{local_epochs, client_data[k].size(), gd};
      locals.emplace_back(client_data[k].size(), client_update(fed, client_data[k], full_batch, client_train_seed(seed, r, k, 0)));
    }
    fed = fedavg_aggregate(fed, locals);

    OptimizerState state(gd);
    for (std::size_t e = 0; e < local_epochs; ++e) {
      auto lg = loss_and_grad(central, pooled.feature_matrix(), pooled.labels());
      auto [next, next_state] = optimizer_step(central, lg.grad, std::move(state));
      central = std::move(next);
      state = std::move(next_state);
    }
    out.per_round.push_back(max_abs_diff(fed, central));
    out.max_divergence = std::max(out.max_divergence, out.per_round.back());
  }
  return out;
}

PropositionResult proposition_check(const ModelArch& arch, const LabeledDataset& dataset, std::size_t rounds,
                                    std::size_t num_clients, double learning_rate, std::uint64_t seed) {
  if (num_clients < 1) throw ConfigError("proposition check needs at least one client");
  std::vector<LabeledDataset> copies(num_clients, dataset);
  return proposition_check(arch, copies, rounds, 1, learning_rate, seed);
}

std::filesystem::path save_checkpoint(const std::filesystem::path& dir, std::size_t round, const ParameterVector& w) {
  static_assert(std::endian::native == std::endian::little, "checkpoint writer assumes a little-endian host");
  std::filesystem::create_directories(dir);
  const std::string stem = fmt::format("checkpoint_{:06}", round);
  const auto bin = dir / (stem + ".bin");
  {
    std::ofstream out(bin, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + bin.string());
    out.write(reinterpret_cast<const char*>(w.values().data()), static_cast<std::streamsize>(w.size() * sizeof(double)));
  }
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const auto* bytes = reinterpret_cast<const unsigned char*>(w.values().data());
  for (std::size_t i = 0; i < w.size() * sizeof(double); ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
  const nlohmann::json manifest{{"round", round},
                                {"arch", w.arch().to_json()},
                                {"num_params", w.size()},
                                {"format", "float64-le"},
                                {"fnv1a64", fmt::format("{:016x}", h)},
                                {"weights", bin.filename().string()}};
  const auto json_path = dir / (stem + ".json");
  std::ofstream(json_path) << manifest.dump(2) << '\n';
  return json_path;
}

std::pair<std::size_t, ParameterVector> load_checkpoint(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw ConfigError("cannot open " + manifest_path.string());
  const auto manifest = nlohmann::json::parse(in);
  const ModelArch arch = ModelArch::from_json(manifest.at("arch"));
  const auto bin = manifest_path.parent_path() / manifest.at("weights").get<std::string>();
  std::ifstream wb(bin, std::ios::binary);
  std::vector<double> values(arch.num_params());
  wb.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
  if (wb.gcount() != static_cast<std::streamsize>(values.size() * sizeof(double))) {
    throw FormatError("checkpoint " + bin.filename().string() + " is truncated", static_cast<std::size_t>(wb.gcount()));
  }
  return {manifest.at("round").get<std::size_t>(), ParameterVector(arch, std::move(values))};
}

}  // namespace astraea
