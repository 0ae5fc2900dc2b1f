#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <json.hpp>

#include "astraea/augmentation.hpp"
#include "astraea/dataset.hpp"
#include "astraea/metrics.hpp"
#include "astraea/model.hpp"
#include "astraea/rescheduler.hpp"

namespace astraea {

enum class Mode { astraea, fedavg };

std::string to_string(Mode mode);

struct TrainingConfig {
  Mode mode = Mode::astraea;
  std::size_t num_clients = 100;        // K
  std::size_t batch_size = 20;          // B
  std::size_t clients_per_round = 50;   // c
  double alpha = 0.67;
  std::size_t gamma = 10;
  std::size_t local_epochs = 1;         // E
  std::size_t mediator_epochs = 2;      // E_m
  std::size_t rounds = 20;              // R
  OptimizerConfig optimizer{OptimizerKind::adam, 0.001};
  std::uint64_t seed = 1;
  bool static_schedule = false;
  std::size_t threads = 1;              // > 1 runs mediators concurrently
  std::size_t wire_bytes_per_param = 4;
  TransformConfig transform;
  std::size_t checkpoint_interval = 0;  // 0 disables checkpoints
  std::filesystem::path checkpoint_dir;
  bool stop_at_best_validation = false;
  bool record_trajectory = false;

  /// Throws ConfigError naming the offending field.
  void validate() const;
  nlohmann::json to_json() const;
};

struct LocalTraining {
  std::size_t local_epochs = 1;
  std::size_t batch_size = 20;
  OptimizerConfig optimizer;
};

/// Seed of one client update inside a run.
std::uint64_t client_train_seed(std::uint64_t run_seed, std::size_t round, ClientId client, std::size_t pass);

/// E passes of mini-batch training over `data`. Each epoch visits samples in a
/// seeded permutation of their id order, so storage order never matters. The
/// optimizer state starts fresh. `epoch_seconds`, if given, receives the mean
/// measured duration of one epoch.
ParameterVector client_update(const ParameterVector& w, const LabeledDataset& data, const LocalTraining& training,
                              std::uint64_t seed, double* epoch_seconds = nullptr);

struct MediatorMember {
  ClientId id = 0;
  const LabeledDataset* data = nullptr;
};

/// Runs `mediator_epochs` sequential passes over the members (in the given
/// order), handing the weights from one client to the next, and returns
/// w_final - w.
ParameterVector mediator_update(std::span<const MediatorMember> members, const ParameterVector& w,
                                std::size_t mediator_epochs, const LocalTraining& training, std::uint64_t run_seed,
                                std::size_t round, double* epoch_seconds = nullptr);

struct Contribution {
  std::size_t samples = 0;  // n_m or n_k
  std::size_t order_key = 0;
  ParameterVector delta;
};

/// w + sum_m (n_m / n) * delta_m with n = sum_m n_m, summed in ascending
/// order_key so the result does not depend on the order updates arrived in.
ParameterVector aggregate_deltas(const ParameterVector& w, std::vector<Contribution> contributions);

/// sum_k (n_k / n) * w_k, evaluated as w + sum_k (n_k / n) * (w_k - w).
ParameterVector fedavg_aggregate(const ParameterVector& w, std::span<const std::pair<std::size_t, ParameterVector>> client_weights);

/// c distinct ids from [0, K), ascending.
std::vector<ClientId> sample_clients(std::size_t num_clients, std::size_t count, std::uint64_t run_seed, std::size_t round);

struct ScheduleRecord {
  std::size_t round = 0;
  MediatorAssignment assignment;
};

struct RunResult {
  std::vector<RoundReport> reports;
  ParameterVector initial_weights;
  ParameterVector final_weights;
  std::vector<ParameterVector> trajectory;  // weights after each round, if recorded
  TrafficLedger ledger;
  std::optional<AugmentationPlan> plan;
  std::vector<MediatorKldRecord> kld_records;
  std::vector<ScheduleRecord> schedules;
  std::size_t best_round = 0;
  std::uint64_t augmented_fingerprint = 0;
};

RunResult run_astraea(const TrainingConfig& config, const ModelArch& arch, const ClientPartition& partition,
                      const LabeledDataset& test_set);

RunResult run_fedavg_baseline(const TrainingConfig& config, const ModelArch& arch, const ClientPartition& partition,
                              const LabeledDataset& test_set);

struct PropositionResult {
  double max_divergence = 0.0;
  std::vector<double> per_round;  // max-norm gap after each round
};

/// Plain FedAvg with full-batch gradient descent on every client versus
/// centralized full-batch gradient descent on the pooled data, from the same
/// initial weights, `local_epochs` steps per round on both sides.
PropositionResult proposition_check(const ModelArch& arch, std::span<const LabeledDataset> client_data, std::size_t rounds,
                                    std::size_t local_epochs, double learning_rate, std::uint64_t seed);

/// Every one of `num_clients` clients holds an identical copy of `dataset`.
PropositionResult proposition_check(const ModelArch& arch, const LabeledDataset& dataset, std::size_t rounds,
                                    std::size_t num_clients = 4, double learning_rate = 0.5, std::uint64_t seed = 1);

/// Writes checkpoint_<round>.bin (little-endian float64) and a matching .json
/// manifest; returns the manifest path.
std::filesystem::path save_checkpoint(const std::filesystem::path& dir, std::size_t round, const ParameterVector& w);
std::pair<std::size_t, ParameterVector> load_checkpoint(const std::filesystem::path& manifest);

}  // namespace astraea
