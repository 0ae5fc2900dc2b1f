#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "astraea/dataset.hpp"
#include "astraea/model.hpp"
#include "astraea/rescheduler.hpp"

namespace astraea {

// ---------------------------------------------------------------------------
// Communication accounting

/// Bytes per plain FedAvg communication round: every online client downloads
/// and uploads the model once, 2 * c * |w| * width.
std::uint64_t traffic_fedavg_round(std::size_t c, std::size_t num_params, std::size_t wire_bytes_per_param = 4);

/// Bytes per mediator synchronization round: 2 * (ceil(c / gamma) + c) * |w| * width.
std::uint64_t traffic_astraea_round(std::size_t c, std::size_t gamma, std::size_t num_params,
                                    std::size_t wire_bytes_per_param = 4);

struct TrafficEntry {
  std::size_t round = 0;  // 0 = setup traffic before the first round
  std::uint64_t down_bytes = 0;
  std::uint64_t up_bytes = 0;
  std::uint64_t cumulative_bytes = 0;

  std::uint64_t bytes() const { return down_bytes + up_bytes; }
};

/// Event-driven byte counter. Transfers are recorded as they happen and folded
/// into one entry per round at the round barrier. Single writer.
class TrafficLedger {
 public:
  explicit TrafficLedger(std::size_t wire_bytes_per_param = 4);

  std::size_t wire_bytes_per_param() const noexcept { return wire_bytes_; }

  void model_down(std::size_t num_params);
  void model_up(std::size_t num_params);
  void raw_up(std::uint64_t bytes);

  /// Appends the pending transfers as the entry for `round`.
  const TrafficEntry& close_round(std::size_t round);

  const std::vector<TrafficEntry>& entries() const noexcept { return entries_; }
  std::uint64_t cumulative_bytes() const noexcept { return entries_.empty() ? 0 : entries_.back().cumulative_bytes; }

 private:
  std::size_t wire_bytes_;
  std::uint64_t pending_down_ = 0;
  std::uint64_t pending_up_ = 0;
  std::vector<TrafficEntry> entries_;
};

// ---------------------------------------------------------------------------
// Per-round reporting

struct RoundReport {
  std::size_t round = 0;  // 1-based
  double accuracy = 0.0;
  double train_loss = 0.0;
  std::size_t num_mediators = 0;  // 0 for plain FedAvg
  KldStats mediator_kld;
  KldStats client_kld;
  std::uint64_t down_bytes = 0;
  std::uint64_t up_bytes = 0;
  std::uint64_t bytes = 0;
  std::uint64_t cumulative_bytes = 0;
  double wall_seconds = 0.0;
  double mean_epoch_seconds = 0.0;  // measured time of one local epoch (T)
};

/// Cumulative bytes at the first round reaching `target_accuracy`, or nullopt.
std::optional<std::uint64_t> cost_to_target(const std::vector<RoundReport>& reports, double target_accuracy);

// ---------------------------------------------------------------------------
// Confusion matrix

class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes = 0);

  std::size_t num_classes() const noexcept { return n_; }
  std::int64_t& at(std::size_t truth, std::size_t predicted) { return counts_[truth * n_ + predicted]; }
  std::int64_t at(std::size_t truth, std::size_t predicted) const { return counts_[truth * n_ + predicted]; }
  std::int64_t total() const;
  std::int64_t trace() const;
  std::int64_t row_sum(std::size_t truth) const;
  double accuracy() const;
  /// Diagonal over row sum; NaN for classes absent from the test set.
  std::vector<double> per_class_recall() const;

 private:
  std::size_t n_;
  std::vector<std::int64_t> counts_;
};

ConfusionMatrix confusion(const ParameterVector& params, const LabeledDataset& test_set);

// ---------------------------------------------------------------------------
// CSV export

struct MediatorKldRecord {
  std::size_t round = 0;
  std::size_t mediator_id = 0;
  std::size_t size = 0;
  double kld = 0.0;
};

/// round,accuracy,loss,bytes_cum
void write_rounds_csv(std::ostream& out, const std::vector<RoundReport>& reports);
/// round,mediator_id,kld (group sizes go to the manifest schedules)
void write_kld_csv(std::ostream& out, const std::vector<MediatorKldRecord>& records);
/// true,pred,count (every cell, row-major)
void write_confusion_csv(std::ostream& out, const ConfusionMatrix& matrix);
/// round,down_bytes,up_bytes,bytes,bytes_cum
void write_traffic_csv(std::ostream& out, const TrafficLedger& ledger);
/// round,wall_seconds,epoch_seconds,modeled_round_seconds
/// modeled_round_seconds = E_m * gamma * E * T for mediator runs, E * T otherwise.
void write_timing_csv(std::ostream& out, const std::vector<RoundReport>& reports, std::size_t local_epochs,
                      std::size_t mediator_epochs, std::size_t gamma, bool mediated);

}  // namespace astraea
