#include "astraea/metrics.hpp"

#include <cmath>
#include <limits>
#include <ostream>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "astraea/error.hpp"

namespace astraea {

std::uint64_t traffic_fedavg_round(std::size_t c, std::size_t num_params, std::size_t wire_bytes_per_param) {
  if (c == 0 || num_params == 0) throw ConfigError("traffic needs c >= 1 and num_params >= 1");
  return 2ULL * c * num_params * wire_bytes_per_param;
}

std::uint64_t traffic_astraea_round(std::size_t c, std::size_t gamma, std::size_t num_params,
                                    std::size_t wire_bytes_per_param) {
  if (c == 0 || gamma == 0 || num_params == 0) throw ConfigError("traffic needs c, gamma, num_params >= 1");
  const std::uint64_t mediators = (c + gamma - 1) / gamma;
  return 2ULL * (mediators + c) * num_params * wire_bytes_per_param;
}

TrafficLedger::TrafficLedger(std::size_t wire_bytes_per_param) : wire_bytes_(wire_bytes_per_param) {
  if (wire_bytes_per_param == 0) throw ConfigError("wire_bytes_per_param must be >= 1");
}

void TrafficLedger::model_down(std::size_t num_params) { pending_down_ += std::uint64_t{num_params} * wire_bytes_; }
void TrafficLedger::model_up(std::size_t num_params) { pending_up_ += std::uint64_t{num_params} * wire_bytes_; }
void TrafficLedger::raw_up(std::uint64_t bytes) { pending_up_ += bytes; }

const TrafficEntry& TrafficLedger::close_round(std::size_t round) {
  TrafficEntry e;
  e.round = round;
  e.down_bytes = pending_down_;
  e.up_bytes = pending_up_;
  e.cumulative_bytes = cumulative_bytes() + e.bytes();
  pending_down_ = pending_up_ = 0;
  entries_.push_back(e);
  return entries_.back();
}

std::optional<std::uint64_t> cost_to_target(const std::vector<RoundReport>& reports, double target_accuracy) {
  for (const auto& r : reports) {
    if (r.accuracy >= target_accuracy) return r.cumulative_bytes;
  }
  return std::nullopt;
}

ConfusionMatrix::ConfusionMatrix(std::size_t num_classes) : n_(num_classes), counts_(num_classes * num_classes, 0) {}

std::int64_t ConfusionMatrix::total() const {
  std::int64_t t = 0;
  for (auto c : counts_) t += c;
  return t;
}

std::int64_t ConfusionMatrix::trace() const {
  std::int64_t t = 0;
  for (std::size_t i = 0; i < n_; ++i) t += at(i, i);
  return t;
}

std::int64_t ConfusionMatrix::row_sum(std::size_t truth) const {
  std::int64_t t = 0;
  for (std::size_t j = 0; j < n_; ++j) t += at(truth, j);
  return t;
}

double ConfusionMatrix::accuracy() const {
  const auto t = total();
  return t == 0 ? 0.0 : static_cast<double>(trace()) / static_cast<double>(t);
}

std::vector<double> ConfusionMatrix::per_class_recall() const {
  std::vector<double> r(n_);
  for (std::size_t i = 0; i < n_; ++i) {
    const auto s = row_sum(i);
    r[i] = s == 0 ? std::numeric_limits<double>::quiet_NaN() : static_cast<double>(at(i, i)) / static_cast<double>(s);
  }
  return r;
}

ConfusionMatrix confusion(const ParameterVector& params, const LabeledDataset& test_set) {
  if (test_set.empty()) throw ConfigError("confusion matrix needs a nonempty test set");
  ConfusionMatrix m(params.arch().num_classes);
  const auto pred = predict(params, test_set.feature_matrix());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    ++m.at(static_cast<std::size_t>(test_set.label(i)), static_cast<std::size_t>(pred[i]));
  }
  return m;
}

void write_rounds_csv(std::ostream& out, const std::vector<RoundReport>& reports) {
  out << "round,accuracy,loss,bytes_cum\n";
  for (const auto& r : reports) fmt::print(out, "{},{:.10g},{:.10g},{}\n", r.round, r.accuracy, r.train_loss, r.cumulative_bytes);
}

void write_kld_csv(std::ostream& out, const std::vector<MediatorKldRecord>& records) {
  out << "round,mediator_id,kld\n";
  for (const auto& r : records) fmt::print(out, "{},{},{:.10g}\n", r.round, r.mediator_id, r.kld);
}

void write_confusion_csv(std::ostream& out, const ConfusionMatrix& matrix) {
  out << "true,pred,count\n";
  for (std::size_t t = 0; t < matrix.num_classes(); ++t) {
    for (std::size_t p = 0; p < matrix.num_classes(); ++p) fmt::print(out, "{},{},{}\n", t, p, matrix.at(t, p));
  }
}

void write_traffic_csv(std::ostream& out, const TrafficLedger& ledger) {
  out << "round,down_bytes,up_bytes,bytes,bytes_cum\n";
  for (const auto& e : ledger.entries()) {
    fmt::print(out, "{},{},{},{},{}\n", e.round, e.down_bytes, e.up_bytes, e.bytes(), e.cumulative_bytes);
  }
}

void write_timing_csv(std::ostream& out, const std::vector<RoundReport>& reports, std::size_t local_epochs,
                      std::size_t mediator_epochs, std::size_t gamma, bool mediated) {
  out << "round,wall_seconds,epoch_seconds,modeled_round_seconds\n";
  const double factor = mediated ? static_cast<double>(mediator_epochs * gamma * local_epochs)
                                 : static_cast<double>(local_epochs);
  for (const auto& r : reports) {
    fmt::print(out, "{},{:.6f},{:.6g},{:.6g}\n", r.round, r.wall_seconds, r.mean_epoch_seconds,
               factor * r.mean_epoch_seconds);
  }
}

}  // namespace astraea
