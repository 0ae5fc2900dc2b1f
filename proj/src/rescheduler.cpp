#include "astraea/rescheduler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "astraea/error.hpp"

namespace astraea {

namespace {

void check_distribution(std::span<const double> p, const char* name) {
  double s = 0.0;
  for (double x : p) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw ConfigError(std::string(name) + " has a negative or non-finite entry");
    s += x;
  }
  if (std::abs(s - 1.0) > 1e-9) throw ConfigError(std::string(name) + " does not sum to 1");
}

double kld_counts_to_uniform(std::span<const std::int64_t> counts) {
  std::int64_t total = 0;
  for (auto c : counts) total += c;
  if (total <= 0) throw ConfigError("KL divergence of an empty distribution");
  const auto n = static_cast<double>(counts.size());
  const auto t = static_cast<double>(total);
  double d = 0.0;
  for (auto c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / t;
    d += p * std::log(p * n);
  }
  return std::max(d, 0.0);
}

}  // namespace

double kld(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ConfigError("KL divergence inputs differ in length");
  check_distribution(p, "P");
  check_distribution(q, "Q");
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] == 0.0) throw DivergenceError("KL divergence undefined: P_" + std::to_string(i) + " > 0 but Q_" + std::to_string(i) + " = 0");
    d += p[i] * std::log(p[i] / q[i]);
  }
  return std::max(d, 0.0);
}

double kld_to_uniform(const ClassDistribution& counts) { return kld_counts_to_uniform(counts.counts); }

std::size_t MediatorAssignment::num_clients() const {
  std::size_t n = 0;
  for (const auto& m : mediators) n += m.clients.size();
  return n;
}

nlohmann::json MediatorAssignment::to_json() const {
  nlohmann::json meds = nlohmann::json::array();
  for (std::size_t i = 0; i < mediators.size(); ++i) {
    meds.push_back({{"mediator_id", i},
                    {"clients", mediators[i].clients},
                    {"combined", mediators[i].combined.counts},
                    {"kld", kld_to_uniform(mediators[i].combined)}});
  }
  return {{"gamma", gamma}, {"mediators", meds}};
}

MediatorAssignment reschedule(const std::map<ClientId, ClassDistribution>& client_dists, std::size_t gamma,
                              std::vector<GreedyPick>* trace) {
  if (gamma == 0) throw ConfigError("gamma must be >= 1");
  std::size_t num_classes = 0;
  for (const auto& [id, dist] : client_dists) {
    if (num_classes == 0) num_classes = dist.num_classes();
    if (dist.num_classes() != num_classes) throw ConfigError("client " + std::to_string(id) + " has a different class count");
    if (dist.total() <= 0) throw ConfigError("client " + std::to_string(id) + " has no samples");
  }

  MediatorAssignment out;
  out.gamma = gamma;
  // Ascending ids: the strict '<' below keeps the lowest id on ties.
  std::vector<ClientId> unassigned;
  for (const auto& [id, _] : client_dists) unassigned.push_back(id);

  std::vector<std::int64_t> trial(num_classes);
  while (!unassigned.empty()) {
    Mediator m;
    m.combined = ClassDistribution(num_classes);
    while (!unassigned.empty() && m.clients.size() < gamma) {
      std::size_t best_pos = 0;
      double best = 0.0;
      for (std::size_t pos = 0; pos < unassigned.size(); ++pos) {
        const auto& counts = client_dists.at(unassigned[pos]).counts;
        for (std::size_t c = 0; c < num_classes; ++c) trial[c] = m.combined.counts[c] + counts[c];
        const double d = kld_counts_to_uniform(trial);
        if (pos == 0 || d < best) {
          best = d;
          best_pos = pos;
        }
      }
      const ClientId pick = unassigned[best_pos];
      m.combined += client_dists.at(pick);
      m.clients.push_back(pick);
      unassigned.erase(unassigned.begin() + static_cast<std::ptrdiff_t>(best_pos));
      if (trace) trace->push_back({out.mediators.size(), pick, best});
    }
    out.mediators.push_back(std::move(m));
  }
  return out;
}

nlohmann::json KldStats::to_json() const {
  return {{"count", count}, {"mean", mean}, {"median", median}, {"q1", q1}, {"q3", q3}, {"iqr", iqr()}};
}

KldStats summarize(std::vector<double> values) {
  KldStats s;
  s.count = values.size();
  if (values.empty()) return s;
  std::sort(values.begin(), values.end());
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  const auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
  };
  s.q1 = quantile(0.25);
  s.median = quantile(0.5);
  s.q3 = quantile(0.75);
  return s;
}

KldReport kld_report(const MediatorAssignment& assignment, const std::map<ClientId, ClassDistribution>& client_dists) {
  if (assignment.mediators.empty()) throw ConfigError("KLD report needs a nonempty assignment");
  KldReport r;
  for (const auto& m : assignment.mediators) r.mediator_kld.push_back(kld_to_uniform(m.combined));
  std::vector<ClientId> ids;
  for (const auto& m : assignment.mediators) ids.insert(ids.end(), m.clients.begin(), m.clients.end());
  std::sort(ids.begin(), ids.end());
  for (ClientId id : ids) r.client_kld.push_back(kld_to_uniform(client_dists.at(id)));
  r.mediators = summarize(r.mediator_kld);
  r.clients = summarize(r.client_kld);
  return r;
}

}  // namespace astraea
