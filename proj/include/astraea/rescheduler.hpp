#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <vector>

#include <json.hpp>

#include "astraea/dataset.hpp"

namespace astraea {

using ClientId = std::size_t;

/// sum_i P_i ln(P_i / Q_i) in nats, with 0 ln 0 = 0. Throws DivergenceError when
/// P_i > 0 and Q_i = 0, ConfigError if either input is not a distribution.
double kld(std::span<const double> p, std::span<const double> q);

/// KL divergence of the normalized counts from the uniform distribution.
double kld_to_uniform(const ClassDistribution& counts);

struct Mediator {
  std::vector<ClientId> clients;  // in pick order
  ClassDistribution combined;
};

struct MediatorAssignment {
  std::vector<Mediator> mediators;  // in creation order
  std::size_t gamma = 1;

  std::size_t num_clients() const;
  nlohmann::json to_json() const;
};

/// One greedy decision, recorded for auditing.
struct GreedyPick {
  std::size_t mediator = 0;
  ClientId client = 0;
  double kld = 0.0;
};

/// Greedy mediator construction: each new mediator repeatedly absorbs the
/// unassigned client whose counts, added to the mediator's, give the smallest
/// KL divergence from uniform, until it holds `gamma` clients or none remain.
/// Equal objectives go to the lowest client id. `trace`, if given, receives
/// every pick in order.
MediatorAssignment reschedule(const std::map<ClientId, ClassDistribution>& client_dists, std::size_t gamma,
                              std::vector<GreedyPick>* trace = nullptr);

struct KldStats {
  std::size_t count = 0;
  double mean = 0.0;
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double iqr() const { return q3 - q1; }
  nlohmann::json to_json() const;
};

/// Mean, median and quartiles (linear interpolation between order statistics).
KldStats summarize(std::vector<double> values);

struct KldReport {
  std::vector<double> mediator_kld;  // per mediator, creation order
  std::vector<double> client_kld;    // per scheduled client, ascending id
  KldStats mediators;
  KldStats clients;
};

KldReport kld_report(const MediatorAssignment& assignment, const std::map<ClientId, ClassDistribution>& client_dists);

}  // namespace astraea
