// Acceptance checks, one line per criterion. Exit status is the number of failures.

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "astraea/apportion.hpp"
#include "astraea/augmentation.hpp"
#include "astraea/config.hpp"
#include "astraea/engine.hpp"
#include "astraea/error.hpp"
#include "astraea/rescheduler.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace astraea;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(int id, double time_limit_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool in_time = secs < time_limit_s;
  const bool pass = o.pass && in_time;
  if (!pass) ++failures;
  std::cout << fmt::format("criterion {}: {} {} [{:.2f}s, limit {:.0f}s]{}", id, pass ? "PASS" : "FAIL", o.detail, secs,
                           time_limit_s, in_time ? "" : " (too slow)")
            << std::endl;
}

json read_json(const std::filesystem::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

// rounds.csv -> (accuracy, bytes_cum) per round
std::vector<std::pair<double, std::uint64_t>> read_rounds(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  std::vector<std::pair<double, std::uint64_t>> out;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string round, acc, loss, bytes;
    std::getline(ss, round, ',');
    std::getline(ss, acc, ',');
    std::getline(ss, loss, ',');
    std::getline(ss, bytes, ',');
    out.emplace_back(std::stod(acc), std::stoull(bytes));
  }
  return out;
}

std::optional<std::uint64_t> cost(const std::vector<std::pair<double, std::uint64_t>>& rounds, double target) {
  for (const auto& [acc, bytes] : rounds) {
    if (acc >= target) return bytes;
  }
  return std::nullopt;
}

// 1 ----------------------------------------------------------------------
Outcome proposition() {
  const std::vector<std::int64_t> counts(10, 100);
  const auto data = make_synthetic(10, counts, 20, 3.0, 1);
  const auto arch = ModelArch::softmax(20, 10);
  const auto r = proposition_check(arch, data, 10, 4, 0.5, 1);
  const double one = r.per_round.front(), ten = r.per_round.back();
  return {one <= 1e-9 && ten <= 1e-7, fmt::format("divergence after 1 round {:.3e} (<= 1e-9), after 10 {:.3e} (<= 1e-7)", one, ten)};
}

// 2 ----------------------------------------------------------------------
Outcome greedy_oracle() {
  std::mt19937_64 rng(2);
  int bad = 0;
  std::string first;
  for (int t = 0; t < 200; ++t) {
    const std::size_t clients = 1 + rng() % 8, classes = 2 + rng() % 4, gamma = 1 + rng() % 4;
    std::map<ClientId, ClassDistribution> d;
    std::set<ClientId> ids;
    while (ids.size() < clients) ids.insert(rng() % 40);
    for (ClientId id : ids) {
      std::vector<std::int64_t> c(classes);
      // Small counts make exact ties common, so the tie-break gets exercised.
      for (auto& v : c) v = static_cast<std::int64_t>(rng() % 6);
      c[rng() % classes] += 1;
      d.emplace(id, ClassDistribution(c));
    }
    std::vector<GreedyPick> trace;
    const auto a = reschedule(d, gamma, &trace);
    const auto err = testing::check_greedy_trace(d, gamma, a, trace);
    if (!err.empty()) {
      if (bad++ == 0) first = fmt::format("instance {}: {}", t, err);
    }
  }
  return {bad == 0, bad == 0 ? "200/200 instances: every pick is the per-step minimum, ties to lowest id"
                             : fmt::format("{} bad instances, first {}", bad, first)};
}

// 3 ----------------------------------------------------------------------
Outcome kld_rebalancing() {
  double med = 0, cli = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    testing::TempDir dir("c3");
    const json doc = {{"mode", "schedule-only"},
                      {"k", 100},
                      {"c", 50},
                      {"gamma", 10},
                      {"alpha", 0.83},
                      {"rounds", 20},
                      {"seed", seed},
                      {"out_dir", dir.path().string()},
                      {"synthetic", {{"num_classes", 26}, {"train_per_class", 1800}}},
                      {"partition", {{"global", "letters"}}}};
    std::ostringstream log;
    if (run(parse_config_json(doc), log) != 0) return {false, log.str()};
    const auto m = read_json(dir / "manifest.json").at("results");
    med += m.at("mediator_kld").at("mean").get<double>() / 5.0;
    cli += m.at("client_kld").at("mean").get<double>() / 5.0;
  }
  return {med <= 0.5 * cli && med <= 0.2,
          fmt::format("mean mediator KLD {:.4f} vs client {:.4f} (ratio {:.3f} <= 0.5, abs <= 0.2)", med, cli, med / cli)};
}

// 4 ----------------------------------------------------------------------
Outcome augmentation_conservation() {
  std::mt19937_64 rng(4);
  int checked = 0;
  for (int t = 0; t < 40; ++t) {
    const std::size_t n = 2 + rng() % 9;
    std::vector<std::int64_t> counts(n);
    for (auto& c : counts) c = static_cast<std::int64_t>(rng() % 300);
    counts[rng() % n] += 1 + static_cast<std::int64_t>(rng() % 400);
    const auto data = testing::counts_dataset(counts, 3);
    PartitionProfile p;
    p.size = SizeProfile::power_law;
    const std::size_t k = 1 + rng() % std::min<std::size_t>(8, data.size());
    ClientPartition part;
    try {
      part = partition_clients(data, k, p, rng());
    } catch (const ConfigError&) {
      continue;  // a power-law draw left some client empty
    }
    double mean = 0;
    for (auto c : counts) mean += static_cast<double>(c) / static_cast<double>(n);

    for (double alpha : {0.0, 0.5, 0.67, 0.83, 1.0}) {
      const auto plan = compute_plan(part.global_histogram(), alpha);
      const auto out = apply_plan(part, plan, TransformConfig{}, rng());
      const auto got = out.global_histogram().counts;
      for (std::size_t c = 0; c < n; ++c) {
        const double cy = static_cast<double>(counts[c]);
        const std::int64_t want =
            (counts[c] > 0 && cy < mean) ? static_cast<std::int64_t>(std::round(cy * std::pow(mean / cy, alpha))) : counts[c];
        if (got[c] != want) {
          return {false, fmt::format("trial {} alpha {} class {}: got {} want {}", t, alpha, c, got[c], want)};
        }
      }
      if (alpha == 0.0) {
        for (std::size_t j = 0; j < part.size(); ++j) {
          auto a = part.clients[j].ids(), b = out.clients[j].ids();
          std::sort(a.begin(), a.end());
          std::sort(b.begin(), b.end());
          if (a != b) return {false, fmt::format("trial {}: alpha 0 changed client {}", t, j)};
        }
      }
      ++checked;
    }
  }
  return {checked >= 150, fmt::format("{} histogram/alpha pairs: minority totals exact, majority unchanged, alpha 0 a no-op", checked)};
}

// 5 and 6 share the A/B runs.
struct AbRun {
  double astraea = 0, fedavg = 0;
  std::vector<double> cost_ratio;
  std::string error;
};

AbRun ab_runs() {
  AbRun out;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    testing::TempDir a("c5a"), f("c5f");
    auto doc = [&](const char* mode, const testing::TempDir& dir) {
      return json{{"mode", mode},
                  {"k", 50},
                  {"c", 20},
                  {"gamma", 5},
                  {"alpha", 0.67},
                  {"local_epochs", 1},
                  {"mediator_epochs", 2},
                  {"rounds", 50},
                  {"seed", seed},
                  {"out_dir", dir.path().string()},
                  {"model", {{"kind", "softmax"}}},
                  {"synthetic", {{"num_classes", 10}}},
                  {"partition", {{"global", "zipf"}, {"zipf_exponent", 1.0}}}};
    };
    std::ostringstream log;
    if (run(parse_config_json(doc("astraea", a)), log) != 0 || run(parse_config_json(doc("fedavg", f)), log) != 0) {
      out.error = log.str();
      return out;
    }
    const auto ra = read_rounds(a / "rounds.csv"), rf = read_rounds(f / "rounds.csv");
    out.astraea += ra.back().first / 3.0;
    out.fedavg += rf.back().first / 3.0;
    // Traffic each side needs to reach the accuracy plain FedAvg ends at.
    const double target = rf.back().first;
    const auto ca = cost(ra, target), cf = cost(rf, target);
    out.cost_ratio.push_back(ca && cf ? static_cast<double>(*ca) / static_cast<double>(*cf) : INFINITY);
  }
  return out;
}

Outcome traffic_conformance(const AbRun& ab) {
  const std::vector<std::int64_t> counts(4, 100);
  const auto data = make_synthetic(4, counts, 5, 3.0, 6);
  PartitionProfile p;
  const auto part = partition_clients(data, 25, p, 7);
  const auto test = make_synthetic(4, std::vector<std::int64_t>(4, 10), 5, 3.0, 8, 1u << 20);
  const auto arch = ModelArch::softmax(5, 4);
  int grids = 0;
  for (std::size_t c : {1, 3, 8, 20, 25}) {
    for (std::size_t gamma : {1, 2, 3, 5, 8, 30}) {
      for (std::size_t width : {4, 8}) {
        TrainingConfig t;
        t.num_clients = 25;
        t.clients_per_round = c;
        t.gamma = gamma;
        t.rounds = 2;
        t.wire_bytes_per_param = width;
        t.mode = Mode::astraea;
        const auto ra = run_astraea(t, arch, part, test);
        t.mode = Mode::fedavg;
        const auto rf = run_fedavg_baseline(t, arch, part, test);
        for (std::size_t r = 1; r <= 2; ++r) {
          if (ra.ledger.entries()[r].bytes() != traffic_astraea_round(c, gamma, arch.num_params(), width) ||
              rf.ledger.entries()[r].bytes() != traffic_fedavg_round(c, arch.num_params(), width)) {
            return {false, fmt::format("ledger mismatch at c={} gamma={} width={}", c, gamma, width)};
          }
        }
        ++grids;
      }
    }
  }
  if (!ab.error.empty()) return {false, ab.error};
  bool below = true;
  double mean = 0;
  for (double r : ab.cost_ratio) {
    below = below && r < 1.0;
    mean += r / static_cast<double>(ab.cost_ratio.size());
  }
  return {below, fmt::format("ledger exact on {} (c, gamma, width) grids; cost-to-target ratio per seed {:.3f} {:.3f} {:.3f} "
                             "(mean {:.3f} < 1)",
                             grids, ab.cost_ratio[0], ab.cost_ratio[1], ab.cost_ratio[2], mean)};
}

// 7 ----------------------------------------------------------------------
Outcome gradient_check() {
  std::mt19937_64 rng(7);
  double worst = 0;
  for (int t = 0; t < 50; ++t) {
    const std::size_t d = 1 + rng() % 6, n = 2 + rng() % 4;
    const ModelArch arch = t % 2 ? ModelArch::softmax(d, n) : ModelArch::mlp(d, 1 + rng() % 6, n);
    const auto p = testing::random_params(arch, rng(), 1.0);
    const std::size_t rows = 1 + rng() % 10;
    const auto x = testing::random_features(rows, d, rng());
    const auto y = testing::random_labels(rows, n, rng());
    const auto g = loss_and_grad(p, x, y).grad;
    for (std::size_t i = 0; i < p.size(); ++i) {
      ParameterVector plus = p, minus = p;
      plus[i] += 1e-5;
      minus[i] -= 1e-5;
      const double num = (mean_loss(plus, x, y) - mean_loss(minus, x, y)) / 2e-5;
      const double denom = std::max({std::abs(num), std::abs(g[i]), 1e-6});
      worst = std::max(worst, std::abs(num - g[i]) / denom);
    }
  }
  return {worst <= 1e-5, fmt::format("50 instances, worst relative error {:.3e} (<= 1e-5)", worst)};
}

// 8 ----------------------------------------------------------------------
Outcome determinism() {
  for (const char* mode : {"astraea", "fedavg"}) {
    testing::TempDir a("c8a"), b("c8b");
    auto doc = [&](const testing::TempDir& dir) {
      return json{{"mode", mode}, {"k", 30}, {"c", 10}, {"gamma", 3}, {"rounds", 8}, {"seed", 9},
                  {"out_dir", dir.path().string()}};
    };
    std::ostringstream log;
    if (run(parse_config_json(doc(a)), log) != 0 || run(parse_config_json(doc(b)), log) != 0) return {false, log.str()};
    for (const char* f : {"rounds.csv", "kld.csv", "confusion.csv", "traffic.csv"}) {
      if (testing::slurp(a / f) != testing::slurp(b / f)) return {false, fmt::format("{} {} differs between runs", mode, f)};
    }
  }

  const auto freq = zipf_frequency(10, 1.0);
  const auto counts = apportion(std::span<const double>(freq), 4000);
  const auto data = make_synthetic(10, counts, 12, 3.0, 3);
  PartitionProfile p;
  p.size = SizeProfile::power_law;
  const auto part = partition_clients(data, 40, p, 4);
  const auto test = make_synthetic(10, std::vector<std::int64_t>(10, 30), 12, 3.0, 5, 1u << 20);
  const auto arch = ModelArch::mlp(12, 16, 10);
  TrainingConfig t;
  t.num_clients = 40;
  t.clients_per_round = 20;
  t.gamma = 4;
  t.rounds = 5;
  const auto seq = run_astraea(t, arch, part, test);
  t.threads = 6;
  const auto par = run_astraea(t, arch, part, test);
  const double gap = max_abs_diff(seq.final_weights, par.final_weights);
  return {gap <= 1e-12, fmt::format("csv byte-identical across runs; parallel vs sequential max weight gap {:.1e} (<= 1e-12)", gap)};
}

// 9 ----------------------------------------------------------------------
Outcome reduction() {
  std::size_t rounds_checked = 0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto freq = zipf_frequency(10, 1.0);
    const auto counts = apportion(std::span<const double>(freq), 3000);
    const auto data = make_synthetic(10, counts, 10, 3.0, seed);
    PartitionProfile p;
    p.size = SizeProfile::power_law;
    const auto part = partition_clients(data, 30, p, seed + 10);
    const auto test = make_synthetic(10, std::vector<std::int64_t>(10, 20), 10, 3.0, seed + 20, 1u << 20);
    TrainingConfig t;
    t.num_clients = 30;
    t.clients_per_round = 12;
    t.alpha = 0.0;
    t.gamma = 1;
    t.mediator_epochs = 1;
    t.local_epochs = 2;
    t.rounds = 10;
    t.seed = seed;
    t.record_trajectory = true;
    const auto arch = seed == 2 ? ModelArch::mlp(10, 8, 10) : ModelArch::softmax(10, 10);
    t.mode = Mode::astraea;
    const auto ra = run_astraea(t, arch, part, test);
    t.mode = Mode::fedavg;
    const auto rf = run_fedavg_baseline(t, arch, part, test);
    for (std::size_t r = 0; r < t.rounds; ++r) {
      if (!(ra.trajectory[r] == rf.trajectory[r])) {
        return {false, fmt::format("seed {} round {}: max gap {:.3e}", seed, r + 1, max_abs_diff(ra.trajectory[r], rf.trajectory[r]))};
      }
      ++rounds_checked;
    }
  }
  return {true, fmt::format("{} rounds over 3 seeds bitwise identical to FedAvg", rounds_checked)};
}

}  // namespace

int main() {
  criterion(1, 5, proposition);
  criterion(2, 10, greedy_oracle);
  criterion(3, 30, kld_rebalancing);
  criterion(4, 60, augmentation_conservation);

  AbRun ab;
  criterion(5, 180, [&] {
    ab = ab_runs();
    if (!ab.error.empty()) return Outcome{false, ab.error};
    const double gain = 100.0 * (ab.astraea - ab.fedavg);
    return Outcome{gain >= 2.0, fmt::format("mean final accuracy astraea {:.4f} vs fedavg {:.4f} (+{:.2f} pp, need >= 2)",
                                            ab.astraea, ab.fedavg, gain)};
  });
  criterion(6, 60, [&] { return traffic_conformance(ab); });
  criterion(7, 60, gradient_check);
  criterion(8, 60, determinism);
  criterion(9, 60, reduction);
  std::cout << (failures == 0 ? "all criteria passed" : fmt::format("{} criteria failed", failures)) << std::endl;
  return failures;
}
