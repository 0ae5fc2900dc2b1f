#include <doctest.h>

#include <algorithm>
#include <set>

#include "astraea/apportion.hpp"
#include "astraea/engine.hpp"
#include "astraea/error.hpp"
#include "astraea/random.hpp"
#include "helpers.hpp"

using namespace astraea;

namespace {

ClientPartition zipf_partition(std::size_t k, std::uint64_t seed, std::size_t dim = 10) {
  const auto freq = zipf_frequency(10, 1.0);
  const auto counts = apportion(std::span<const double>(freq), 3000);
  const auto data = make_synthetic(10, counts, dim, 3.0, seed);
  PartitionProfile p;
  p.size = SizeProfile::power_law;
  p.local = LocalProfile::random;
  return partition_clients(data, k, p, seed + 1);
}

LabeledDataset balanced_test(std::uint64_t seed, std::size_t dim = 10) {
  const std::vector<std::int64_t> counts(10, 50);
  return make_synthetic(10, counts, dim, 3.0, seed, 1u << 30);
}

TrainingConfig small_config(Mode mode) {
  TrainingConfig c;
  c.mode = mode;
  c.num_clients = 20;
  c.clients_per_round = 8;
  c.gamma = 3;
  c.rounds = 4;
  c.seed = 5;
  return c;
}

}  // namespace

TEST_CASE("full-batch sgd client update is one gradient step") {
  const auto arch = ModelArch::softmax(4, 3);
  const auto x = testing::random_features(30, 4, 1);
  const auto y = testing::random_labels(30, 3, 2);
  const auto data = testing::dataset_from(x, y, 3);
  const auto w = testing::random_params(arch, 3);
  const OptimizerConfig sgd{OptimizerKind::sgd, 0.3};
  const auto got = client_update(w, data, LocalTraining{1, 30, sgd}, 11);
  const auto expected = optimizer_step(w, loss_and_grad(w, x, y).grad, OptimizerState(sgd)).first;
  CHECK(max_abs_diff(got, expected) <= 1e-15);
}

TEST_CASE("client update is deterministic and ignores storage order") {
  const auto arch = ModelArch::mlp(4, 5, 3);
  auto data = testing::dataset_from(testing::random_features(40, 4, 1), testing::random_labels(40, 3, 2), 3);
  const auto w = testing::random_params(arch, 3, 0.1);
  const LocalTraining lt{2, 7, OptimizerConfig{OptimizerKind::adam, 0.01}};
  const auto a = client_update(w, data, lt, 99);
  CHECK(a == client_update(w, data, lt, 99));
  data.shuffle(1234);
  CHECK(a == client_update(w, data, lt, 99));
  CHECK_FALSE(a == client_update(w, data, lt, 100));
}

TEST_CASE("mediator update") {
  const auto arch = ModelArch::softmax(3, 2);
  const auto d1 = testing::dataset_from(testing::random_features(12, 3, 1), testing::random_labels(12, 2, 2), 2);
  const auto d2 = testing::dataset_from(testing::random_features(9, 3, 3), testing::random_labels(9, 2, 4), 2);
  const auto w = testing::random_params(arch, 5);
  const LocalTraining lt{1, 4, OptimizerConfig{OptimizerKind::sgd, 0.1}};

  SUBCASE("single client, one pass") {
    const std::vector<MediatorMember> m{{7, &d1}};
    const auto delta = mediator_update(m, w, 1, lt, 42, 3);
    const auto expected = difference(client_update(w, d1, lt, client_train_seed(42, 3, 7, 0)), w);
    CHECK(delta == expected);
  }
  SUBCASE("two clients, two passes unrolled by hand") {
    const std::vector<MediatorMember> m{{4, &d1}, {9, &d2}};
    auto v = client_update(w, d1, lt, client_train_seed(42, 3, 4, 0));
    v = client_update(v, d2, lt, client_train_seed(42, 3, 9, 0));
    v = client_update(v, d1, lt, client_train_seed(42, 3, 4, 1));
    v = client_update(v, d2, lt, client_train_seed(42, 3, 9, 1));
    CHECK(mediator_update(m, w, 2, lt, 42, 3) == difference(v, w));
  }
  SUBCASE("zero gradient data gives zero delta") {
    // Zero features and balanced labels: softmax of zero weights already matches.
    LabeledDataset flat(2, 3);
    const std::vector<double> zero(3, 0.0);
    for (int i = 0; i < 8; ++i) flat.add(static_cast<std::uint64_t>(i), zero, i % 2);
    const std::vector<MediatorMember> m{{0, &flat}};
    const auto delta = mediator_update(m, ParameterVector::zeros(arch), 2, LocalTraining{1, 8, lt.optimizer}, 1, 1);
    for (double v : delta.values()) CHECK(v == 0.0);
  }
}

TEST_CASE("aggregation") {
  const auto arch = ModelArch::softmax(1, 2);
  const ParameterVector w(arch, {0, 0, 0, 0});
  const ParameterVector a(arch, {1, 2, 3, 4});
  const ParameterVector b(arch, {3, 2, 1, 0});
  SUBCASE("equal sizes average") {
    const std::vector<std::pair<std::size_t, ParameterVector>> cw{{10, a}, {10, b}};
    CHECK(fedavg_aggregate(w, cw) == ParameterVector(arch, {2, 2, 2, 2}));
  }
  SUBCASE("30 and 10") {
    const std::vector<std::pair<std::size_t, ParameterVector>> cw{{30, a}, {10, b}};
    const auto g = fedavg_aggregate(w, cw);
    for (std::size_t i = 0; i < 4; ++i) CHECK(g[i] == doctest::Approx(0.75 * a[i] + 0.25 * b[i]).epsilon(1e-15));
  }
  SUBCASE("summation order does not matter") {
    std::mt19937_64 rng(4);
    std::vector<Contribution> cs;
    for (std::size_t m = 0; m < 7; ++m) {
      cs.push_back({1 + rng() % 50, m * 10, testing::random_params(arch, rng(), 1.0)});
    }
    const auto ref = aggregate_deltas(w, cs);
    for (int t = 0; t < 10; ++t) {
      std::shuffle(cs.begin(), cs.end(), rng);
      CHECK(max_abs_diff(aggregate_deltas(w, cs), ref) <= 1e-12);
    }
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(aggregate_deltas(w, {}), ConfigError);
    CHECK_THROWS_AS(aggregate_deltas(w, {{0, 0, a}}), ConfigError);
  }
}

TEST_CASE("client sampling") {
  for (std::size_t round = 1; round <= 20; ++round) {
    const auto ids = sample_clients(30, 12, 8, round);
    CHECK(ids.size() == 12);
    CHECK(std::is_sorted(ids.begin(), ids.end()));
    CHECK(std::set<ClientId>(ids.begin(), ids.end()).size() == 12);
    CHECK(ids.back() < 30);
  }
  CHECK(sample_clients(30, 12, 8, 1) == sample_clients(30, 12, 8, 1));
  CHECK(sample_clients(5, 5, 8, 1) == std::vector<ClientId>{0, 1, 2, 3, 4});
  CHECK_THROWS_AS(sample_clients(5, 6, 8, 1), ConfigError);
}

TEST_CASE("identical clients match centralized gradient descent") {
  const auto arch = ModelArch::softmax(6, 4);
  const std::vector<std::int64_t> counts(4, 25);
  const auto data = make_synthetic(4, counts, 6, 2.0, 3);
  CHECK(proposition_check(arch, data, 1).max_divergence <= 1e-9);
  CHECK(proposition_check(arch, data, 10).max_divergence <= 1e-7);
}

TEST_CASE("mismatched clients drift away from centralized descent") {
  const auto arch = ModelArch::softmax(6, 4);
  const auto a = make_synthetic(4, std::vector<std::int64_t>{40, 5, 5, 5}, 6, 2.0, 3);
  const auto b = make_synthetic(4, std::vector<std::int64_t>{5, 5, 5, 80}, 6, 2.0, 4, 1000);
  const std::vector<LabeledDataset> clients{a, b};
  CHECK(proposition_check(arch, clients, 10, 5, 0.5, 1).max_divergence > 1e-3);
}

TEST_CASE("configuration validation") {
  TrainingConfig c;
  CHECK_NOTHROW(c.validate());
  c.rounds = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainingConfig{};
  c.gamma = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainingConfig{};
  c.clients_per_round = c.num_clients + 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("zero learning rate leaves the model where it started") {
  const auto part = zipf_partition(20, 1);
  const auto test = balanced_test(2);
  TrainingConfig c = small_config(Mode::astraea);
  c.rounds = 1;
  c.optimizer = {OptimizerKind::sgd, 0.0};
  const auto arch = ModelArch::softmax(10, 10);
  const auto r = run_astraea(c, arch, part, test);
  CHECK(r.final_weights == r.initial_weights);
  CHECK(r.reports[0].accuracy == top1_accuracy(r.initial_weights, test.feature_matrix(), test.labels()));
}

TEST_CASE("astraea with alpha 0, gamma 1, E_m 1 is fedavg") {
  const auto part = zipf_partition(20, 3);
  const auto test = balanced_test(4);
  const auto arch = ModelArch::softmax(10, 10);
  TrainingConfig a = small_config(Mode::astraea);
  a.alpha = 0.0;
  a.gamma = 1;
  a.mediator_epochs = 1;
  a.record_trajectory = true;
  TrainingConfig f = a;
  f.mode = Mode::fedavg;
  const auto ra = run_astraea(a, arch, part, test);
  const auto rf = run_fedavg_baseline(f, arch, part, test);
  REQUIRE(ra.trajectory.size() == a.rounds);
  for (std::size_t r = 0; r < a.rounds; ++r) CHECK(ra.trajectory[r] == rf.trajectory[r]);
}

TEST_CASE("parallel mediators match sequential aggregation") {
  const auto part = zipf_partition(20, 5);
  const auto test = balanced_test(6);
  const auto arch = ModelArch::mlp(10, 8, 10);
  TrainingConfig c = small_config(Mode::astraea);
  const auto seq = run_astraea(c, arch, part, test);
  c.threads = 4;
  const auto par = run_astraea(c, arch, part, test);
  CHECK(max_abs_diff(seq.final_weights, par.final_weights) <= 1e-12);
}

TEST_CASE("ledger matches the closed forms") {
  const auto part = zipf_partition(20, 7);
  const auto test = balanced_test(8);
  const auto arch = ModelArch::softmax(10, 10);
  const auto ra = run_astraea(small_config(Mode::astraea), arch, part, test);
  const auto rf = run_fedavg_baseline(small_config(Mode::fedavg), arch, part, test);
  CHECK(ra.ledger.entries()[0].bytes() == 20 * 10 * 8);
  CHECK(rf.ledger.entries()[0].bytes() == 0);
  for (std::size_t r = 1; r <= 4; ++r) {
    CHECK(ra.ledger.entries()[r].bytes() == traffic_astraea_round(8, 3, arch.num_params()));
    CHECK(rf.ledger.entries()[r].bytes() == traffic_fedavg_round(8, arch.num_params()));
  }
}

TEST_CASE("static schedule reuses the first assignment") {
  const auto part = zipf_partition(20, 9);
  const auto test = balanced_test(10);
  TrainingConfig c = small_config(Mode::astraea);
  c.static_schedule = true;
  const auto r = run_astraea(c, ModelArch::softmax(10, 10), part, test);
  for (const auto& s : r.schedules) CHECK(s.assignment.to_json() == r.schedules[0].assignment.to_json());
}

TEST_CASE("astraea beats fedavg on zipf-skewed blobs") {
  const auto part = zipf_partition(50, 11);
  const auto test = balanced_test(12);
  const auto arch = ModelArch::softmax(10, 10);
  TrainingConfig a = small_config(Mode::astraea);
  a.num_clients = 50;
  a.clients_per_round = 20;
  a.gamma = 5;
  a.rounds = 30;
  TrainingConfig f = a;
  f.mode = Mode::fedavg;
  CHECK(run_astraea(a, arch, part, test).reports.back().accuracy >
        run_fedavg_baseline(f, arch, part, test).reports.back().accuracy);
}

TEST_CASE("checkpoints round trip") {
  testing::TempDir dir("ckpt");
  const auto w = testing::random_params(ModelArch::mlp(3, 4, 2), 8);
  const auto manifest = save_checkpoint(dir.path(), 12, w);
  CHECK(manifest.filename() == "checkpoint_000012.json");
  const auto [round, v] = load_checkpoint(manifest);
  CHECK(round == 12);
  CHECK(v == w);
}

TEST_CASE("runs write periodic checkpoints") {
  testing::TempDir dir("ckrun");
  TrainingConfig c = small_config(Mode::fedavg);
  c.checkpoint_interval = 2;
  c.checkpoint_dir = dir.path();
  const auto r = run_fedavg_baseline(c, ModelArch::softmax(10, 10), zipf_partition(20, 13), balanced_test(14));
  CHECK(std::filesystem::exists(dir / "checkpoint_000002.bin"));
  CHECK(std::filesystem::exists(dir / "checkpoint_000004.json"));
  CHECK_FALSE(std::filesystem::exists(dir / "checkpoint_000003.json"));
  CHECK(load_checkpoint(dir / "checkpoint_000004.json").second == r.final_weights);
}

TEST_CASE("partition shape is checked") {
  TrainingConfig c = small_config(Mode::astraea);
  c.num_clients = 21;
  CHECK_THROWS_AS(run_astraea(c, ModelArch::softmax(10, 10), zipf_partition(20, 1), balanced_test(2)), ConfigError);
  CHECK_THROWS_AS(run_fedavg_baseline(small_config(Mode::astraea), ModelArch::softmax(10, 10), zipf_partition(20, 1),
                                      balanced_test(2)),
                  ConfigError);
}
