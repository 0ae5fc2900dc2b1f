#include <doctest.h>

#include <cmath>
#include <random>

#include "astraea/error.hpp"
#include "astraea/rescheduler.hpp"
#include "oracles.hpp"

using namespace astraea;

TEST_CASE("kld values") {
  const std::vector<double> u{0.5, 0.5};
  CHECK(kld(u, u) == 0.0);
  CHECK(kld(std::vector<double>{1.0, 0.0}, u) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(kld_to_uniform(ClassDistribution({5, 5, 0, 0})) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK_THROWS_AS(kld(u, std::vector<double>{1.0, 0.0}), DivergenceError);
  CHECK_THROWS_AS(kld(std::vector<double>{0.5, 0.4}, u), ConfigError);
  CHECK_THROWS_AS(kld_to_uniform(ClassDistribution({0, 0})), ConfigError);
}

TEST_CASE("kld is nonnegative and zero on itself") {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> p(5), q(5);
    double sp = 0, sq = 0;
    for (std::size_t i = 0; i < 5; ++i) {
      p[i] = static_cast<double>(rng() % 100) + 1;
      q[i] = static_cast<double>(rng() % 100) + 1;
      sp += p[i];
      sq += q[i];
    }
    for (std::size_t i = 0; i < 5; ++i) {
      p[i] /= sp;
      q[i] /= sq;
    }
    CHECK(kld(p, q) >= 0.0);
    CHECK(kld(p, p) == 0.0);
  }
}

TEST_CASE("complementary pair forms one uniform mediator") {
  std::map<ClientId, ClassDistribution> d{{0, ClassDistribution({10, 0})}, {1, ClassDistribution({0, 10})}};
  const auto a = reschedule(d, 2);
  REQUIRE(a.mediators.size() == 1);
  CHECK(a.mediators[0].clients.size() == 2);
  CHECK(kld_to_uniform(a.mediators[0].combined) == 0.0);
}

TEST_CASE("gamma 1 gives singleton mediators in greedy start order") {
  // Client KLDs: 0 -> ln2, 1 -> 0, 2 -> small. Greedy start picks the least skewed first.
  std::map<ClientId, ClassDistribution> d{
      {0, ClassDistribution({10, 0})}, {1, ClassDistribution({5, 5})}, {2, ClassDistribution({6, 4})}};
  const auto a = reschedule(d, 1);
  REQUIRE(a.mediators.size() == 3);
  CHECK(a.mediators[0].clients == std::vector<ClientId>{1});
  CHECK(a.mediators[1].clients == std::vector<ClientId>{2});
  CHECK(a.mediators[2].clients == std::vector<ClientId>{0});
}

TEST_CASE("ties go to the lowest client id") {
  std::map<ClientId, ClassDistribution> d{
      {7, ClassDistribution({3, 1})}, {2, ClassDistribution({1, 3})}, {4, ClassDistribution({3, 1})}};
  const auto a = reschedule(d, 3);
  CHECK(a.mediators[0].clients.front() == 2);
}

TEST_CASE("greedy picks are per-step minimal") {
  std::mt19937_64 rng(77);
  for (int t = 0; t < 50; ++t) {
    std::map<ClientId, ClassDistribution> d;
    for (ClientId k = 0; k < 6; ++k) {
      std::vector<std::int64_t> c(4);
      for (auto& v : c) v = static_cast<std::int64_t>(rng() % 20);
      c[rng() % 4] += 1;
      d.emplace(k * 3 + 1, ClassDistribution(c));
    }
    std::vector<GreedyPick> trace;
    const auto a = reschedule(d, 3, &trace);
    INFO("trial " << t);
    CHECK(testing::check_greedy_trace(d, 3, a, trace) == "");
  }
}

TEST_CASE("capacity and coverage") {
  std::map<ClientId, ClassDistribution> d;
  for (ClientId k = 0; k < 11; ++k) d.emplace(k, ClassDistribution({static_cast<std::int64_t>(k + 1), 3, 1}));
  const auto a = reschedule(d, 4);
  CHECK(a.mediators.size() == 3);
  CHECK(a.mediators[2].clients.size() == 3);
  CHECK(a.num_clients() == 11);
  CHECK_THROWS_AS(reschedule(d, 0), ConfigError);
}

TEST_CASE("kld summaries") {
  const auto s = summarize({0.0, 0.0, 0.0});
  CHECK(s.mean == 0.0);
  CHECK(s.iqr() == 0.0);
  CHECK(summarize({0.3}).mean == 0.3);
  const auto q = summarize({4.0, 1.0, 3.0, 2.0, 5.0});
  CHECK(q.median == 3.0);
  CHECK(q.q1 == 2.0);
  CHECK(q.q3 == 4.0);
}

TEST_CASE("mediators are less skewed than their clients") {
  std::mt19937_64 rng(3);
  std::map<ClientId, ClassDistribution> d;
  for (ClientId k = 0; k < 50; ++k) {
    // Each client mostly holds two classes out of ten.
    std::vector<std::int64_t> c(10, 0);
    c[rng() % 10] += 30;
    c[rng() % 10] += 10;
    d.emplace(k, ClassDistribution(c));
  }
  const auto r = kld_report(reschedule(d, 10), d);
  CHECK(r.mediators.mean < r.clients.mean);
  CHECK(r.client_kld.size() == 50);
}
