#include "astraea/apportion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "astraea/error.hpp"

namespace astraea {

namespace {

// Hands out `leftover` units by descending remainder; stable sort keeps
// lowest-index-first on ties.
template <typename Rem>
void distribute_leftover(std::vector<std::int64_t>& out, const std::vector<Rem>& remainder,
                         const std::vector<bool>& eligible, std::int64_t leftover) {
  std::vector<std::size_t> order(out.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t i : order) {
    if (leftover == 0) break;
    if (!eligible[i]) continue;
    ++out[i];
    --leftover;
  }
}

}  // namespace

std::vector<std::int64_t> apportion(std::span<const std::int64_t> weights, std::int64_t total) {
  if (total < 0) throw ConfigError("apportionment total must be >= 0");
  std::vector<std::int64_t> out(weights.size(), 0);
  if (total == 0) return out;
  __int128 sum = 0;
  for (std::int64_t w : weights) {
    if (w < 0) throw ConfigError("apportionment weights must be >= 0");
    sum += w;
  }
  if (sum == 0) throw ConfigError("cannot apportion over all-zero weights");

  std::vector<__int128> remainder(weights.size());
  std::vector<bool> eligible(weights.size());
  std::int64_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const __int128 num = static_cast<__int128>(weights[i]) * total;
    out[i] = static_cast<std::int64_t>(num / sum);
    remainder[i] = num % sum;
    eligible[i] = weights[i] > 0;
    assigned += out[i];
  }
  distribute_leftover(out, remainder, eligible, total - assigned);
  return out;
}

std::vector<std::int64_t> apportion(std::span<const double> weights, std::int64_t total) {
  if (total < 0) throw ConfigError("apportionment total must be >= 0");
  std::vector<std::int64_t> out(weights.size(), 0);
  if (total == 0) return out;
  long double sum = 0.0L;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("apportionment weights must be finite and >= 0");
    sum += w;
  }
  if (sum == 0.0L) throw ConfigError("cannot apportion over all-zero weights");

  std::vector<long double> remainder(weights.size());
  std::vector<bool> eligible(weights.size());
  std::int64_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const long double quota = static_cast<long double>(weights[i]) / sum * static_cast<long double>(total);
    const long double whole = std::floor(quota);
    out[i] = static_cast<std::int64_t>(whole);
    remainder[i] = quota - whole;
    eligible[i] = weights[i] > 0.0;
    assigned += out[i];
  }
  // Rounding can push the floor sum a unit past total in degenerate cases.
  while (assigned > total) {
    auto it = std::max_element(out.begin(), out.end());
    --*it;
    --assigned;
  }
  distribute_leftover(out, remainder, eligible, total - assigned);
  return out;
}

}  // namespace astraea
