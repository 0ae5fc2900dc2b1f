#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace astraea {

/// Largest-remainder (Hamilton) apportionment of `total` units over integer
/// weights. Quotas are computed exactly in integer arithmetic; leftover units go
/// to the largest remainders, ties to the lowest index. Zero weights receive
/// nothing. Throws ConfigError if all weights are zero and total > 0.
std::vector<std::int64_t> apportion(std::span<const std::int64_t> weights, std::int64_t total);

/// Same, for nonnegative real weights (need not be normalized).
std::vector<std::int64_t> apportion(std::span<const double> weights, std::int64_t total);

}  // namespace astraea
