#pragma once

#include <cstddef>
#include <vector>

#include "srw/json_codec.hpp"

namespace srw::sim {

/// Nearest-rank percentile, p in (0, 100]. NaN for an empty sample.
double percentile(std::vector<double> values, double p);

struct Summary {
  std::size_t count = 0;
  double min = 0, max = 0, mean = 0, p50 = 0, p95 = 0, p99 = 0;
};

Summary summarize(const std::vector<double>& values);
Json to_json(const Summary& summary);

/// Fraction of values within [center - tolerance, center + tolerance];
/// 1.0 for an empty sample.
double fraction_within(const std::vector<double>& values, double center, double tolerance);

}  // namespace srw::sim
