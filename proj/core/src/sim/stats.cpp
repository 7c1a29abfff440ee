#include "srw/sim/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace srw::sim {

double percentile(std::vector<double> values, double p) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const auto n = static_cast<double>(values.size());
  auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * n));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  return values[rank - 1];
}

Summary summarize(const std::vector<double>& values) {
  Summary s;
  s.count = values.size();
  if (values.empty()) return s;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  s.min = *lo;
  s.max = *hi;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  s.p50 = percentile(values, 50);
  s.p95 = percentile(values, 95);
  s.p99 = percentile(values, 99);
  return s;
}

Json to_json(const Summary& s) {
  return Json{{"count", s.count}, {"min", s.min}, {"max", s.max}, {"mean", s.mean},
              {"p50", s.p50},     {"p95", s.p95}, {"p99", s.p99}};
}

double fraction_within(const std::vector<double>& values, double center, double tolerance) {
  if (values.empty()) return 1.0;
  const auto inside = std::count_if(values.begin(), values.end(),
                                    [&](double v) { return std::abs(v - center) <= tolerance; });
  return static_cast<double>(inside) / static_cast<double>(values.size());
}

}  // namespace srw::sim
