#include <cmath>

#include "psync/kernels/kernels.hpp"

namespace psync::kernels::scalar {

void decay_curve(std::span<const double> t, double eta0, double inv_sigma, double inv_gamma, std::span<double> out) {
  const double a = 0.5 * inv_sigma * inv_sigma;
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = eta0 * std::exp(-(a * t[i] * t[i]) - t[i] * inv_gamma);
}

OverlapSums overlap_sums(std::span<const double> a, std::span<const double> b) {
  OverlapSums s;
  for (std::size_t i = 0; i < a.size(); ++i) {
    s.sqrt_product += std::sqrt(a[i] * b[i]);
    s.sum_a += a[i];
    s.sum_b += b[i];
  }
  return s;
}

void accumulate_offsets(std::int64_t anchor, std::span<const std::int64_t> times, std::int64_t t_min,
                        std::int64_t width, std::span<std::uint64_t> counts) {
  const std::int64_t lo = anchor + t_min;
  const std::int64_t span = width * static_cast<std::int64_t>(counts.size());
  for (std::int64_t t : times) {
    const std::int64_t d = t - lo;
    if (d < 0 || d >= span) continue;
    ++counts[static_cast<std::size_t>(d / width)];
  }
}

}  // namespace psync::kernels::scalar
