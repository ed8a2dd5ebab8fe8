#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "psync/core/params.hpp"
#include "psync/sim/types.hpp"

namespace psync::analysis {

struct HistGeometry {
  std::int64_t bin_width = 100;
  std::int64_t t_min = -20'000;
  std::int64_t t_max = 80'000;

  std::size_t bins() const;
  void validate() const;
  friend bool operator==(const HistGeometry&, const HistGeometry&) = default;

  // Configured tau axis, shifted by `shift` ps.
  static HistGeometry from(const AnalysisParams& a, std::int64_t shift = 0);
};

struct Histogram {
  std::int64_t bin_width = 100;
  std::int64_t t_min = 0;
  std::int64_t t_max = 0;
  std::vector<std::uint64_t> counts;
  std::uint64_t total_pairs = 0;

  Histogram() = default;
  explicit Histogram(const HistGeometry& g);

  HistGeometry geometry() const { return {bin_width, t_min, t_max}; }
  std::size_t bins() const { return counts.size(); }
  std::int64_t bin_start(std::size_t i) const { return t_min + static_cast<std::int64_t>(i) * bin_width; }
  // Recomputes total_pairs from the bins.
  void recount();
  // Associative merge of shards with identical geometry.
  void merge(const Histogram& other);
};

// Histogram of tau = t_b - t_a over every pair with tau in [t_min, t_max).
// Both inputs must be sorted; runs in O(n_a + n_b + pairs).
Histogram cross_correlation(std::span<const std::int64_t> a, std::span<const std::int64_t> b, const HistGeometry& g);
Histogram cross_correlation(const sim::TagRecord& rec, sim::Channel a, sim::Channel b, const HistGeometry& g);

struct WindowLocation {
  std::int64_t offset = 0;       // window start relative to the anchor
  std::uint64_t counts = 0;      // raw counts inside the window
  double energy_fraction = 0.0;  // background-subtracted share of the peak inside the window
};

// Start of the `width`-wide window (whole bins) holding the most counts.
// Throws when the histogram is empty or narrower than the window.
WindowLocation locate_window(const Histogram& h, std::int64_t width);

// (sum sqrt(c1 c2))^2 / (sum c1 * sum c2); geometries must match.
double temporal_overlap(const Histogram& a, const Histogram& b);

// Copy of `h` restricted to [lo, hi) (bin aligned).
Histogram crop(const Histogram& h, std::int64_t lo, std::int64_t hi);

void write_histogram_csv(std::ostream& os, const Histogram& h);

}  // namespace psync::analysis
