#include "psync/analysis/histogram.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "psync/kernels/kernels.hpp"

namespace psync::analysis {

std::size_t HistGeometry::bins() const { return static_cast<std::size_t>((t_max - t_min) / bin_width); }

void HistGeometry::validate() const {
  if (bin_width <= 0) throw ValidationError("histogram bin width must be > 0");
  if (t_max <= t_min || (t_max - t_min) % bin_width != 0)
    throw ValidationError("histogram range must be a positive multiple of the bin width");
}

HistGeometry HistGeometry::from(const AnalysisParams& a, std::int64_t shift) {
  HistGeometry g{a.bin_width.count(), a.hist_min.count() + shift, a.hist_max.count() + shift};
  g.validate();
  return g;
}

Histogram::Histogram(const HistGeometry& g) : bin_width(g.bin_width), t_min(g.t_min), t_max(g.t_max) {
  g.validate();
  counts.assign(g.bins(), 0);
}

void Histogram::recount() { total_pairs = std::accumulate(counts.begin(), counts.end(), std::uint64_t{0}); }

void Histogram::merge(const Histogram& other) {
  if (!(geometry() == other.geometry())) throw ValidationError("histogram merge: bin geometry differs");
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
  total_pairs += other.total_pairs;
}

Histogram cross_correlation(std::span<const std::int64_t> a, std::span<const std::int64_t> b, const HistGeometry& g) {
  Histogram h(g);
  std::size_t lo = 0;
  const std::int64_t span_end = g.t_min + g.bin_width * static_cast<std::int64_t>(g.bins());
  for (const std::int64_t ta : a) {
    while (lo < b.size() && b[lo] < ta + g.t_min) ++lo;
    std::size_t hi = lo;
    while (hi < b.size() && b[hi] < ta + span_end) ++hi;
    if (hi > lo) kernels::accumulate_offsets(ta, b.subspan(lo, hi - lo), g.t_min, g.bin_width, h.counts);
  }
  h.recount();
  return h;
}

Histogram cross_correlation(const sim::TagRecord& rec, sim::Channel a, sim::Channel b, const HistGeometry& g) {
  const auto ta = rec.times(a);
  const auto tb = rec.times(b);
  return cross_correlation(ta, tb, g);
}

WindowLocation locate_window(const Histogram& h, std::int64_t width) {
  if (width <= 0) throw ValidationError("window width must be > 0");
  const std::size_t nw = static_cast<std::size_t>((width + h.bin_width - 1) / h.bin_width);
  if (nw > h.bins()) throw ValidationError("window wider than the histogram range");
  if (h.total_pairs == 0) throw ValidationError("cannot locate a window in an empty histogram");
  std::uint64_t run = 0;
  for (std::size_t i = 0; i < nw; ++i) run += h.counts[i];
  std::uint64_t best = run;
  std::size_t best_i = 0;
  for (std::size_t i = nw; i < h.bins(); ++i) {
    run += h.counts[i];
    run -= h.counts[i - nw];
    if (run > best) {
      best = run;
      best_i = i + 1 - nw;
    }
  }
  std::vector<std::uint64_t> sorted = h.counts;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2), sorted.end());
  const double bg = static_cast<double>(sorted[sorted.size() / 2]);
  const double signal = static_cast<double>(h.total_pairs) - bg * static_cast<double>(h.bins());
  const double in_window = static_cast<double>(best) - bg * static_cast<double>(nw);
  WindowLocation loc;
  loc.offset = h.bin_start(best_i);
  loc.counts = best;
  loc.energy_fraction = signal > 0.0 ? std::clamp(in_window / signal, 0.0, 1.0) : 0.0;
  return loc;
}

double temporal_overlap(const Histogram& a, const Histogram& b) {
  if (!(a.geometry() == b.geometry())) throw ValidationError("temporal_overlap: histogram geometries differ");
  std::vector<double> x(a.counts.begin(), a.counts.end());
  std::vector<double> y(b.counts.begin(), b.counts.end());
  const auto s = kernels::overlap_sums(x, y);
  if (s.sum_a <= 0.0 || s.sum_b <= 0.0) throw ValidationError("temporal_overlap: empty histogram");
  return std::min(1.0, s.sqrt_product * s.sqrt_product / (s.sum_a * s.sum_b));
}

Histogram crop(const Histogram& h, std::int64_t lo, std::int64_t hi) {
  lo = std::max(lo, h.t_min);
  hi = std::min(hi, h.t_max);
  if ((lo - h.t_min) % h.bin_width != 0 || (hi - h.t_min) % h.bin_width != 0 || hi <= lo)
    throw ValidationError("crop: bounds must be bin aligned and inside the histogram");
  Histogram out(HistGeometry{h.bin_width, lo, hi});
  const auto first = static_cast<std::size_t>((lo - h.t_min) / h.bin_width);
  std::copy_n(h.counts.begin() + static_cast<std::ptrdiff_t>(first), out.bins(), out.counts.begin());
  out.recount();
  return out;
}

void write_histogram_csv(std::ostream& os, const Histogram& h) {
  os << "tau_ps,counts\n";
  for (std::size_t i = 0; i < h.bins(); ++i) os << h.bin_start(i) << ',' << h.counts[i] << '\n';
}

}  // namespace psync::analysis
