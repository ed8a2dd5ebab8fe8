#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <vector>

#include "psync/analysis/estimators.hpp"
#include "psync/analysis/histogram.hpp"
#include "psync/analysis/streaming.hpp"

using namespace psync;
using namespace psync::analysis;
using sim::Channel;
using sim::LogEntry;
using sim::LogKind;
using sim::TimeTag;

namespace {

std::vector<std::int64_t> poisson_times(double rate_per_ps, std::int64_t t_end, std::mt19937_64& rng) {
  std::exponential_distribution<double> gap(rate_per_ps);
  std::vector<std::int64_t> v;
  double t = gap(rng);
  while (t < static_cast<double>(t_end)) {
    v.push_back(static_cast<std::int64_t>(t));
    t += gap(rng);
  }
  return v;
}

Histogram brute_xcorr(const std::vector<std::int64_t>& a, const std::vector<std::int64_t>& b, const HistGeometry& g) {
  Histogram h(g);
  for (auto x : a)
    for (auto y : b) {
      const std::int64_t tau = y - x;
      if (tau < g.t_min || tau >= g.t_max) continue;
      const auto k = static_cast<std::size_t>((tau - g.t_min) / g.bin_width);
      if (k < h.counts.size()) {
        ++h.counts[k];
        ++h.total_pairs;
      }
    }
  return h;
}

sim::TagRecord merge_record(const std::vector<std::pair<Channel, std::vector<std::int64_t>>>& streams) {
  sim::TagRecord r;
  for (const auto& [c, ts] : streams)
    for (auto t : ts) r.tags.push_back({c, t});
  std::stable_sort(r.tags.begin(), r.tags.end(), [](const TimeTag& x, const TimeTag& y) { return x.time < y.time; });
  return r;
}

// Replays a record in pieces with frontiers, as the engine does.
void feed_chunked(const sim::TagRecord& rec, sim::TagSink& sink, std::size_t chunk) {
  std::size_t i = 0, j = 0;
  while (i < rec.tags.size() || j < rec.log.size()) {
    const std::size_t ie = std::min(rec.tags.size(), i + chunk);
    std::int64_t frontier = ie < rec.tags.size() ? rec.tags[ie].time : std::numeric_limits<std::int64_t>::max() / 2;
    std::size_t ii = ie;
    while (ii > i && rec.tags[ii - 1].time >= frontier) --ii;
    if (ii == i && ie < rec.tags.size()) {
      ii = ie;
      while (ii < rec.tags.size() && rec.tags[ii].time == rec.tags[ie].time) ++ii;
      frontier = ii < rec.tags.size() ? rec.tags[ii].time : std::numeric_limits<std::int64_t>::max() / 2;
    }
    std::size_t je = j;
    while (je < rec.log.size() && rec.log[je].time < frontier) ++je;
    sink.consume(std::span(rec.tags).subspan(i, ii - i), std::span(rec.log).subspan(j, je - j), frontier);
    i = ii;
    j = je;
  }
  sink.finish(rec.info);
}

}  // namespace

TEST_CASE("cross-correlation equals the O(n^2) count") {
  std::mt19937_64 rng(42);
  const HistGeometry g{100, -5000, 15000};
  for (int k = 0; k < 50; ++k) {
    std::uniform_int_distribution<int> n(0, 1000);
    std::uniform_int_distribution<std::int64_t> t(0, 2'000'000);
    std::vector<std::int64_t> a(static_cast<std::size_t>(n(rng))), b(static_cast<std::size_t>(n(rng)));
    for (auto& x : a) x = t(rng);
    for (auto& x : b) x = t(rng);
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const auto fast = cross_correlation(a, b, g);
    const auto slow = brute_xcorr(a, b, g);
    CHECK(fast.counts == slow.counts);
    CHECK(fast.total_pairs == slow.total_pairs);
  }
  const auto rec = merge_record({{Channel::idler1, {0, 1000}}, {Channel::sig_a, {500, 1200, 9000}}});
  const auto h = cross_correlation(rec, Channel::idler1, Channel::sig_a, g);
  CHECK(h.total_pairs == 6);
}

TEST_CASE("histogram merge and crop") {
  const HistGeometry g{100, 0, 1000};
  Histogram a(g), b(g);
  a.counts[1] = 3;
  b.counts[1] = 2;
  b.counts[9] = 1;
  a.recount();
  b.recount();
  a.merge(b);
  CHECK(a.counts[1] == 5);
  CHECK(a.total_pairs == 6);
  Histogram c(HistGeometry{50, 0, 1000});
  CHECK_THROWS_AS(a.merge(c), ValidationError);
  const auto cr = crop(a, 100, 300);
  CHECK(cr.t_min == 100);
  CHECK(cr.bins() == 2);
  CHECK(cr.total_pairs == 5);
  CHECK_THROWS_AS(HistGeometry({0, 0, 100}).validate(), ValidationError);
  std::ostringstream os;
  write_histogram_csv(os, cr);
  CHECK(os.str().rfind("tau_ps,counts\n100,5\n", 0) == 0);
}

TEST_CASE("window location") {
  Histogram h(HistGeometry{100, -20000, 80000});
  std::mt19937_64 rng(1);
  std::normal_distribution<double> peak(5000.0, 400.0);
  for (int i = 0; i < 20000; ++i) {
    const auto tau = static_cast<std::int64_t>(peak(rng));
    ++h.counts[static_cast<std::size_t>((tau + 20000) / 100)];
  }
  for (auto& c : h.counts) c += 2;  // flat background
  h.recount();
  const auto loc = locate_window(h, 3500);
  CHECK(loc.offset <= 5000 - 1500);
  CHECK(loc.offset + 3500 >= 5000 + 1500);
  CHECK(loc.energy_fraction > 0.99);
  Histogram empty(HistGeometry{100, 0, 1000});
  CHECK_THROWS_AS(locate_window(empty, 300), ValidationError);
  CHECK_THROWS_AS(locate_window(h, 200000), ValidationError);
}

TEST_CASE("temporal overlap") {
  const HistGeometry g{10, -10000, 10000};
  Histogram a(g), b(g);
  const double s1 = 400, s2 = 640;
  for (std::size_t i = 0; i < a.bins(); ++i) {
    const double t = static_cast<double>(a.bin_start(i)) + 5.0;
    a.counts[i] = static_cast<std::uint64_t>(std::llround(1e6 * std::exp(-t * t / (2 * s1 * s1))));
    b.counts[i] = static_cast<std::uint64_t>(std::llround(1e6 * std::exp(-t * t / (2 * s2 * s2))));
  }
  a.recount();
  b.recount();
  CHECK(temporal_overlap(a, a) == 1.0);
  CHECK(temporal_overlap(a, b) == doctest::Approx(2 * s1 * s2 / (s1 * s1 + s2 * s2)).epsilon(1e-4));
  Histogram c(g), d(g);
  c.counts[0] = 1;
  d.counts[1] = 1;
  c.recount();
  d.recount();
  CHECK(temporal_overlap(c, d) == 0.0);
  CHECK_THROWS_AS(temporal_overlap(a, Histogram(HistGeometry{20, -10000, 10000})), ValidationError);
  CHECK_THROWS_AS(temporal_overlap(a, Histogram(g)), ValidationError);
}

TEST_CASE("window counter matches a direct count") {
  std::mt19937_64 rng(7);
  const std::int64_t T = 200'000'000;
  auto i1 = poisson_times(2e-6, T, rng);
  auto sa = poisson_times(5e-6, T, rng);
  auto sb = poisson_times(5e-6, T, rng);
  const auto rec = merge_record({{Channel::idler1, i1}, {Channel::sig_a, sa}, {Channel::sig_b, sb}});
  const std::vector<Window> w = {{Channel::sig_a, 1000, 3500}, {Channel::sig_b, -2000, 3500}};
  WindowCounter one(Anchor::idler1, w), chunked(Anchor::idler1, w);
  feed(rec, one);
  feed_chunked(rec, chunked, 97);

  const auto any_in = [](const std::vector<std::int64_t>& v, std::int64_t lo, std::int64_t hi) {
    return std::any_of(v.begin(), v.end(), [&](auto t) { return t >= lo && t < hi; });
  };
  CountResult expect;
  for (auto t : i1) {
    unsigned m = 0;
    if (any_in(sa, t + 1000, t + 4500)) m |= 1;
    if (any_in(sb, t - 2000, t + 1500)) m |= 2;
    ++expect.anchors;
    ++expect.masks[m];
  }
  CHECK(one.result().anchors == expect.anchors);
  CHECK(one.result().masks == expect.masks);
  CHECK(chunked.result().masks == expect.masks);
}

TEST_CASE("idler-pair anchors") {
  const auto rec = merge_record({{Channel::idler1, {10'000, 50'000, 90'000}},
                                 {Channel::idler2, {10'200, 49'000, 52'000, 90'000, 90'250}},
                                 {Channel::sig_a, {12'000}},
                                 {Channel::sig_b, {12'100}}});
  WindowCounter wc(Anchor::idler_pair, {{Channel::sig_a, 1000, 3500}, {Channel::sig_b, 1000, 3500, true}}, 300);
  feed(rec, wc);
  // (10000,10200), (90000,90000), (90000,90250)
  CHECK(wc.result().anchors == 3);
  CHECK(wc.result().with_all(0b11) == 1);

  WindowCounter shifted(Anchor::idler_pair, {{Channel::sig_a, 0, 100}}, 300, 0, 1000);
  feed(rec, shifted);
  // t1 - t2 within 1000 +- 300: (50000,49000)
  CHECK(shifted.result().anchors == 1);
}

TEST_CASE("memory-operation anchors and storage bins") {
  sim::TagRecord rec = merge_record({{Channel::sig_a, {101'500, 302'000}}});
  rec.log = {{LogKind::pc_store, 80'000, 0, -1}, {LogKind::pc_retrieve, 100'000, 0, 80'000},
             {LogKind::pc_store, 250'000, 0, -1}, {LogKind::pc_retrieve, 300'000, 0, 250'000}};
  WindowCounter wc(Anchor::memory_op, {{Channel::sig_a, 0, 3500}}, 300, 10'000);
  feed(rec, wc);
  CHECK(wc.result().anchors == 2);
  CHECK(wc.result().with_all(1) == 2);
  REQUIRE(wc.binned().size() == 2);
  CHECK(wc.binned().count(2) == 1);
  CHECK(wc.binned().count(5) == 1);
  const auto pts = decay_points(wc.binned(), 10'000, 0.5);
  REQUIRE(pts.size() == 4);
  CHECK(pts[0].efficiency == doctest::Approx(2.0));
  CHECK(pts[1].empty);
  CHECK(pts[0].t_ns == doctest::Approx(25.0));
  std::ostringstream os;
  write_decay_csv(os, pts);
  CHECK(os.str() == "t_ns,value,stderr\n25.000000,2,0\n55.000000,2,0\n");
}

TEST_CASE("g2 of uncorrelated Poisson light is one") {
  std::mt19937_64 rng(11);
  const std::int64_t T = 200'000'000'000LL;  // 0.2 s
  const auto herald = poisson_times(2e-6, T, rng);
  // Thinned from a common stream: independent Poisson processes on each port.
  const auto parent = poisson_times(6.7e-5, T, rng);
  std::vector<std::int64_t> a, b;
  std::bernoulli_distribution coin(0.5), keep(0.6);
  for (auto t : parent)
    if (keep(rng)) (coin(rng) ? a : b).push_back(t);
  const auto rec = merge_record({{Channel::idler1, herald}, {Channel::sig_a, a}, {Channel::sig_b, b}});
  WindowSpec spec;
  spec.set(Anchor::idler1, Channel::sig_a, 1000);
  spec.set(Anchor::idler1, Channel::sig_b, 1000);
  spec.herald_window = 3500;
  const auto r = g2h_estimate(rec, spec);
  CAPTURE(r.g2.value);
  CAPTURE(r.nab);
  CHECK(std::abs(r.g2.value - 1.0) <= 3.0 * r.g2.stderr_);
  CHECK(r.nab > 1000);
}

TEST_CASE("count arithmetic") {
  CountResult c;
  c.anchors = 1000;
  c.masks[0b01] = 90;
  c.masks[0b10] = 80;
  c.masks[0b11] = 10;
  c.masks[0] = 820;
  const auto g = g2_from_counts(c);
  CHECK(g.na == 100);
  CHECK(g.nb == 90);
  CHECK(g.g2.value == doctest::Approx(10.0 * 1000 / (100.0 * 90.0)));
  CountResult z;
  z.anchors = 5;
  z.masks[0] = 5;
  CHECK_THROWS_AS(g2_from_counts(z), ValidationError);

  CountResult d;
  d.anchors = 10;
  d.masks[0b0011] = 2;
  d.masks[0b1100] = 3;
  d.masks[0b1111] = 1;
  d.masks[0b0101] = 4;
  const auto dh = double_heralds(d);
  CHECK(dh.direct == 3);
  CHECK(dh.either == 6);
  CHECK(stoc_rates(d, 2.0).r_stoc.value == doctest::Approx(1.5));

  ElectronicsParams el;
  const auto dt = downtime_from_counts(1000, 100, 0.01, el);
  CHECK(dt.value == doctest::Approx((900 * 260e-9 + 100 * 1.525e-6) / 0.01));
  CHECK(downtime_from_counts(1, 1, 0.0, el).value == 0.0);
}

TEST_CASE("HOM visibility") {
  std::vector<HomPoint> scan = {{-4000, 100, 1000}, {0, 10, 1000}, {4000, 100, 1000}, {500, 50, 1000}};
  const auto r = hom_visibility(scan, 3000, 5000);
  CHECK(r.visibility.value == doctest::Approx(0.9));
  CHECK(r.plateau_points == 2);
  CHECK(r.visibility.stderr_ == doctest::Approx(0.1 * std::sqrt(1.0 / 10 + 1.0 / 200)));
  std::vector<HomPoint> no_zero = {{-4000, 100, 1000}};
  CHECK_THROWS_AS(hom_visibility(no_zero), ValidationError);
  std::vector<HomPoint> no_plateau = {{0, 1, 10}, {100, 5, 10}};
  CHECK_THROWS_AS(hom_visibility(no_plateau), ValidationError);
}

TEST_CASE("rate estimators on empty and log-less input") {
  sim::TagRecord empty;
  WindowSpec spec;
  ElectronicsParams el;
  const auto r = pair_rates(empty, spec, RateMode::sync, el);
  CHECK(r.r_sync.value == 0.0);
  auto rec = merge_record({{Channel::idler1, {10}}});
  CHECK_THROWS_AS(pair_rates(rec, spec, RateMode::sync, el), ValidationError);
  CHECK(parse_rate_mode("stoc") == RateMode::stoc);
  CHECK_THROWS_AS(parse_rate_mode("x"), ValidationError);
}

TEST_CASE("metrics CSV") {
  std::ostringstream os;
  std::vector<MetricRow> rows = {{"g2", 0.5, 0.01, 7}};
  write_metrics_csv(os, rows);
  CHECK(os.str() == "metric,value,stderr,n\ng2,0.5,0.01,7\n");
}
