#include "psync/analysis/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace psync::analysis {

using sim::Channel;

std::int64_t WindowSpec::offset(Anchor a, Channel c) const {
  const auto it = offsets.find({a, c});
  if (it == offsets.end())
    throw ValidationError("no window offset located for " + sim::to_string(c) + " (anchor " +
                          std::to_string(static_cast<int>(a)) + ")");
  return it->second;
}

void WindowSpec::validate() const {
  if (herald_window <= 0) throw ValidationError("herald window must be > 0");
  if (accidental_window <= 0) throw ValidationError("accidental window must be > 0");
}

WindowSpec WindowSpec::from(const AnalysisParams& a) {
  WindowSpec s;
  s.herald_window = a.herald_window.count();
  s.accidental_window = a.coincidence_window.count() / 2;
  s.validate();
  return s;
}

// ------------------------------------------------------------ offsets

OffsetLocator::OffsetLocator(const AnalysisParams& a) {
  const auto idler_geo = HistGeometry::from(a, a.fiber_delay.count());
  const auto op_geo = HistGeometry::from(a, 0);
  for (Anchor an : {Anchor::idler1, Anchor::idler2, Anchor::memory_op})
    for (Channel c : {Channel::sig_a, Channel::sig_b})
      slots_.push_back({an, c, HistogramAccumulator(an, c, an == Anchor::memory_op ? op_geo : idler_geo)});
}

void OffsetLocator::consume(std::span<const sim::TimeTag> tags, std::span<const sim::LogEntry> log,
                            std::int64_t frontier) {
  for (auto& s : slots_) s.acc.consume(tags, log, frontier);
}

void OffsetLocator::finish(const sim::RunInfo& info) {
  for (auto& s : slots_) s.acc.finish(info);
}

const Histogram& OffsetLocator::histogram(Anchor a, Channel c) const {
  for (const auto& s : slots_)
    if (s.anchor == a && s.channel == c) return s.acc.histogram();
  throw ValidationError("no pilot histogram for this anchor/channel");
}

int OffsetLocator::apply(WindowSpec& spec) const {
  int n = 0;
  for (const auto& s : slots_) {
    if (s.acc.histogram().total_pairs == 0) continue;
    spec.set(s.anchor, s.channel, locate_window(s.acc.histogram(), spec.herald_window).offset);
    ++n;
  }
  return n;
}

WindowSpec locate_offsets(const sim::TagRecord& rec, const AnalysisParams& a) {
  OffsetLocator loc(a);
  feed(rec, loc);
  WindowSpec spec = WindowSpec::from(a);
  loc.apply(spec);
  return spec;
}

// ----------------------------------------------------------------- g2

std::vector<Window> g2_windows(const WindowSpec& spec, Anchor anchor) {
  return {{Channel::sig_a, spec.offset(anchor, Channel::sig_a), spec.herald_window},
          {Channel::sig_b, spec.offset(anchor, Channel::sig_b), spec.herald_window}};
}

G2Result g2_from_counts(const CountResult& c) {
  G2Result r;
  r.n = c.anchors;
  r.na = c.with_all(0b01);
  r.nb = c.with_all(0b10);
  r.nab = c.with_all(0b11);
  if (r.na == 0 || r.nb == 0) throw ValidationError("g2 undefined: a pair coincidence count is zero");
  const double scale = static_cast<double>(r.n) / (static_cast<double>(r.na) * static_cast<double>(r.nb));
  r.g2.value = static_cast<double>(r.nab) * scale;
  const double p = static_cast<double>(r.nab) / static_cast<double>(r.n);
  r.g2.stderr_ = r.nab > 0 ? r.g2.value * std::sqrt((1.0 - p) / static_cast<double>(r.nab)) : scale;
  return r;
}

G2Result g2h_estimate(const sim::TagRecord& rec, const WindowSpec& spec, Anchor anchor) {
  WindowCounter wc(anchor, g2_windows(spec, anchor), spec.accidental_window);
  feed(rec, wc);
  return g2_from_counts(wc.result());
}

// ------------------------------------------------------ double heralds

std::vector<Window> double_herald_windows(Anchor anchor, std::int64_t o1, std::int64_t o2, std::int64_t width) {
  const bool pair = anchor == Anchor::idler_pair;
  return {{Channel::sig_a, o1, width, false},
          {Channel::sig_b, o2, width, pair},
          {Channel::sig_a, o2, width, pair},
          {Channel::sig_b, o1, width, false}};
}

DoubleHeralds double_heralds(const CountResult& c) {
  DoubleHeralds d;
  d.anchors = c.anchors;
  d.direct = c.with_all(0b0011);
  for (unsigned m = 0; m < c.masks.size(); ++m)
    if ((m & 0b0011) == 0b0011 || (m & 0b1100) == 0b1100) d.either += c.masks[m];
  return d;
}

std::string to_string(RateMode m) { return m == RateMode::stoc ? "stoc" : "sync"; }

RateMode parse_rate_mode(const std::string& s) {
  if (s == "stoc") return RateMode::stoc;
  if (s == "sync") return RateMode::sync;
  throw ValidationError("unknown rate mode '" + s + "' (expected stoc or sync)");
}

namespace {
Estimate rate(std::uint64_t n, double t) {
  if (t <= 0.0) return {};
  return {static_cast<double>(n) / t, std::sqrt(static_cast<double>(n)) / t};
}
}  // namespace

PairRates stoc_rates(const CountResult& c, double duration_s) {
  PairRates r;
  r.mode = RateMode::stoc;
  r.duration_s = duration_s;
  r.anchors = c.anchors;
  r.double_heralds = double_heralds(c).direct;
  r.r_stoc = rate(r.double_heralds, duration_s);
  return r;
}

Estimate downtime_from_counts(std::uint64_t ddg2, std::uint64_t ddg1, double duration_s,
                              const ElectronicsParams& el) {
  if (duration_s <= 0.0) return {};
  const double d2 = to_seconds(el.tau_d2), d1 = to_seconds(el.tau_d1);
  // ddg1 triggers are a subset of the gates; split into independent counts.
  const double n_gate_only = static_cast<double>(ddg2 >= ddg1 ? ddg2 - ddg1 : 0);
  const double n1 = static_cast<double>(ddg1);
  return {(n_gate_only * d2 + n1 * d1) / duration_s, std::sqrt(n_gate_only * d2 * d2 + n1 * d1 * d1) / duration_s};
}

PairRates sync_rates(const CountResult& c, const RunStats& stats, const ElectronicsParams& el, double duration_s) {
  PairRates r;
  r.mode = RateMode::sync;
  r.duration_s = duration_s;
  r.anchors = c.anchors;
  r.double_heralds = double_heralds(c).direct;
  r.ddg2 = stats.log_count(sim::LogKind::ddg2_trigger);
  r.ddg1 = stats.log_count(sim::LogKind::ddg1_trigger);
  r.r_sync = rate(r.double_heralds, duration_s);
  r.r_trig2 = rate(r.ddg2, duration_s);
  r.r_sync_trials = rate(r.ddg1, duration_s);
  r.downtime = downtime_from_counts(r.ddg2, r.ddg1, duration_s, el);
  return r;
}

PairRates pair_rates(const sim::TagRecord& rec, const WindowSpec& spec, RateMode mode, const ElectronicsParams& el) {
  RunStats stats;
  feed(rec, stats);
  const double t = stats.duration_s();
  if (rec.tags.empty() && rec.log.empty()) {
    PairRates r;
    r.mode = mode;
    r.duration_s = t;
    return r;
  }
  if (mode == RateMode::stoc) {
    WindowCounter wc(Anchor::idler_pair,
                     double_herald_windows(Anchor::idler_pair, spec.offset(Anchor::idler1, Channel::sig_a),
                                           spec.offset(Anchor::idler2, Channel::sig_b), spec.herald_window),
                     spec.accidental_window);
    feed(rec, wc);
    return stoc_rates(wc.result(), t);
  }
  if (rec.log.empty()) throw ValidationError("sync pair rates need the memory-operation event log");
  WindowCounter wc(Anchor::memory_op,
                   double_herald_windows(Anchor::memory_op, spec.offset(Anchor::memory_op, Channel::sig_a),
                                         spec.offset(Anchor::memory_op, Channel::sig_b), spec.herald_window),
                   spec.accidental_window);
  feed(rec, wc);
  return sync_rates(wc.result(), stats, el, t);
}

// ----------------------------------------------------------------- HOM

HomResult hom_visibility(std::span<const HomPoint> scan, std::int64_t plateau_min, std::int64_t plateau_max) {
  if (plateau_min < 0 || plateau_max < plateau_min) throw ValidationError("HOM plateau range is invalid");
  std::uint64_t c0 = 0, n0 = 0, cp = 0, np = 0, pts = 0;
  bool have_zero = false;
  for (const auto& p : scan) {
    const std::int64_t d = p.delay_ps < 0 ? -p.delay_ps : p.delay_ps;
    if (p.delay_ps == 0) {
      have_zero = true;
      c0 += p.coincidences;
      n0 += p.anchors;
    } else if (d >= plateau_min && d <= plateau_max) {
      cp += p.coincidences;
      np += p.anchors;
      ++pts;
    }
  }
  if (!have_zero) throw ValidationError("HOM scan has no zero-delay point");
  if (pts == 0 || cp == 0 || np == 0) throw ValidationError("HOM plateau undefined: scan too narrow or empty");
  if (n0 == 0) throw ValidationError("HOM zero-delay point has no heralds");
  HomResult r;
  r.c0 = static_cast<double>(c0) / static_cast<double>(n0);
  r.c_plateau = static_cast<double>(cp) / static_cast<double>(np);
  r.plateau_points = pts;
  const double ratio = r.c0 / r.c_plateau;
  r.visibility.value = 1.0 - ratio;
  const double rel0 = c0 > 0 ? 1.0 / static_cast<double>(c0) : 1.0;
  const double eff_ratio = c0 > 0 ? ratio : 1.0 / (static_cast<double>(n0) * r.c_plateau);
  r.visibility.stderr_ = eff_ratio * std::sqrt(rel0 + 1.0 / static_cast<double>(cp));
  return r;
}

// --------------------------------------------------------------- decay

std::vector<DecayPoint> decay_points(const std::map<std::int64_t, CountResult>& binned, std::int64_t bin_ps,
                                     double scale) {
  if (bin_ps <= 0) throw ValidationError("decay bin width must be > 0");
  if (!(scale > 0.0)) throw ValidationError("decay efficiency scale must be > 0");
  std::vector<DecayPoint> out;
  if (binned.empty()) return out;
  const std::int64_t first = binned.begin()->first, last = binned.rbegin()->first;
  for (std::int64_t k = first; k <= last; ++k) {
    DecayPoint p;
    p.t_ns = (static_cast<double>(k) + 0.5) * static_cast<double>(bin_ps) * 1e-3;
    const auto it = binned.find(k);
    if (it == binned.end() || it->second.anchors == 0) {
      p.empty = true;
      out.push_back(p);
      continue;
    }
    p.ops = it->second.anchors;
    p.hits = it->second.with_all(0b1);
    const double n = static_cast<double>(p.ops);
    const double frac = static_cast<double>(p.hits) / n;
    p.efficiency = frac / scale;
    p.stderr_ = std::sqrt(std::max(frac, 0.5 / n) * (1.0 - frac) / n) / scale;
    out.push_back(p);
  }
  return out;
}

std::vector<DecayPoint> decay_curve(const sim::TagRecord& rec, const WindowSpec& spec, std::int64_t bin_ps,
                                    double scale) {
  if (rec.log.empty()) throw ValidationError("decay curve needs the memory-operation event log");
  WindowCounter wc(Anchor::memory_op,
                   {{Channel::sig_a, spec.offset(Anchor::memory_op, Channel::sig_a), spec.herald_window}},
                   spec.accidental_window, bin_ps);
  feed(rec, wc);
  return decay_points(wc.binned(), bin_ps, scale);
}

// -------------------------------------------------------------- output

void write_metrics_csv(std::ostream& os, std::span<const MetricRow> rows) {
  os << "metric,value,stderr,n\n";
  char buf[96];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.10g,%.6g,%llu", r.value, r.stderr_, static_cast<unsigned long long>(r.n));
    os << r.metric << ',' << buf << '\n';
  }
}

void write_decay_csv(std::ostream& os, std::span<const DecayPoint> points) {
  os << "t_ns,value,stderr\n";
  char buf[96];
  for (const auto& p : points) {
    if (p.empty) continue;
    std::snprintf(buf, sizeof buf, "%.6f,%.10g,%.6g", p.t_ns, p.efficiency, p.stderr_);
    os << buf << '\n';
  }
}

}  // namespace psync::analysis
