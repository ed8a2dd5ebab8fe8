#include "psync/exp/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <mutex>
#include <thread>

namespace psync::exp {

using analysis::Anchor;
using sim::Channel;

void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex m;
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(m);
          if (!error) error = std::current_exception();
          next = n;
          return;
        }
      }
    });
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t k) {
  // splitmix64 finalizer over the pair
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (k + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

RunHealth run_with(const SystemConfig& config, std::uint64_t seed, double duration_s,
                   std::vector<sim::TagSink*> sinks) {
  sim::InvariantChecker inv(config.electronics, config.sim);
  sim::DigestSink digest;
  sinks.push_back(&inv);
  sinks.push_back(&digest);
  sim::TeeSink tee(std::move(sinks));
  const auto t0 = std::chrono::steady_clock::now();
  RunHealth h;
  h.info = sim::run_sim(config, seed, Seconds(duration_s), tee);
  h.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  h.invariants = inv.report();
  h.digest = digest.digest();
  return h;
}

analysis::WindowSpec pilot_offsets(const SystemConfig& config, std::uint64_t seed, double duration_s) {
  analysis::OffsetLocator loc(config.analysis);
  sim::run_sim(config, seed, Seconds(duration_s), loc);
  auto spec = analysis::WindowSpec::from(config.analysis);
  loc.apply(spec);
  return spec;
}

SystemConfig with_rate(const SystemConfig& base, double r1_cps) {
  SystemConfig c = base;
  if (base.source.r2_cps && base.source.r1_cps > 0.0)
    c.source.r2_cps = *base.source.r2_cps * r1_cps / base.source.r1_cps;
  c.source.r1_cps = r1_cps;
  c.validate();
  return c;
}

// ------------------------------------------------------------- rates

double envelope_overlap(const analysis::Histogram& retrieved, const analysis::Histogram& reference,
                        std::int64_t window_start, std::int64_t herald_window) {
  const std::int64_t bw = reference.bin_width;
  const auto align = [&](std::int64_t t) { return reference.t_min + (t - reference.t_min) / bw * bw; };
  const std::int64_t lo = align(std::max(reference.t_min, window_start - herald_window));
  const std::int64_t hi = align(std::min(reference.t_max, window_start + 2 * herald_window));
  return analysis::temporal_overlap(analysis::crop(retrieved, lo, hi), analysis::crop(reference, lo, hi));
}

RatesPoint run_rates_point(const SystemConfig& base, double r1_cps, std::uint64_t seed, const RatesOptions& opt) {
  RatesPoint p;
  p.r1_cps = r1_cps;
  SystemConfig cs = with_rate(base, r1_cps);
  cs.sim.mode = SimMode::sync;
  cs.sim.routing = Routing::rates;
  p.model = full_chain(cs);

  const auto spec = pilot_offsets(cs, derive_seed(seed, 100), opt.pilot_s);
  const std::int64_t oa = spec.offset(Anchor::memory_op, Channel::sig_a);
  const std::int64_t ob = spec.offset(Anchor::memory_op, Channel::sig_b);
  analysis::WindowCounter wc(Anchor::memory_op,
                             analysis::double_herald_windows(Anchor::memory_op, oa, ob, spec.herald_window),
                             spec.accidental_window);
  analysis::RunStats stats;
  const auto geo = analysis::HistGeometry::from(cs.analysis, 0);
  analysis::HistogramAccumulator h_ret(Anchor::memory_op, Channel::sig_a, geo);
  analysis::HistogramAccumulator h_ref(Anchor::memory_op, Channel::sig_b, geo);
  p.sync_health = run_with(cs, derive_seed(seed, 1), opt.duration_s, {&wc, &stats, &h_ret, &h_ref});
  p.sync = analysis::sync_rates(wc.result(), stats, cs.electronics, stats.duration_s());
  p.retrieved = h_ret.histogram();
  p.reference = h_ref.histogram();
  if (p.retrieved.total_pairs > 0 && p.reference.total_pairs > 0)
    p.overlap_i = envelope_overlap(p.retrieved, p.reference, ob, spec.herald_window);

  if (opt.run_direct) {
    SystemConfig cd = cs;
    cd.sim.mode = SimMode::direct;
    const auto dspec = pilot_offsets(cd, derive_seed(seed, 101), opt.pilot_s);
    analysis::WindowCounter dc(
        Anchor::idler_pair,
        analysis::double_herald_windows(Anchor::idler_pair, dspec.offset(Anchor::idler1, Channel::sig_a),
                                        dspec.offset(Anchor::idler2, Channel::sig_b), dspec.herald_window),
        dspec.accidental_window);
    analysis::RunStats dstats;
    p.direct_health = run_with(cd, derive_seed(seed, 2), opt.duration_s, {&dc, &dstats});
    p.stoc = analysis::stoc_rates(dc.result(), dstats.duration_s());
  }
  return p;
}

// --------------------------------------------------------------- HOM

HomScan run_hom_scan(const SystemConfig& base, HomKind kind, double r1_cps, std::uint64_t seed,
                     const HomScanOptions& opt) {
  HomScan scan;
  scan.kind = kind;
  scan.r1_cps = r1_cps;
  SystemConfig c = with_rate(base, r1_cps);
  c.sim.mode = kind == HomKind::stoc ? SimMode::direct : SimMode::sync;
  c.sim.path1_delay = Picos{0};
  c.electronics.retrieval_trim = Picos{0};

  // Windows are located once with the beamsplitter out, then shifted with the delay.
  SystemConfig pilot = c;
  pilot.sim.routing = Routing::rates;
  const auto spec = pilot_offsets(pilot, derive_seed(seed, 200), opt.pilot_s);
  const Anchor anchor = kind == HomKind::stoc ? Anchor::idler_pair : Anchor::memory_op;
  const std::int64_t o1 = kind == HomKind::stoc ? spec.offset(Anchor::idler1, Channel::sig_a)
                                                : spec.offset(Anchor::memory_op, Channel::sig_a);
  const std::int64_t o2 = kind == HomKind::stoc ? spec.offset(Anchor::idler2, Channel::sig_b)
                                                : spec.offset(Anchor::memory_op, Channel::sig_b);

  scan.points.resize(opt.delays_ps.size());
  if (kind == HomKind::stoc) {
    // One histogram bin of t1 - t2 per delay point.
    const std::int64_t half = opt.pair_half_window_ps > 0 ? opt.pair_half_window_ps : c.analysis.bin_width.count() / 2;
    std::vector<analysis::WindowCounter> counters;
    counters.reserve(opt.delays_ps.size());
    for (const std::int64_t d : opt.delays_ps)
      counters.emplace_back(anchor, analysis::double_herald_windows(anchor, o1, o2, spec.herald_window), half, 0, d);
    std::vector<sim::TagSink*> sinks;
    for (auto& wc : counters) sinks.push_back(&wc);
    SystemConfig ci = c;
    ci.sim.routing = Routing::hom;
    scan.health.push_back(run_with(ci, derive_seed(seed, 10), opt.duration_s, sinks));
    for (std::size_t i = 0; i < counters.size(); ++i) {
      const auto dh = analysis::double_heralds(counters[i].result());
      scan.points[i] = {opt.delays_ps[i], dh.either, dh.anchors};
    }
  } else {
    scan.health.resize(opt.delays_ps.size());
    parallel_for(opt.delays_ps.size(), opt.threads, [&](std::size_t i) {
      const std::int64_t d = opt.delays_ps[i];
      SystemConfig ci = c;
      ci.sim.routing = Routing::hom;
      // A later retrieval leaves the signal-2 photon earlier relative to the pulse.
      ci.electronics.retrieval_trim = Picos{d};
      ci.validate();
      analysis::WindowCounter wc(anchor, analysis::double_herald_windows(anchor, o1, o2 - d, spec.herald_window),
                                 spec.accidental_window);
      scan.health[i] = run_with(ci, derive_seed(seed, 10 + i), opt.duration_s, {&wc});
      const auto dh = analysis::double_heralds(wc.result());
      scan.points[i] = {d, dh.either, dh.anchors};
    });
  }
  scan.result = analysis::hom_visibility(scan.points, opt.plateau_min_ps, opt.plateau_max_ps);
  return scan;
}

MuCalibration calibrate_mu(const SystemConfig& base, double r1_cps, double target, std::uint64_t seed,
                           const HomScanOptions& opt) {
  if (!(target > 0.0 && target <= 1.0)) throw ValidationError("target visibility must be in (0, 1]");
  SystemConfig c = base;
  c.hom.mu = 1.0;
  const auto scan = run_hom_scan(c, HomKind::stoc, r1_cps, seed, opt);
  MuCalibration m;
  m.visibility_at_unit_mu = scan.result.visibility.value;
  m.visibility_stderr = scan.result.visibility.stderr_;
  if (!(m.visibility_at_unit_mu > 0.0)) throw ValidationError("no interference at mu = 1; cannot calibrate");
  m.mu = target / m.visibility_at_unit_mu;
  if (m.mu > 1.0)
    throw ValidationError("target visibility " + std::to_string(target) + " exceeds the maximum " +
                          std::to_string(m.visibility_at_unit_mu) + " reachable with these envelopes");
  return m;
}

// ---------------------------------------------------------------- g2

G2Run run_g2_source(const SystemConfig& base, double r1_cps, std::uint64_t seed, double duration_s, double pilot_s) {
  SystemConfig c = with_rate(base, r1_cps);
  c.sim.mode = SimMode::direct;
  c.sim.routing = Routing::hbt;
  const auto spec = pilot_offsets(c, derive_seed(seed, 300), pilot_s);
  analysis::WindowCounter wc(Anchor::idler1, analysis::g2_windows(spec, Anchor::idler1), spec.accidental_window);
  G2Run r;
  r.health = run_with(c, derive_seed(seed, 3), duration_s, {&wc});
  r.result = analysis::g2_from_counts(wc.result());
  return r;
}

G2Run run_g2_memory(const SystemConfig& base, double r1_cps, double storage_ns, std::uint64_t seed,
                    double duration_s, double pilot_s) {
  SystemConfig c = with_rate(base, r1_cps);
  c.sim.mode = SimMode::storage;
  c.sim.routing = Routing::hbt;
  c.sim.storage_time = c.sim.storage_time_max = ns_to_picos(storage_ns);
  const auto spec = pilot_offsets(c, derive_seed(seed, 301), pilot_s);
  analysis::WindowCounter wc(Anchor::memory_op, analysis::g2_windows(spec, Anchor::memory_op),
                             spec.accidental_window);
  G2Run r;
  r.health = run_with(c, derive_seed(seed, 4), duration_s, {&wc});
  r.result = analysis::g2_from_counts(wc.result());
  return r;
}

// -------------------------------------------------------------- decay

DecayRun run_decay(const SystemConfig& base, double r1_cps, double max_ns, std::int64_t bin_ps, std::uint64_t seed,
                   double duration_s, double pilot_s) {
  SystemConfig c = with_rate(base, r1_cps);
  c.sim.mode = SimMode::storage;
  c.sim.routing = Routing::rates;
  c.sim.storage_time = Picos{0};
  c.sim.storage_time_max = ns_to_picos(max_ns);
  const auto spec = pilot_offsets(c, derive_seed(seed, 400), pilot_s);
  analysis::WindowCounter wc(Anchor::memory_op,
                             {{Channel::sig_a, spec.offset(Anchor::memory_op, Channel::sig_a), spec.herald_window}},
                             spec.accidental_window, bin_ps);
  DecayRun r;
  r.health = run_with(c, derive_seed(seed, 5), duration_s, {&wc});
  const double scale = c.source.eta_h1 * c.detector.memory_route_factor();
  for (const auto& p : analysis::decay_points(wc.binned(), bin_ps, scale))
    if ((p.t_ns + 0.5 * static_cast<double>(bin_ps) * 1e-3) <= max_ns + 1e-9) r.points.push_back(p);
  std::vector<fit::DataPoint> data;
  for (const auto& p : r.points)
    if (!p.empty && p.stderr_ > 0.0) data.push_back({p.t_ns, p.efficiency, p.stderr_});
  if (data.size() >= 4) r.fit = fit::fit_decay(data);
  return r;
}

// --------------------------------------------------------- references

const std::vector<ReferenceValue>& reference_values() {
  static const std::vector<ReferenceValue> table = {
      {"zeta_50k", 28.6, 1.8, "measured rate enhancement at r1 = 50 kcps"},
      {"r_sync_50k", 44.0, 0.0, "measured synchronized rate at r1 = 50 kcps"},
      {"r_stoc_440k", 115.0, 0.0, "measured stochastic rate at r1 = 440 kcps"},
      {"r_sync_440k", 1200.0, 10.0, "measured synchronized rate at r1 = 440 kcps"},
      {"g2_source", 0.0126, 0.0002, "measured signal-1 heralded autocorrelation"},
      {"g2_h_20ns", 0.023, 0.001, "measured heralded autocorrelation after 20 ns storage"},
      {"eta0", 0.262, 0.0, "measured end-to-end memory efficiency at zero storage time"},
      {"tau_s_ns", 114.0, 2.0, "measured 1/e storage time"},
      {"eta_12ns", 0.243, 0.008, "measured memory efficiency at 12 ns"},
      {"eta_bar", 0.196, 0.0, "reported mean efficiency over the t* window"},
      {"snr", 3100.0, 400.0, "reported signal-to-noise ratio"},
      {"v_stoc", 0.88, 0.02, "measured stochastic HOM visibility"},
      {"v_sync", 0.76, 0.02, "measured synchronized HOM visibility"},
      {"overlap_i", 0.91, 0.0, "reported retrieved/reference temporal overlap"},
      {"t_retrieval_factor", 0.1, 0.0, "reported fitted retrieval leak factor"},
  };
  return table;
}

const ReferenceValue& reference(const std::string& key) {
  for (const auto& r : reference_values())
    if (r.key == key) return r;
  throw ValidationError("unknown reference value '" + key + "'");
}

}  // namespace psync::exp
