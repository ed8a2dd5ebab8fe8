#pragma once

// Monte-Carlo experiment drivers shared by the CLI and the acceptance harness.
// Every run streams through the analysis sinks; nothing keeps the full tag
// record in memory.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "psync/analysis/estimators.hpp"
#include "psync/core/model.hpp"
#include "psync/fit/fit.hpp"
#include "psync/sim/sinks.hpp"

namespace psync::exp {

// Runs fn(0..n-1) on up to `threads` workers (0 = hardware concurrency).
// The first exception is rethrown after all workers stop.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn);

// Independent seed for sub-run `k` of an experiment.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t k);

struct RunHealth {
  sim::InvariantReport invariants;
  std::uint64_t digest = 0;
  sim::RunInfo info;
  double wall_s = 0.0;
};

// Runs `config` once with the extra sinks attached and collects health data.
RunHealth run_with(const SystemConfig& config, std::uint64_t seed, double duration_s,
                   std::vector<sim::TagSink*> sinks);

// Locates window offsets from a short pilot run of `config`.
analysis::WindowSpec pilot_offsets(const SystemConfig& config, std::uint64_t seed, double duration_s);

SystemConfig with_rate(const SystemConfig& base, double r1_cps);

// ------------------------------------------------------- rate sweep
struct RatesPoint {
  double r1_cps = 0.0;
  analysis::PairRates stoc;
  analysis::PairRates sync;
  RatesReport model;
  analysis::Histogram retrieved;  // memory-op anchored sig_a (memory output)
  analysis::Histogram reference;  // memory-op anchored sig_b (signal-2)
  double overlap_i = 0.0;
  RunHealth sync_health, direct_health;
};

struct RatesOptions {
  double duration_s = 100.0;
  double pilot_s = 2.0;
  bool run_direct = true;
};

RatesPoint run_rates_point(const SystemConfig& base, double r1_cps, std::uint64_t seed, const RatesOptions& opt);

// Temporal overlap of the retrieved and reference envelopes, restricted to a
// span around the reference window.
double envelope_overlap(const analysis::Histogram& retrieved, const analysis::Histogram& reference,
                        std::int64_t window_start, std::int64_t herald_window);

// ------------------------------------------------------------- HOM
enum class HomKind : std::uint8_t { stoc, sync };

struct HomScanOptions {
  std::vector<std::int64_t> delays_ps{-5000, -4000, -3000, 0, 3000, 4000, 5000};
  double duration_s = 100.0;
  double pilot_s = 2.0;
  std::int64_t plateau_min_ps = 3000;
  std::int64_t plateau_max_ps = 5000;
  std::int64_t pair_half_window_ps = 0;  // stoc t1 - t2 bin half width; 0 = half the histogram bin
  unsigned threads = 0;
};

struct HomScan {
  HomKind kind = HomKind::stoc;
  double r1_cps = 0.0;
  std::vector<analysis::HomPoint> points;
  analysis::HomResult result;
  std::vector<RunHealth> health;
};

// stoc: one run; each delay selects idler pairs with t1 - t2 near that delay.
// sync: one run per delay with the retrieval trim shifted; the signal-2
// window follows the shift.
HomScan run_hom_scan(const SystemConfig& base, HomKind kind, double r1_cps, std::uint64_t seed,
                     const HomScanOptions& opt);

struct MuCalibration {
  double mu = 0.0;
  double visibility_at_unit_mu = 0.0;
  double visibility_stderr = 0.0;
};

// Coalescence probability is linear in mu, so one scan at mu = 1 fixes the
// mu that yields `target` stochastic visibility.
MuCalibration calibrate_mu(const SystemConfig& base, double r1_cps, double target, std::uint64_t seed,
                           const HomScanOptions& opt);

// -------------------------------------------------------------- g2
struct G2Run {
  analysis::G2Result result;
  RunHealth health;
};

// Pre-memory: direct mode, beamsplitter after signal-1, idler-1 anchors.
G2Run run_g2_source(const SystemConfig& base, double r1_cps, std::uint64_t seed, double duration_s,
                    double pilot_s = 2.0);
// After the memory: storage mode with a fixed storage time, retrieval anchors.
G2Run run_g2_memory(const SystemConfig& base, double r1_cps, double storage_ns, std::uint64_t seed,
                    double duration_s, double pilot_s = 2.0);

// ------------------------------------------------------------ decay
struct DecayRun {
  std::vector<analysis::DecayPoint> points;
  fit::FitResult fit;
  RunHealth health;
};

// Storage mode with uniformly random storage times in [0, max_ns].
DecayRun run_decay(const SystemConfig& base, double r1_cps, double max_ns, std::int64_t bin_ps, std::uint64_t seed,
                   double duration_s, double pilot_s = 2.0);

// ------------------------------------------------------- references
struct ReferenceValue {
  std::string key;
  double value = 0.0;
  double error = 0.0;  // 0 when no uncertainty was quoted
  std::string source;
};

constexpr const char* kReferenceTableVersion = "1";
const std::vector<ReferenceValue>& reference_values();
const ReferenceValue& reference(const std::string& key);

}  // namespace psync::exp
