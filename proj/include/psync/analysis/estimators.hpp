#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "psync/analysis/histogram.hpp"
#include "psync/analysis/streaming.hpp"
#include "psync/core/model.hpp"

namespace psync::analysis {

struct WindowSpec {
  std::int64_t herald_window = 3500;
  std::int64_t accidental_window = 300;  // half width of the idler-idler acceptance
  // Window start per (anchor, channel), relative to the anchor time.
  std::map<std::pair<Anchor, sim::Channel>, std::int64_t> offsets;

  bool has(Anchor a, sim::Channel c) const { return offsets.count({a, c}) > 0; }
  std::int64_t offset(Anchor a, sim::Channel c) const;
  void set(Anchor a, sim::Channel c, std::int64_t o) { offsets[{a, c}] = o; }
  void validate() const;

  static WindowSpec from(const AnalysisParams& a);
};

// Pilot histograms of both signal channels against idler-1, idler-2 and
// memory-operation anchors. Idler-anchored axes are shifted by the fiber delay.
class OffsetLocator : public sim::TagSink {
 public:
  explicit OffsetLocator(const AnalysisParams& a);
  void consume(std::span<const sim::TimeTag> tags, std::span<const sim::LogEntry> log, std::int64_t frontier) override;
  void finish(const sim::RunInfo& info) override;

  const Histogram& histogram(Anchor a, sim::Channel c) const;
  // Sets every offset whose pilot histogram has counts; returns how many.
  int apply(WindowSpec& spec) const;

 private:
  struct Slot {
    Anchor anchor;
    sim::Channel channel;
    HistogramAccumulator acc;
  };
  std::vector<Slot> slots_;
};

WindowSpec locate_offsets(const sim::TagRecord& rec, const AnalysisParams& a);

// ------------------------------------------------------------------ g2
struct G2Result {
  Estimate g2;
  std::uint64_t n = 0, na = 0, nb = 0, nab = 0;
};

// Windows 0 = sig_a, 1 = sig_b, both anchored at `anchor`.
std::vector<Window> g2_windows(const WindowSpec& spec, Anchor anchor);
G2Result g2_from_counts(const CountResult& c);
G2Result g2h_estimate(const sim::TagRecord& rec, const WindowSpec& spec, Anchor anchor = Anchor::idler1);

// ------------------------------------------------------ double heralds
// Window bits: 0 = sig_a in W1, 1 = sig_b in W2, 2 = sig_a in W2, 3 = sig_b in W1.
// For idler pairs W1 hangs off idler-1 and W2 off idler-2; for memory
// operations both hang off the retrieval pulse.
std::vector<Window> double_herald_windows(Anchor anchor, std::int64_t o1, std::int64_t o2, std::int64_t width);

struct DoubleHeralds {
  std::uint64_t anchors = 0;
  std::uint64_t direct = 0;  // sig_a in W1 and sig_b in W2
  std::uint64_t either = 0;  // either pairing of the two windows
};
DoubleHeralds double_heralds(const CountResult& c);

enum class RateMode : std::uint8_t { stoc, sync };
std::string to_string(RateMode m);
RateMode parse_rate_mode(const std::string& s);

struct PairRates {
  RateMode mode = RateMode::stoc;
  double duration_s = 0.0;
  std::uint64_t anchors = 0;  // idler pairs or memory operations
  std::uint64_t double_heralds = 0;
  std::uint64_t ddg2 = 0, ddg1 = 0;
  Estimate r_stoc, r_sync, r_trig2, r_sync_trials, downtime;
};

PairRates stoc_rates(const CountResult& c, double duration_s);
PairRates sync_rates(const CountResult& c, const RunStats& stats, const ElectronicsParams& el, double duration_s);
// Downtime fraction from logged trigger counts.
Estimate downtime_from_counts(std::uint64_t ddg2, std::uint64_t ddg1, double duration_s, const ElectronicsParams& el);

// Batch form over an in-memory record; sync mode needs the event log.
PairRates pair_rates(const sim::TagRecord& rec, const WindowSpec& spec, RateMode mode, const ElectronicsParams& el);

// ----------------------------------------------------------------- HOM
struct HomPoint {
  std::int64_t delay_ps = 0;
  std::uint64_t coincidences = 0;
  std::uint64_t anchors = 0;  // normalization (heralding opportunities)
};

struct HomResult {
  Estimate visibility;
  double c0 = 0.0;
  double c_plateau = 0.0;
  std::uint64_t plateau_points = 0;
};

// V = 1 - C(0)/C_plateau, plateau over plateau_min <= |delay| <= plateau_max.
HomResult hom_visibility(std::span<const HomPoint> scan, std::int64_t plateau_min = 3000,
                         std::int64_t plateau_max = 5000);

// --------------------------------------------------------------- decay
struct DecayPoint {
  double t_ns = 0.0;
  double efficiency = 0.0;
  double stderr_ = 0.0;
  std::uint64_t hits = 0;
  std::uint64_t ops = 0;
  bool empty = false;  // no operations landed in this bin
};

// `binned` as produced by a memory-op WindowCounter (window 0 = retrieved
// photon) with `bin_ps` storage-time bins. `scale` removes the heralding
// efficiency and path coupling.
std::vector<DecayPoint> decay_points(const std::map<std::int64_t, CountResult>& binned, std::int64_t bin_ps,
                                     double scale);
std::vector<DecayPoint> decay_curve(const sim::TagRecord& rec, const WindowSpec& spec, std::int64_t bin_ps,
                                    double scale);

// ------------------------------------------------------------- output
struct MetricRow {
  std::string metric;
  double value = 0.0;
  double stderr_ = 0.0;
  std::uint64_t n = 0;
};

void write_metrics_csv(std::ostream& os, std::span<const MetricRow> rows);
void write_decay_csv(std::ostream& os, std::span<const DecayPoint> points);

}  // namespace psync::analysis
