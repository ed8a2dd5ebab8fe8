#pragma once

// Single-pass accumulators that run as engine sinks (or over replayed tag
// files) so long runs never need the full tag record in memory.

#include <array>
#include <cstdint>
#include <deque>
#include <map>
#include <span>
#include <vector>

#include "psync/analysis/histogram.hpp"
#include "psync/sim/engine.hpp"

namespace psync::analysis {

// What a coincidence window is anchored to.
//   idler1, idler2: every tag of that channel
//   idler_pair:     idler-1 / idler-2 pairs with t1 - t2 within the accidental
//                   window around `pair_center`; primary = idler-1 time,
//                   secondary = idler-2 time
//   memory_op:      every logged retrieval pulse; primary = pulse time
enum class Anchor : std::uint8_t { idler1, idler2, idler_pair, memory_op };

struct Window {
  sim::Channel channel;
  std::int64_t offset;  // window start relative to the anchor time
  std::int64_t width;
  bool secondary = false;  // measured from the secondary anchor time (idler pairs)
};

// Occupancy statistics: masks[m] counts anchors whose set of occupied
// windows is exactly m (bit i = window i holds at least one tag).
struct CountResult {
  std::uint64_t anchors = 0;
  std::array<std::uint64_t, 16> masks{};

  // Anchors whose occupied set contains every bit of `bits`.
  std::uint64_t with_all(unsigned bits) const;
  void merge(const CountResult& o);
};

// Buffers tags just long enough to evaluate every anchor once the stream has
// moved past its windows.
class AnchoredSink : public sim::TagSink {
 public:
  AnchoredSink(Anchor anchor, std::int64_t pair_half_window, std::int64_t pair_center = 0);
  void consume(std::span<const sim::TimeTag> tags, std::span<const sim::LogEntry> log, std::int64_t frontier) override;
  void finish(const sim::RunInfo& info) override;
  const sim::RunInfo& info() const { return info_; }

 protected:
  struct AnchorEvent {
    std::int64_t primary;
    std::int64_t secondary;
    std::int64_t storage_time;  // memory ops only
  };
  // Relative reach of the windows: [lo, hi) around the anchor times.
  void set_reach(std::int64_t lo, std::int64_t hi);
  void watch(sim::Channel c) { watched_[static_cast<int>(c)] = true; }
  virtual void evaluate(const AnchorEvent& a) = 0;
  // Sorted tag times of `c` in [lo, hi).
  std::span<const std::int64_t> range(sim::Channel c, std::int64_t lo, std::int64_t hi) const;

 private:
  void drain(std::int64_t frontier, bool final);
  void prune(std::int64_t before);

  Anchor anchor_;
  std::int64_t half_;
  std::int64_t center_;
  std::int64_t lo_ = 0, hi_ = 0;
  std::array<bool, sim::kChannels> watched_{};
  std::array<std::vector<std::int64_t>, sim::kChannels> buf_;
  std::array<std::size_t, sim::kChannels> head_{};
  std::deque<std::int64_t> pending_idler1_;  // idler_pair anchors awaiting their partners
  std::deque<AnchorEvent> pending_;
  std::int64_t frontier_ = 0;
  sim::RunInfo info_;
};

class WindowCounter : public AnchoredSink {
 public:
  // storage_bin > 0 additionally splits memory-op results by storage time.
  WindowCounter(Anchor anchor, std::vector<Window> windows, std::int64_t pair_half_window = 300,
                std::int64_t storage_bin = 0, std::int64_t pair_center = 0);
  const CountResult& result() const { return total_; }
  // Keyed by floor(storage time / storage_bin).
  const std::map<std::int64_t, CountResult>& binned() const { return binned_; }

 private:
  void evaluate(const AnchorEvent& a) override;
  std::vector<Window> windows_;
  std::int64_t storage_bin_;
  CountResult total_;
  std::map<std::int64_t, CountResult> binned_;
};

// Cross-correlation of `target` tags against anchor times.
class HistogramAccumulator : public AnchoredSink {
 public:
  HistogramAccumulator(Anchor anchor, sim::Channel target, const HistGeometry& g);
  const Histogram& histogram() const { return hist_; }

 private:
  void evaluate(const AnchorEvent& a) override;
  sim::Channel target_;
  Histogram hist_;
};

// Singles, log-entry counts and run bookkeeping.
class RunStats : public sim::TagSink {
 public:
  void consume(std::span<const sim::TimeTag> tags, std::span<const sim::LogEntry> log, std::int64_t frontier) override;
  void finish(const sim::RunInfo& info) override;

  std::array<std::uint64_t, sim::kChannels> singles{};
  std::array<std::uint64_t, 4> log_counts{};
  std::int64_t last_time = 0;
  sim::RunInfo info;
  bool finished = false;

  std::uint64_t log_count(sim::LogKind k) const { return log_counts[static_cast<int>(k)]; }
  // Effective duration from the run info, or the last event time for replayed files.
  double duration_s() const;
};

// Replays an in-memory record into `sink` as a single chunk.
void feed(const sim::TagRecord& rec, sim::TagSink& sink);

}  // namespace psync::analysis
