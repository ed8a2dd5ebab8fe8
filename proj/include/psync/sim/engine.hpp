#pragma once

#include <cstdint>
#include <span>

#include "psync/core/params.hpp"
#include "psync/sim/types.hpp"

namespace psync::sim {

// Receives the run output in time order, chunk by chunk. Every tag and log
// entry passed to consume() is earlier than `frontier`, and no later chunk
// contains anything earlier than it.
class TagSink {
 public:
  virtual ~TagSink() = default;
  virtual void consume(std::span<const TimeTag> tags, std::span<const LogEntry> log, std::int64_t frontier) = 0;
  virtual void finish(const RunInfo& info) { (void)info; }
};

// Derived source-model quantities (see docs/model-notes.md).
struct SourceModel {
  double q1 = 0.0;               // signal-1 emission probability per pair
  double q2 = 0.0;
  double co_photon1 = 0.0;       // second-photon probability given a signal photon
  double co_photon2 = 0.0;
  double accidental_g2_1 = 0.0;  // multi-pair contribution to g2 from the pair rate
  double accidental_g2_2 = 0.0;
  double background_cps = 0.0;   // off-resonant photons in the signal-1 path
};

SourceModel derive_source_model(const SystemConfig& config);

// Streams one run into `sink`. Deterministic for fixed (config, seed).
RunInfo run_sim(const SystemConfig& config, std::uint64_t seed, Seconds duration, TagSink& sink);

// Convenience form that keeps everything in memory.
TagRecord run_sim(const SystemConfig& config, std::uint64_t seed, Seconds duration);

}  // namespace psync::sim
