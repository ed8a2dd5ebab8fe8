#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "psync/core/params.hpp"
#include "psync/sim/engine.hpp"

namespace psync::sim {

// Keeps the whole run in memory.
class RecordSink : public TagSink {
 public:
  void consume(std::span<const TimeTag> tags, std::span<const LogEntry> log, std::int64_t frontier) override;
  void finish(const RunInfo& info) override { rec_.info = info; }
  TagRecord take() { return std::move(rec_); }
  const TagRecord& record() const { return rec_; }

 private:
  TagRecord rec_;
};

class TeeSink : public TagSink {
 public:
  explicit TeeSink(std::vector<TagSink*> sinks) : sinks_(std::move(sinks)) {}
  void consume(std::span<const TimeTag> tags, std::span<const LogEntry> log, std::int64_t frontier) override;
  void finish(const RunInfo& info) override;

 private:
  std::vector<TagSink*> sinks_;
};

// FNV-1a 64 over the little-endian record encoding of tags and log entries.
class DigestSink : public TagSink {
 public:
  void consume(std::span<const TimeTag> tags, std::span<const LogEntry> log, std::int64_t frontier) override;
  std::uint64_t tag_digest() const { return tags_; }
  std::uint64_t log_digest() const { return log_; }
  std::uint64_t digest() const { return tags_ ^ (log_ * 0x9e3779b97f4a7c15ULL); }

 private:
  std::uint64_t tags_ = 0xcbf29ce484222325ULL;
  std::uint64_t log_ = 0xcbf29ce484222325ULL;
};

// Checks ordering and dead-time invariants of the output stream.
struct InvariantReport {
  std::uint64_t tags = 0;
  std::uint64_t log_entries = 0;
  std::uint64_t order_violations = 0;       // tags, log entries or chunks out of time order
  std::uint64_t ddg1_violations = 0;        // accepted DDG-1 triggers closer than tau_d1
  std::uint64_t ddg2_violations = 0;        // accepted DDG-2 triggers closer than tau_d2
  std::uint64_t pc1_violations = 0;         // store pulses closer than pc_min_spacing
  std::uint64_t pc2_violations = 0;         // retrieve pulses closer than pc_min_spacing
  std::uint64_t sequence_violations = 0;    // store/retrieve not strictly alternating
  std::uint64_t causality_violations = 0;   // log entry earlier than its herald
  std::int64_t min_store_spacing = -1;
  std::int64_t min_retrieve_spacing = -1;

  std::uint64_t violations() const {
    return order_violations + ddg1_violations + ddg2_violations + pc1_violations + pc2_violations +
           sequence_violations + causality_violations;
  }
  std::string summary() const;
};

class InvariantChecker : public TagSink {
 public:
  InvariantChecker(const ElectronicsParams& el, const SimParams& sim);
  void consume(std::span<const TimeTag> tags, std::span<const LogEntry> log, std::int64_t frontier) override;
  const InvariantReport& report() const { return r_; }

 private:
  ElectronicsParams el_;
  InvariantReport r_;
  std::int64_t last_tag_ = INT64_MIN;
  std::int64_t last_log_ = INT64_MIN;
  std::int64_t last_frontier_ = INT64_MIN;
  std::int64_t last_ddg1_ = INT64_MIN, last_ddg2_ = INT64_MIN, last_store_ = INT64_MIN, last_retrieve_ = INT64_MIN;
  bool store_open_ = false;
  std::int64_t early_store_ = INT64_MIN;  // store expected after an early retrieval
};

}  // namespace psync::sim
