#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace psync::sim {

enum class Channel : std::uint8_t { idler1 = 0, idler2 = 1, sig_a = 2, sig_b = 3 };
constexpr int kChannels = 4;

std::string to_string(Channel c);
Channel parse_channel(const std::string& s);

struct TimeTag {
  Channel channel;
  std::int64_t time;  // ps since run start

  friend bool operator==(const TimeTag&, const TimeTag&) = default;
};

// Structured trace of the trigger electronics. `time` is when the action
// happens; `ref` is the herald tag behind it; `aux` is kind specific.
//   ddg2_trigger: ref = idler-2 tag time, aux = gate opening time
//   ddg1_trigger: ref = idler-1 tag time, aux = idler-2 tag of the gate (-1 in storage mode)
//   pc_store:     ref = idler-1 tag time, aux = idler-2 tag of the gate (-1 in storage mode)
//   pc_retrieve:  ref = herald tag the retrieval is synchronized to (idler-2 in sync
//                 mode, idler-1 in storage mode), aux = time of the matching store pulse
enum class LogKind : std::uint8_t { ddg2_trigger = 0, ddg1_trigger = 1, pc_store = 2, pc_retrieve = 3 };

std::string to_string(LogKind k);

struct LogEntry {
  LogKind kind;
  std::int64_t time;
  std::int64_t ref;
  std::int64_t aux;

  friend bool operator==(const LogEntry&, const LogEntry&) = default;
};

struct RunInfo {
  std::uint64_t seed = 0;
  double requested_duration_s = 0.0;
  double effective_duration_s = 0.0;  // shorter than requested when the event cap hit
  bool truncated = false;
  std::uint64_t events = 0;
  std::array<std::uint64_t, kChannels> channel_counts{};
  std::uint64_t log_entries = 0;
  std::uint64_t photons_generated = 0;  // every photon created (signals, background, memory noise)
  std::uint64_t pc2_blocked = 0;        // idler-1 triggers refused to keep PC-2 pulses apart
};

struct TagRecord {
  std::vector<TimeTag> tags;  // time-sorted
  std::vector<LogEntry> log;  // time-sorted
  RunInfo info;

  std::vector<std::int64_t> times(Channel c) const;
};

}  // namespace psync::sim
