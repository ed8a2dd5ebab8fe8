#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "psync/sim/engine.hpp"
#include "psync/sim/types.hpp"

namespace psync::sim {

// PTAG: "PTAG", u16 version (1), then (u8 channel, u64 time_ps) records, all
// little-endian and time-sorted.
// PLOG: "PLOG", u16 version (1), then (u8 kind, i64 time, i64 ref, i64 aux).
constexpr std::uint16_t kPtagVersion = 1;
constexpr std::uint16_t kPlogVersion = 1;
constexpr std::size_t kPtagHeader = 6;
constexpr std::size_t kPtagRecord = 9;
constexpr std::size_t kPlogRecord = 25;

void write_ptag(std::ostream& out, std::span<const TimeTag> tags);
void write_tags_csv(std::ostream& out, std::span<const TimeTag> tags);
void write_plog(std::ostream& out, std::span<const LogEntry> log);

std::vector<TimeTag> read_ptag(std::istream& in);
std::vector<TimeTag> read_tags_csv(std::istream& in);
std::vector<LogEntry> read_plog(std::istream& in);

// Picks PTAG or CSV from the leading magic bytes.
std::vector<TimeTag> read_tags(const std::filesystem::path& path);
std::vector<LogEntry> read_log(const std::filesystem::path& path);

// Incremental readers for files too large to hold in memory. Each
// next() call returns up to `max` records, validating as it goes.
class PtagReader {
 public:
  explicit PtagReader(const std::filesystem::path& path);
  bool next(std::vector<TimeTag>& out, std::size_t max);
  std::uint64_t offset() const { return offset_; }

 private:
  std::ifstream in_;
  std::uint64_t offset_ = 0;
  std::int64_t last_ = 0;
};

class PlogReader {
 public:
  explicit PlogReader(const std::filesystem::path& path);
  bool next(std::vector<LogEntry>& out, std::size_t max);

 private:
  std::ifstream in_;
  std::uint64_t offset_ = 0;
  std::int64_t last_ = INT64_MIN;
};

// Streams tag (PTAG or CSV) and optional log files into a sink in time order.
RunInfo replay(const std::filesystem::path& tags, const std::optional<std::filesystem::path>& log, TagSink& sink);

enum class TagFormat : std::uint8_t { ptag, csv };
TagFormat parse_tag_format(const std::string& s);

// Sinks writing straight to disk.
class TagFileWriter : public TagSink {
 public:
  TagFileWriter(const std::filesystem::path& path, TagFormat format);
  void consume(std::span<const TimeTag> tags, std::span<const LogEntry> log, std::int64_t frontier) override;
  void finish(const RunInfo& info) override;

 private:
  std::ofstream out_;
  TagFormat format_;
  std::filesystem::path path_;
};

class LogFileWriter : public TagSink {
 public:
  explicit LogFileWriter(const std::filesystem::path& path);
  void consume(std::span<const TimeTag> tags, std::span<const LogEntry> log, std::int64_t frontier) override;
  void finish(const RunInfo& info) override;

 private:
  std::ofstream out_;
  std::filesystem::path path_;
};

struct RunManifest {
  std::string tool = "psync";
  std::string version;
  std::string subcommand;
  std::string config_hash;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> outputs;
  std::string started_utc;
  std::string finished_utc;
  std::optional<RunInfo> run;
  std::string config_text;  // canonical serialization
};

void write_manifest(const std::filesystem::path& path, const RunManifest& m);
RunManifest read_manifest(const std::filesystem::path& path);
std::string utc_now();
const char* tool_version();

}  // namespace psync::sim
