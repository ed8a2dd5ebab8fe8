#include "psync/sim/tag_io.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cstring>
#include <ctime>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include <json.hpp>

namespace psync::sim {

namespace {

void put_le(char* p, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) p[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
}

std::uint64_t get_le(const char* p, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

void write_header(std::ostream& out, const char* magic, std::uint16_t version) {
  char h[kPtagHeader];
  std::memcpy(h, magic, 4);
  put_le(h + 4, version, 2);
  out.write(h, sizeof h);
}

void read_header(std::istream& in, const char* magic, std::uint16_t version, const char* what) {
  char h[kPtagHeader];
  in.read(h, sizeof h);
  if (in.gcount() != static_cast<std::streamsize>(sizeof h)) throw FormatError(std::string(what) + ": truncated header", static_cast<std::uint64_t>(in.gcount()));
  if (std::memcmp(h, magic, 4) != 0) throw FormatError(std::string(what) + ": bad magic", 0);
  const auto v = static_cast<std::uint16_t>(get_le(h + 4, 2));
  if (v != version) throw FormatError(std::string(what) + ": unsupported version " + std::to_string(v), 4);
}

TimeTag decode_tag(const char* r, std::uint64_t offset, std::int64_t& last) {
  const auto ch = static_cast<unsigned char>(r[0]);
  if (ch > 3) throw FormatError("PTAG: invalid channel " + std::to_string(ch), offset);
  const std::uint64_t t = get_le(r + 1, 8);
  if (t > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max()))
    throw FormatError("PTAG: time out of range", offset + 1);
  const auto ti = static_cast<std::int64_t>(t);
  if (ti < last) throw FormatError("PTAG: records not time-sorted", offset);
  last = ti;
  return {static_cast<Channel>(ch), ti};
}

LogEntry decode_log(const char* r, std::uint64_t offset, std::int64_t& last) {
  const auto k = static_cast<unsigned char>(r[0]);
  if (k > 3) throw FormatError("PLOG: invalid entry kind " + std::to_string(k), offset);
  LogEntry e{static_cast<LogKind>(k), static_cast<std::int64_t>(get_le(r + 1, 8)),
             static_cast<std::int64_t>(get_le(r + 9, 8)), static_cast<std::int64_t>(get_le(r + 17, 8))};
  if (e.time < last) throw FormatError("PLOG: entries not time-sorted", offset);
  last = e.time;
  return e;
}

void write_tag_records(std::ostream& out, std::span<const TimeTag> tags) {
  std::vector<char> buf(tags.size() * kPtagRecord);
  char* p = buf.data();
  for (const auto& t : tags) {
    p[0] = static_cast<char>(t.channel);
    put_le(p + 1, static_cast<std::uint64_t>(t.time), 8);
    p += kPtagRecord;
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

void write_log_records(std::ostream& out, std::span<const LogEntry> log) {
  std::vector<char> buf(log.size() * kPlogRecord);
  char* p = buf.data();
  for (const auto& e : log) {
    p[0] = static_cast<char>(e.kind);
    put_le(p + 1, static_cast<std::uint64_t>(e.time), 8);
    put_le(p + 9, static_cast<std::uint64_t>(e.ref), 8);
    put_le(p + 17, static_cast<std::uint64_t>(e.aux), 8);
    p += kPlogRecord;
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

void write_csv_records(std::ostream& out, std::span<const TimeTag> tags) {
  std::string s;
  s.reserve(tags.size() * 20);
  for (const auto& t : tags) {
    s += to_string(t.channel);
    s += ',';
    s += std::to_string(t.time);
    s += '\n';
  }
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

}  // namespace

void write_ptag(std::ostream& out, std::span<const TimeTag> tags) {
  write_header(out, "PTAG", kPtagVersion);
  write_tag_records(out, tags);
}

void write_plog(std::ostream& out, std::span<const LogEntry> log) {
  write_header(out, "PLOG", kPlogVersion);
  write_log_records(out, log);
}

void write_tags_csv(std::ostream& out, std::span<const TimeTag> tags) {
  out << "channel,time_ps\n";
  write_csv_records(out, tags);
}

std::vector<TimeTag> read_ptag(std::istream& in) {
  read_header(in, "PTAG", kPtagVersion, "PTAG");
  std::vector<TimeTag> out;
  std::uint64_t offset = kPtagHeader;
  std::int64_t last = 0;
  char r[kPtagRecord];
  while (true) {
    in.read(r, kPtagRecord);
    const auto got = in.gcount();
    if (got == 0) break;
    if (got != static_cast<std::streamsize>(kPtagRecord)) throw FormatError("PTAG: truncated record", offset);
    out.push_back(decode_tag(r, offset, last));
    offset += kPtagRecord;
  }
  return out;
}

std::vector<LogEntry> read_plog(std::istream& in) {
  read_header(in, "PLOG", kPlogVersion, "PLOG");
  std::vector<LogEntry> out;
  std::uint64_t offset = kPtagHeader;
  std::int64_t last = INT64_MIN;
  char r[kPlogRecord];
  while (true) {
    in.read(r, kPlogRecord);
    const auto got = in.gcount();
    if (got == 0) break;
    if (got != static_cast<std::streamsize>(kPlogRecord)) throw FormatError("PLOG: truncated record", offset);
    out.push_back(decode_log(r, offset, last));
    offset += kPlogRecord;
  }
  return out;
}

std::vector<TimeTag> read_tags_csv(std::istream& in) {
  std::vector<TimeTag> out;
  std::string line;
  std::uint64_t offset = 0;
  bool first = true;
  std::int64_t last = 0;
  while (std::getline(in, line)) {
    const std::uint64_t here = offset;
    offset += line.size() + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (first) {
      first = false;
      if (line == "channel,time_ps") continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw FormatError("tag CSV: expected channel,time_ps", here);
    Channel ch;
    try {
      ch = parse_channel(line.substr(0, comma));
    } catch (const ValidationError&) {
      throw FormatError("tag CSV: unknown channel", here);
    }
    const std::string ts = line.substr(comma + 1);
    std::int64_t t = 0;
    try {
      std::size_t used = 0;
      t = std::stoll(ts, &used);
      if (used != ts.size()) throw std::invalid_argument("trailing");
    } catch (const std::logic_error&) {
      throw FormatError("tag CSV: malformed time", here + comma + 1);
    }
    if (t < 0) throw FormatError("tag CSV: negative time", here + comma + 1);
    if (t < last) throw FormatError("tag CSV: rows not time-sorted", here);
    last = t;
    out.push_back({ch, t});
  }
  return out;
}

std::vector<TimeTag> read_tags(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  char m[4] = {};
  in.read(m, 4);
  const bool ptag = in.gcount() == 4 && std::memcmp(m, "PTAG", 4) == 0;
  in.clear();
  in.seekg(0);
  return ptag ? read_ptag(in) : read_tags_csv(in);
}

std::vector<LogEntry> read_log(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  return read_plog(in);
}

PtagReader::PtagReader(const std::filesystem::path& path) : in_(path, std::ios::binary) {
  if (!in_) throw ValidationError("cannot open " + path.string());
  read_header(in_, "PTAG", kPtagVersion, "PTAG");
  offset_ = kPtagHeader;
}

bool PtagReader::next(std::vector<TimeTag>& out, std::size_t max) {
  out.clear();
  std::vector<char> buf(max * kPtagRecord);
  in_.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  const auto got = static_cast<std::size_t>(in_.gcount());
  if (got % kPtagRecord != 0) throw FormatError("PTAG: truncated record", offset_ + got - got % kPtagRecord);
  for (std::size_t i = 0; i < got; i += kPtagRecord) {
    out.push_back(decode_tag(buf.data() + i, offset_, last_));
    offset_ += kPtagRecord;
  }
  return !out.empty();
}

PlogReader::PlogReader(const std::filesystem::path& path) : in_(path, std::ios::binary) {
  if (!in_) throw ValidationError("cannot open " + path.string());
  read_header(in_, "PLOG", kPlogVersion, "PLOG");
  offset_ = kPtagHeader;
}

bool PlogReader::next(std::vector<LogEntry>& out, std::size_t max) {
  out.clear();
  std::vector<char> buf(max * kPlogRecord);
  in_.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  const auto got = static_cast<std::size_t>(in_.gcount());
  if (got % kPlogRecord != 0) throw FormatError("PLOG: truncated record", offset_ + got - got % kPlogRecord);
  for (std::size_t i = 0; i < got; i += kPlogRecord) {
    out.push_back(decode_log(buf.data() + i, offset_, last_));
    offset_ += kPlogRecord;
  }
  return !out.empty();
}

RunInfo replay(const std::filesystem::path& tag_path, const std::optional<std::filesystem::path>& log_path,
               TagSink& sink) {
  RunInfo info;
  std::vector<TimeTag> tags;
  bool binary = false;
  {
    std::ifstream probe(tag_path, std::ios::binary);
    if (!probe) throw ValidationError("cannot open " + tag_path.string());
    char m[4] = {};
    probe.read(m, 4);
    binary = probe.gcount() == 4 && std::memcmp(m, "PTAG", 4) == 0;
  }
  if (!binary) tags = read_tags(tag_path);  // CSV: whole file
  std::optional<PtagReader> reader;
  if (binary) reader.emplace(tag_path);
  std::optional<PlogReader> log_reader;
  if (log_path) log_reader.emplace(*log_path);

  std::vector<LogEntry> log_pending, log_chunk;
  bool log_done = !log_reader;
  std::vector<TimeTag> chunk;
  std::size_t csv_pos = 0;
  std::int64_t last_time = 0;
  const std::size_t kChunk = 1 << 16;
  const auto pull_log_until = [&](std::int64_t limit, std::vector<LogEntry>& dst) {
    dst.clear();
    while (true) {
      std::size_t i = 0;
      while (i < log_pending.size() && log_pending[i].time < limit) dst.push_back(log_pending[i++]);
      log_pending.erase(log_pending.begin(), log_pending.begin() + static_cast<std::ptrdiff_t>(i));
      if (!log_pending.empty() || log_done) return;
      if (!log_reader->next(log_pending, kChunk)) log_done = true;
    }
  };
  std::vector<TimeTag> lookahead;
  bool tags_done = false;
  const auto fetch = [&](std::vector<TimeTag>& dst) {
    dst.clear();
    if (reader) return reader->next(dst, kChunk);
    const std::size_t n = std::min(kChunk, tags.size() - csv_pos);
    dst.assign(tags.begin() + static_cast<std::ptrdiff_t>(csv_pos),
               tags.begin() + static_cast<std::ptrdiff_t>(csv_pos + n));
    csv_pos += n;
    return n > 0;
  };
  tags_done = !fetch(lookahead);
  std::vector<LogEntry> log_out;
  while (!tags_done) {
    chunk.swap(lookahead);
    tags_done = !fetch(lookahead);
    // Everything earlier than the first tag of the next chunk is complete.
    std::int64_t frontier = tags_done ? std::numeric_limits<std::int64_t>::max() / 2 : lookahead.front().time;
    std::size_t keep = chunk.size();
    if (!tags_done) {
      // Tags equal to the frontier go with the next chunk.
      while (keep > 0 && chunk[keep - 1].time >= frontier) --keep;
      lookahead.insert(lookahead.begin(), chunk.begin() + static_cast<std::ptrdiff_t>(keep), chunk.end());
      chunk.resize(keep);
    }
    pull_log_until(frontier, log_out);
    for (const auto& t : chunk) ++info.channel_counts[static_cast<int>(t.channel)];
    info.log_entries += log_out.size();
    if (!chunk.empty()) last_time = chunk.back().time;
    sink.consume(chunk, log_out, frontier);
  }
  pull_log_until(std::numeric_limits<std::int64_t>::max(), log_out);
  if (!log_out.empty()) {
    info.log_entries += log_out.size();
    sink.consume({}, log_out, std::numeric_limits<std::int64_t>::max() / 2);
  }
  info.effective_duration_s = static_cast<double>(last_time) * 1e-12;
  info.requested_duration_s = info.effective_duration_s;
  sink.finish(info);
  return info;
}

TagFormat parse_tag_format(const std::string& s) {
  if (s == "ptag") return TagFormat::ptag;
  if (s == "csv") return TagFormat::csv;
  throw ValidationError("unknown tag format '" + s + "' (expected csv or ptag)");
}

TagFileWriter::TagFileWriter(const std::filesystem::path& path, TagFormat format)
    : out_(path, std::ios::binary | std::ios::trunc), format_(format), path_(path) {
  if (!out_) throw std::runtime_error("cannot write " + path.string());
  if (format_ == TagFormat::ptag)
    write_header(out_, "PTAG", kPtagVersion);
  else
    out_ << "channel,time_ps\n";
}

void TagFileWriter::consume(std::span<const TimeTag> tags, std::span<const LogEntry>, std::int64_t) {
  if (format_ == TagFormat::ptag)
    write_tag_records(out_, tags);
  else
    write_csv_records(out_, tags);
  if (!out_) throw std::runtime_error("write failed: " + path_.string());
}

void TagFileWriter::finish(const RunInfo&) {
  out_.flush();
  if (!out_) throw std::runtime_error("write failed: " + path_.string());
}

LogFileWriter::LogFileWriter(const std::filesystem::path& path)
    : out_(path, std::ios::binary | std::ios::trunc), path_(path) {
  if (!out_) throw std::runtime_error("cannot write " + path.string());
  write_header(out_, "PLOG", kPlogVersion);
}

void LogFileWriter::consume(std::span<const TimeTag>, std::span<const LogEntry> log, std::int64_t) {
  write_log_records(out_, log);
  if (!out_) throw std::runtime_error("write failed: " + path_.string());
}

void LogFileWriter::finish(const RunInfo&) {
  out_.flush();
  if (!out_) throw std::runtime_error("write failed: " + path_.string());
}

const char* tool_version() { return "1.0.0"; }

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_manifest(const std::filesystem::path& path, const RunManifest& m) {
  nlohmann::ordered_json j;
  j["tool"] = m.tool;
  j["version"] = m.version;
  j["subcommand"] = m.subcommand;
  j["config_hash"] = m.config_hash;
  j["seeds"] = m.seeds;
  j["outputs"] = m.outputs;
  j["started_utc"] = m.started_utc;
  j["finished_utc"] = m.finished_utc;
  if (m.run) {
    const RunInfo& r = *m.run;
    j["run"] = {{"seed", r.seed},
                {"requested_duration_s", r.requested_duration_s},
                {"effective_duration_s", r.effective_duration_s},
                {"truncated", r.truncated},
                {"events", r.events},
                {"log_entries", r.log_entries},
                {"photons_generated", r.photons_generated},
                {"pc2_blocked", r.pc2_blocked},
                {"counts",
                 {{"idler1", r.channel_counts[0]},
                  {"idler2", r.channel_counts[1]},
                  {"sig_a", r.channel_counts[2]},
                  {"sig_b", r.channel_counts[3]}}}};
  }
  j["config"] = m.config_text;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

RunManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("manifest: ") + e.what(), e.byte);
  }
  RunManifest m;
  m.tool = j.value("tool", "");
  m.version = j.value("version", "");
  m.subcommand = j.value("subcommand", "");
  m.config_hash = j.value("config_hash", "");
  m.seeds = j.value("seeds", std::vector<std::uint64_t>{});
  m.outputs = j.value("outputs", std::vector<std::string>{});
  m.started_utc = j.value("started_utc", "");
  m.finished_utc = j.value("finished_utc", "");
  m.config_text = j.value("config", "");
  if (j.contains("run")) {
    const auto& r = j["run"];
    RunInfo info;
    info.seed = r.value("seed", std::uint64_t{0});
    info.requested_duration_s = r.value("requested_duration_s", 0.0);
    info.effective_duration_s = r.value("effective_duration_s", 0.0);
    info.truncated = r.value("truncated", false);
    info.events = r.value("events", std::uint64_t{0});
    info.log_entries = r.value("log_entries", std::uint64_t{0});
    info.photons_generated = r.value("photons_generated", std::uint64_t{0});
    info.pc2_blocked = r.value("pc2_blocked", std::uint64_t{0});
    const auto& c = r["counts"];
    info.channel_counts = {c.value("idler1", std::uint64_t{0}), c.value("idler2", std::uint64_t{0}),
                           c.value("sig_a", std::uint64_t{0}), c.value("sig_b", std::uint64_t{0})};
    m.run = info;
  }
  return m;
}

}  // namespace psync::sim
