#include "psync/sim/sinks.hpp"

#include <sstream>

#include "psync/sim/components.hpp"

namespace psync::sim {

void RecordSink::consume(std::span<const TimeTag> tags, std::span<const LogEntry> log, std::int64_t) {
  rec_.tags.insert(rec_.tags.end(), tags.begin(), tags.end());
  rec_.log.insert(rec_.log.end(), log.begin(), log.end());
}

void TeeSink::consume(std::span<const TimeTag> tags, std::span<const LogEntry> log, std::int64_t frontier) {
  for (auto* s : sinks_) s->consume(tags, log, frontier);
}

void TeeSink::finish(const RunInfo& info) {
  for (auto* s : sinks_) s->finish(info);
}

namespace {
inline void fnv(std::uint64_t& h, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) {
    h ^= (v >> (8 * i)) & 0xffu;
    h *= 0x100000001b3ULL;
  }
}
}  // namespace

void DigestSink::consume(std::span<const TimeTag> tags, std::span<const LogEntry> log, std::int64_t) {
  for (const auto& t : tags) {
    fnv(tags_, static_cast<std::uint8_t>(t.channel), 1);
    fnv(tags_, static_cast<std::uint64_t>(t.time), 8);
  }
  for (const auto& e : log) {
    fnv(log_, static_cast<std::uint8_t>(e.kind), 1);
    fnv(log_, static_cast<std::uint64_t>(e.time), 8);
    fnv(log_, static_cast<std::uint64_t>(e.ref), 8);
    fnv(log_, static_cast<std::uint64_t>(e.aux), 8);
  }
}

std::string InvariantReport::summary() const {
  std::ostringstream s;
  s << "tags=" << tags << " log=" << log_entries << " order=" << order_violations << " ddg1=" << ddg1_violations
    << " ddg2=" << ddg2_violations << " pc1=" << pc1_violations << " pc2=" << pc2_violations
    << " sequence=" << sequence_violations << " causality=" << causality_violations
    << " min_store_spacing_ps=" << min_store_spacing
    << " min_retrieve_spacing_ps=" << min_retrieve_spacing;
  return s.str();
}

InvariantChecker::InvariantChecker(const ElectronicsParams& el, const SimParams&) : el_(el) {}

void InvariantChecker::consume(std::span<const TimeTag> tags, std::span<const LogEntry> log, std::int64_t frontier) {
  if (frontier < last_frontier_) ++r_.order_violations;
  last_frontier_ = frontier;
  for (const auto& t : tags) {
    ++r_.tags;
    if (t.time < last_tag_ || t.time >= frontier || t.time < 0) ++r_.order_violations;
    last_tag_ = t.time;
  }
  const auto spacing = [](std::int64_t& last, std::int64_t t, std::int64_t min, std::uint64_t& bad) {
    if (last != INT64_MIN && t - last < min) ++bad;
    const std::int64_t d = last == INT64_MIN ? -1 : t - last;
    last = t;
    return d;
  };
  for (const auto& e : log) {
    ++r_.log_entries;
    if (e.time < last_log_ || e.time >= frontier) ++r_.order_violations;
    last_log_ = e.time;
    if (e.ref > e.time) ++r_.causality_violations;
    switch (e.kind) {
      case LogKind::ddg2_trigger: spacing(last_ddg2_, e.time, el_.tau_d2.count(), r_.ddg2_violations); break;
      case LogKind::ddg1_trigger: spacing(last_ddg1_, e.time, el_.tau_d1.count(), r_.ddg1_violations); break;
      case LogKind::pc_store: {
        const auto d = spacing(last_store_, e.time, el_.pc_min_spacing.count(), r_.pc1_violations);
        if (d >= 0 && (r_.min_store_spacing < 0 || d < r_.min_store_spacing)) r_.min_store_spacing = d;
        if (store_open_) ++r_.sequence_violations;
        if (early_store_ != INT64_MIN) {
          if (e.time != early_store_) ++r_.sequence_violations;
          early_store_ = INT64_MIN;
        } else {
          store_open_ = true;
        }
        break;
      }
      case LogKind::pc_retrieve: {
        const auto d = spacing(last_retrieve_, e.time, el_.pc_min_spacing.count(), r_.pc2_violations);
        if (d >= 0 && (r_.min_retrieve_spacing < 0 || d < r_.min_retrieve_spacing)) r_.min_retrieve_spacing = d;
        if (!store_open_ && e.aux > e.time && early_store_ == INT64_MIN) {
          early_store_ = e.aux;  // retrieval ahead of its own store pulse
        } else {
          if (!store_open_ || e.aux != last_store_ || e.aux > e.time) ++r_.sequence_violations;
          store_open_ = false;
        }
        break;
      }
    }
  }
}

}  // namespace psync::sim
