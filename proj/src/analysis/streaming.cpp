#include "psync/analysis/streaming.hpp"

#include <algorithm>
#include <limits>

#include "psync/kernels/kernels.hpp"

namespace psync::analysis {

using sim::Channel;
using sim::LogEntry;
using sim::LogKind;
using sim::TimeTag;

std::uint64_t CountResult::with_all(unsigned bits) const {
  std::uint64_t n = 0;
  for (unsigned m = 0; m < masks.size(); ++m)
    if ((m & bits) == bits) n += masks[m];
  return n;
}

void CountResult::merge(const CountResult& o) {
  anchors += o.anchors;
  for (std::size_t i = 0; i < masks.size(); ++i) masks[i] += o.masks[i];
}

// ------------------------------------------------------------ AnchoredSink

AnchoredSink::AnchoredSink(Anchor anchor, std::int64_t pair_half_window, std::int64_t pair_center)
    : anchor_(anchor), half_(pair_half_window), center_(pair_center) {
  if (pair_half_window < 0) throw ValidationError("accidental window must be >= 0");
  if (anchor == Anchor::idler_pair) watch(Channel::idler2);
}

void AnchoredSink::set_reach(std::int64_t lo, std::int64_t hi) {
  lo_ = lo;
  hi_ = hi;
}

void AnchoredSink::consume(std::span<const TimeTag> tags, std::span<const LogEntry> log, std::int64_t frontier) {
  for (const auto& t : tags) {
    const int c = static_cast<int>(t.channel);
    if (watched_[c]) buf_[c].push_back(t.time);
    switch (anchor_) {
      case Anchor::idler1:
        if (t.channel == Channel::idler1) pending_.push_back({t.time, t.time, 0});
        break;
      case Anchor::idler2:
        if (t.channel == Channel::idler2) pending_.push_back({t.time, t.time, 0});
        break;
      case Anchor::idler_pair:
        if (t.channel == Channel::idler1) pending_idler1_.push_back(t.time);
        break;
      case Anchor::memory_op:
        break;
    }
  }
  if (anchor_ == Anchor::memory_op)
    for (const auto& e : log)
      if (e.kind == LogKind::pc_retrieve) pending_.push_back({e.time, e.time, e.time - e.aux});
  frontier_ = std::max(frontier_, frontier);
  drain(frontier_, false);
}

void AnchoredSink::finish(const sim::RunInfo& info) {
  drain(std::numeric_limits<std::int64_t>::max() / 2, true);
  info_ = info;
}

void AnchoredSink::drain(std::int64_t frontier, bool final) {
  if (anchor_ == Anchor::idler_pair) {
    auto& i2 = buf_[static_cast<int>(Channel::idler2)];
    const std::size_t head = head_[static_cast<int>(Channel::idler2)];
    while (!pending_idler1_.empty() && (final || pending_idler1_.front() - center_ + half_ < frontier)) {
      const std::int64_t t2c = pending_idler1_.front() - center_;
      const std::int64_t t1 = pending_idler1_.front();
      pending_idler1_.pop_front();
      auto it = std::lower_bound(i2.begin() + static_cast<std::ptrdiff_t>(head), i2.end(), t2c - half_);
      for (; it != i2.end() && *it <= t2c + half_; ++it) pending_.push_back({t1, *it, 0});
    }
  }
  while (!pending_.empty()) {
    const auto& a = pending_.front();
    if (!final && std::max(a.primary, a.secondary) + hi_ > frontier) break;
    evaluate(a);
    pending_.pop_front();
  }
  std::int64_t bound = frontier;
  if (!pending_.empty()) bound = std::min({bound, pending_.front().primary, pending_.front().secondary});
  if (!pending_idler1_.empty()) bound = std::min(bound, pending_idler1_.front() - std::max<std::int64_t>(center_, 0));
  if (!final) prune(bound - half_ - std::max<std::int64_t>(center_, 0) + std::min<std::int64_t>(lo_, 0));
}

void AnchoredSink::prune(std::int64_t before) {
  for (int c = 0; c < sim::kChannels; ++c) {
    auto& b = buf_[c];
    std::size_t& h = head_[c];
    while (h < b.size() && b[h] < before) ++h;
    if (h > (1u << 16) && h * 2 > b.size()) {
      b.erase(b.begin(), b.begin() + static_cast<std::ptrdiff_t>(h));
      h = 0;
    }
  }
}

std::span<const std::int64_t> AnchoredSink::range(Channel c, std::int64_t lo, std::int64_t hi) const {
  const auto& b = buf_[static_cast<int>(c)];
  const auto first = std::lower_bound(b.begin() + static_cast<std::ptrdiff_t>(head_[static_cast<int>(c)]), b.end(), lo);
  const auto last = std::lower_bound(first, b.end(), hi);
  return {b.data() + (first - b.begin()), static_cast<std::size_t>(last - first)};
}

// ----------------------------------------------------------- WindowCounter

WindowCounter::WindowCounter(Anchor anchor, std::vector<Window> windows, std::int64_t pair_half_window,
                             std::int64_t storage_bin, std::int64_t pair_center)
    : AnchoredSink(anchor, pair_half_window, pair_center), windows_(std::move(windows)), storage_bin_(storage_bin) {
  if (windows_.empty() || windows_.size() > 4) throw ValidationError("window counter takes 1 to 4 windows");
  if (storage_bin < 0) throw ValidationError("storage-time bin must be >= 0");
  std::int64_t lo = std::numeric_limits<std::int64_t>::max(), hi = std::numeric_limits<std::int64_t>::min();
  for (const auto& w : windows_) {
    if (w.width <= 0) throw ValidationError("window width must be > 0");
    if (w.secondary && anchor != Anchor::idler_pair)
      throw ValidationError("secondary windows need idler-pair anchors");
    watch(w.channel);
    lo = std::min(lo, w.offset);
    hi = std::max(hi, w.offset + w.width);
  }
  set_reach(lo, hi);
}

void WindowCounter::evaluate(const AnchorEvent& a) {
  unsigned mask = 0;
  for (std::size_t i = 0; i < windows_.size(); ++i) {
    const auto& w = windows_[i];
    const std::int64_t base = (w.secondary ? a.secondary : a.primary) + w.offset;
    if (!range(w.channel, base, base + w.width).empty()) mask |= 1u << i;
  }
  ++total_.anchors;
  ++total_.masks[mask];
  if (storage_bin_ > 0) {
    const std::int64_t key = a.storage_time >= 0 ? a.storage_time / storage_bin_ : -1 - (-a.storage_time - 1) / storage_bin_;
    auto& r = binned_[key];
    ++r.anchors;
    ++r.masks[mask];
  }
}

// ---------------------------------------------------- HistogramAccumulator

HistogramAccumulator::HistogramAccumulator(Anchor anchor, Channel target, const HistGeometry& g)
    : AnchoredSink(anchor, 300), target_(target), hist_(g) {
  watch(target);
  set_reach(g.t_min, g.t_max);
}

void HistogramAccumulator::evaluate(const AnchorEvent& a) {
  const auto r = range(target_, a.primary + hist_.t_min, a.primary + hist_.t_max);
  if (r.empty()) return;
  kernels::accumulate_offsets(a.primary, r, hist_.t_min, hist_.bin_width, hist_.counts);
  hist_.total_pairs += r.size();
}

// ---------------------------------------------------------------- RunStats

void RunStats::consume(std::span<const TimeTag> tags, std::span<const LogEntry> log, std::int64_t) {
  for (const auto& t : tags) ++singles[static_cast<int>(t.channel)];
  for (const auto& e : log) ++log_counts[static_cast<int>(e.kind)];
  if (!tags.empty()) last_time = std::max(last_time, tags.back().time);
  if (!log.empty()) last_time = std::max(last_time, log.back().time);
}

void RunStats::finish(const sim::RunInfo& i) {
  info = i;
  finished = true;
}

double RunStats::duration_s() const {
  if (info.effective_duration_s > 0.0) return info.effective_duration_s;
  return static_cast<double>(last_time) * 1e-12;
}

void feed(const sim::TagRecord& rec, sim::TagSink& sink) {
  sink.consume(rec.tags, rec.log, std::numeric_limits<std::int64_t>::max() / 2);
  sink.finish(rec.info);
}

}  // namespace psync::analysis
