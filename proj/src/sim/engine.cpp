#include "psync/sim/engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <random>
#include <vector>

#include "psync/sim/components.hpp"
#include "psync/sim/envelope.hpp"
#include "psync/sim/sinks.hpp"

namespace psync::sim {

SourceModel derive_source_model(const SystemConfig& c) {
  const auto& s = c.source;
  const double d = c.detector.efficiency * c.detector.coupling_direct;
  const double w = to_seconds(c.analysis.herald_window);
  SourceModel m;
  m.q1 = s.eta_h1 / d;
  m.q2 = s.eta_h2 / d;
  m.accidental_g2_1 = 2.0 * s.idler1_rate() * w;
  m.accidental_g2_2 = 2.0 * s.idler2_rate() * w;
  m.co_photon1 = std::max(0.0, (1.0 - s.rho) * s.g2_source - m.accidental_g2_1) * m.q1 / 2.0;
  m.co_photon2 = std::max(0.0, s.g2_source - m.accidental_g2_2) * m.q2 / 2.0;
  // Pump scatter needs the pump; with no pairs there is no background either.
  m.background_cps = s.r1_cps > 0.0 ? s.rho * s.g2_source * m.q1 / (2.0 * w) : 0.0;
  return m;
}

namespace {

enum EventKind : std::uint8_t {
  ev_idler = 0,        // detections first
  ev_retrieval_trigger = 1,
  ev_store = 2,        // Pockels-cell pulses
  ev_retrieve = 3,
  ev_memory_photon = 4,
  ev_readout = 5,
};

struct Event {
  std::int64_t time;
  std::uint64_t seq;
  std::int64_t a;
  std::int64_t b;
  std::uint8_t kind;
  std::uint8_t chan;
};

struct Later {
  bool operator()(const Event& x, const Event& y) const {
    if (x.time != y.time) return x.time > y.time;
    if (x.kind != y.kind) return x.kind > y.kind;
    return x.seq > y.seq;
  }
};

// Lazily generated Poisson arrival times on [0, end).
class PoissonClock {
 public:
  PoissonClock(double rate_cps, std::int64_t end, std::mt19937_64& rng) : rate_per_ps_(rate_cps * 1e-12), end_(end) {
    if (rate_per_ps_ > 0.0) {
      exp_ = std::exponential_distribution<double>(rate_per_ps_);
      advance(rng);
    }
  }
  bool active() const { return next_ < end_ && rate_per_ps_ > 0.0; }
  std::int64_t next() const { return active() ? next_ : std::numeric_limits<std::int64_t>::max(); }
  void advance(std::mt19937_64& rng) {
    acc_ += exp_(rng);
    next_ = acc_ >= static_cast<double>(end_) ? end_ : static_cast<std::int64_t>(acc_);
  }

 private:
  double rate_per_ps_;
  std::int64_t end_;
  double acc_ = 0.0;
  std::int64_t next_ = std::numeric_limits<std::int64_t>::max();
  std::exponential_distribution<double> exp_{1.0};
};

class Engine {
 public:
  Engine(const SystemConfig& c, std::uint64_t seed, Seconds duration, TagSink& sink)
      : c_(c),
        sink_(sink),
        end_(static_cast<std::int64_t>(std::llround(duration.count() * 1e12))),
        model_(derive_source_model(c)),
        rng_s1_(make_stream(seed, Stream::source1)),
        rng_s2_(make_stream(seed, Stream::source2)),
        rng_bg_(make_stream(seed, Stream::background)),
        rng_mem_(make_stream(seed, Stream::memory)),
        rng_di_(make_stream(seed, Stream::detector_idler)),
        rng_ds_(make_stream(seed, Stream::detector_signal)),
        rng_bs_(make_stream(seed, Stream::beamsplitter)),
        rng_sched_(make_stream(seed, Stream::schedule)),
        src_env_(c.source.envelope, c.source.pulse_fwhm),
        ret_env_(c.memory.retrieved_envelope, c.memory.retrieved_fwhm),
        clock1_(c.source.idler1_rate(), end_, rng_s1_),
        clock2_(c.source.idler2_rate(), end_, rng_s2_),
        clock_bg_(model_.background_cps, end_, rng_bg_),
        trigger_(c.electronics, c.sim),
        cell_(c.memory, src_env_, c.detector.memory_route_factor(), model_.co_photon1),
        bs_(c.hom.mu, c.hom.coherence_window.count(), src_env_, ret_env_),
        idler_det_(1.0, c.detector.jitter_sigma_ps, c.detector.latency),
        signal_det_(c.detector.efficiency * c.detector.coupling_direct, c.detector.jitter_sigma_ps,
                    c.detector.latency) {
    info_.seed = seed;
    info_.requested_duration_s = duration.count();
    const std::int64_t w = c.memory.accept_window.count();
    backlog_ = std::max<std::int64_t>(50'000, w + std::max(ret_env_.max_offset(), src_env_.max_offset()) + 1000);
    cw_ = c.sim.routing == Routing::hom ? c.hom.coherence_window.count() : 0;
    triggers_ = c.sim.mode != SimMode::direct;
  }

  RunInfo run() {
    const std::uint64_t cap = c_.sim.event_cap;
    std::int64_t now = 0;
    bool truncated = false;
    while (true) {
      const std::int64_t t1 = clock1_.next();
      const std::int64_t t2 = clock2_.next();
      const std::int64_t tb = clock_bg_.next();
      const std::int64_t tq = queue_.empty() ? std::numeric_limits<std::int64_t>::max() : queue_.top().time;
      const std::int64_t t = std::min({t1, t2, tb, tq});
      if (t == std::numeric_limits<std::int64_t>::max()) break;
      if (info_.events >= cap) {
        truncated = true;
        break;
      }
      now = t;
      ++info_.events;
      // Emissions only schedule later events, so they go first at equal times.
      if (t1 == t)
        emit_source1(t);
      else if (t2 == t)
        emit_source2(t);
      else if (tb == t)
        emit_background(t);
      else
        dispatch();
      if ((info_.events & 0x3fff) == 0) flush(now - backlog_);
    }
    if (truncated) {
      const std::int64_t frontier = now - backlog_;
      const std::int64_t out_limit = std::max<std::int64_t>(0, frontier - cw_);
      flush(frontier);
      info_.truncated = true;
      info_.effective_duration_s = static_cast<double>(out_limit) * 1e-12;
    } else {
      flush(std::numeric_limits<std::int64_t>::max() / 2);
      info_.effective_duration_s = info_.requested_duration_s;
    }
    info_.pc2_blocked = trigger_.state().pc2_blocked;
    sink_.finish(info_);
    return info_;
  }

 private:
  void push(std::int64_t time, EventKind kind, std::int64_t a, std::int64_t b, std::uint8_t chan = 0) {
    queue_.push({time, seq_++, a, b, static_cast<std::uint8_t>(kind), chan});
  }

  void add_tag(Channel ch, std::int64_t t) { tag_buf_.push_back({ch, t}); }

  void idler(Channel ch, std::int64_t t_emit) {
    const std::int64_t t = *idler_det_.detect(t_emit, rng_di_);
    ++info_.photons_generated;
    add_tag(ch, t);
    const bool needed = triggers_ && (ch == Channel::idler1 || c_.sim.mode == SimMode::sync);
    if (needed) push(t, ev_idler, t, 0, static_cast<std::uint8_t>(ch));
  }

  void emit_source1(std::int64_t t) {
    clock1_.advance(rng_s1_);
    idler(Channel::idler1, t);
    if (!std::bernoulli_distribution(model_.q1)(rng_s1_)) return;
    int n = 1;
    if (model_.co_photon1 > 0.0 && std::bernoulli_distribution(model_.co_photon1)(rng_s1_)) n = 2;
    for (int k = 0; k < n; ++k) {
      const std::int64_t u = src_env_.sample(rng_s1_);
      ++info_.photons_generated;
      if (c_.sim.mode == SimMode::direct) {
        const std::int64_t center = t + c_.sim.signal_delay.count() + c_.sim.path1_delay.count();
        stage({center + u, center, 1, 0});
      } else {
        const std::int64_t center = t + c_.sim.memory_delay.count();
        push(center + u + c_.memory.accept_window.count() / 2, ev_memory_photon, center + u, center);
      }
    }
  }

  void emit_source2(std::int64_t t) {
    clock2_.advance(rng_s2_);
    idler(Channel::idler2, t);
    if (!std::bernoulli_distribution(model_.q2)(rng_s2_)) return;
    int n = 1;
    if (model_.co_photon2 > 0.0 && std::bernoulli_distribution(model_.co_photon2)(rng_s2_)) n = 2;
    const std::int64_t center = t + c_.sim.signal_delay.count();
    for (int k = 0; k < n; ++k) {
      ++info_.photons_generated;
      stage({center + src_env_.sample(rng_s2_), center, 2, 0});
    }
  }

  // Background photons are generated in the frame of the memory input (or of
  // the beamsplitter stage in direct mode).
  void emit_background(std::int64_t t) {
    clock_bg_.advance(rng_bg_);
    ++info_.photons_generated;
    if (c_.sim.mode == SimMode::direct) {
      const std::int64_t tt = t + c_.sim.path1_delay.count();
      stage({tt, tt, 1, 0});
      return;
    }
    mem_out_.clear();
    cell_.on_background({t, t, 1, 0}, rng_mem_, mem_out_);
    for (const auto& p : mem_out_) stage(p);
  }

  void dispatch() {
    const Event e = queue_.top();
    queue_.pop();
    actions_.clear();
    switch (e.kind) {
      case ev_idler: {
        const auto ch = static_cast<Channel>(e.chan);
        if (ch == Channel::idler2) {
          trigger_.on_idler2(e.time, actions_, log_buf_);
        } else {
          std::int64_t st = c_.sim.storage_time.count();
          if (c_.sim.mode == SimMode::storage && c_.sim.storage_time_max > c_.sim.storage_time) {
            // Uniform on a 10 ps grid, the resolution of the delay generators.
            const std::int64_t steps = (c_.sim.storage_time_max - c_.sim.storage_time).count() / 10;
            st += 10 * std::uniform_int_distribution<std::int64_t>(0, steps)(rng_sched_);
          }
          trigger_.on_idler1(e.time, st, actions_, log_buf_);
        }
        break;
      }
      case ev_retrieval_trigger:
        trigger_.on_retrieval_trigger(e.time, e.a, actions_);
        break;
      case ev_store:
        trigger_.on_store_pulse(e.time, e.a, e.b, log_buf_);
        cell_.store_pulse(e.time);
        break;
      case ev_retrieve:
        trigger_.on_retrieve_pulse(e.time, e.a, log_buf_);
        cell_.retrieve_pulse(e.time);
        push(e.time + c_.memory.accept_window.count(), ev_readout, e.time, 0);
        break;
      case ev_memory_photon: {
        mem_out_.clear();
        cell_.on_photon({e.a, e.b, 1, 0}, rng_mem_, mem_out_);
        for (const auto& p : mem_out_) stage(p);
        break;
      }
      case ev_readout: {
        mem_out_.clear();
        cell_.readout(e.a, rng_mem_, mem_out_);
        info_.photons_generated += mem_out_.size();
        for (const auto& p : mem_out_) stage(p);
        break;
      }
      default:
        throw LogicError("engine: unknown event kind");
    }
    for (const auto& a : actions_) {
      switch (a.kind) {
        case TriggerAction::Kind::retrieval_trigger: push(a.time, ev_retrieval_trigger, a.ref, a.aux); break;
        case TriggerAction::Kind::store_pulse: push(a.time, ev_store, a.ref, a.aux); break;
        case TriggerAction::Kind::retrieve_pulse: push(a.time, ev_retrieve, a.ref, a.aux); break;
      }
    }
  }

  // A photon reaching the beamsplitter / detector stage.
  void stage(const Photon& p) {
    switch (c_.sim.routing) {
      case Routing::rates:
        detect_signal(p.path == 1 ? Channel::sig_a : Channel::sig_b, p.time);
        break;
      case Routing::hbt:
        if (p.path != 1) return;
        detect_signal(std::uniform_int_distribution<int>(0, 1)(rng_bs_) ? Channel::sig_b : Channel::sig_a, p.time);
        break;
      case Routing::hom:
        bs_.push(p);
        break;
    }
  }

  void detect_signal(Channel ch, std::int64_t t) {
    if (auto d = signal_det_.detect(t, rng_ds_)) add_tag(ch, *d);
  }

  void flush(std::int64_t frontier) {
    const std::int64_t out_limit = frontier - cw_;
    if (c_.sim.routing == Routing::hom) {
      routed_.clear();
      bs_.resolve(out_limit, rng_bs_, routed_);
      for (const auto& r : routed_) detect_signal(r.channel, r.time);
    }
    std::sort(tag_buf_.begin(), tag_buf_.end(), [](const TimeTag& a, const TimeTag& b) {
      return a.time != b.time ? a.time < b.time : a.channel < b.channel;
    });
    const auto tag_end = std::lower_bound(tag_buf_.begin(), tag_buf_.end(), out_limit,
                                          [](const TimeTag& t, std::int64_t v) { return t.time < v; });
    const auto log_end = std::lower_bound(log_buf_.begin(), log_buf_.end(), out_limit,
                                          [](const LogEntry& e, std::int64_t v) { return e.time < v; });
    const std::span<const TimeTag> tags(tag_buf_.data(), static_cast<std::size_t>(tag_end - tag_buf_.begin()));
    const std::span<const LogEntry> log(log_buf_.data(), static_cast<std::size_t>(log_end - log_buf_.begin()));
    for (const auto& t : tags) ++info_.channel_counts[static_cast<int>(t.channel)];
    info_.log_entries += log.size();
    if (!tags.empty() || !log.empty()) sink_.consume(tags, log, out_limit);
    tag_buf_.erase(tag_buf_.begin(), tag_end);
    log_buf_.erase(log_buf_.begin(), log_end);
  }

  const SystemConfig& c_;
  TagSink& sink_;
  std::int64_t end_;
  SourceModel model_;
  std::mt19937_64 rng_s1_, rng_s2_, rng_bg_, rng_mem_, rng_di_, rng_ds_, rng_bs_, rng_sched_;
  Envelope src_env_, ret_env_;
  PoissonClock clock1_, clock2_, clock_bg_;
  TriggerLogic trigger_;
  MemoryCell cell_;
  HomBeamsplitter bs_;
  Detector idler_det_, signal_det_;
  std::priority_queue<Event, std::vector<Event>, Later> queue_;
  std::uint64_t seq_ = 0;
  std::vector<TimeTag> tag_buf_;
  std::vector<LogEntry> log_buf_;
  std::vector<TriggerAction> actions_;
  std::vector<Photon> mem_out_;
  std::vector<Routed> routed_;
  std::int64_t backlog_ = 0;
  std::int64_t cw_ = 0;
  bool triggers_ = false;
  RunInfo info_;
};

}  // namespace

RunInfo run_sim(const SystemConfig& config, std::uint64_t seed, Seconds duration, TagSink& sink) {
  config.validate();
  if (!(duration.count() > 0.0) || !std::isfinite(duration.count()))
    throw ValidationError("run_sim: duration must be > 0");
  if (duration.count() > 9.0e6) throw ValidationError("run_sim: duration too long for 64-bit picosecond times");
  if (config.sim.mode == SimMode::storage &&
      std::max(config.sim.storage_time, config.sim.storage_time_max) +
              config.electronics.insertion_delay + config.electronics.store_delay >=
          config.electronics.pc_min_spacing)
    throw ValidationError("run_sim: storage time must end before the next operation can start");
  if (config.detector.latency.count() < static_cast<std::int64_t>(std::ceil(10.0 * config.detector.jitter_sigma_ps)))
    throw ValidationError("run_sim: detector latency must cover 10 sigma of jitter");
  Engine e(config, seed, duration, sink);
  return e.run();
}

TagRecord run_sim(const SystemConfig& config, std::uint64_t seed, Seconds duration) {
  RecordSink sink;
  run_sim(config, seed, duration, sink);
  return sink.take();
}

}  // namespace psync::sim
