#include "psync/sim/components.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "psync/core/model.hpp"

namespace psync::sim {

// ---------------------------------------------------------------- triggers

TriggerLogic::TriggerLogic(const ElectronicsParams& el, const SimParams& sim) : el_(el), mode_(sim.mode) {}

void TriggerLogic::on_idler2(std::int64_t t, std::vector<TriggerAction>& out, std::vector<LogEntry>& log) {
  if (mode_ != SimMode::sync) return;
  if (t < s_.ddg2_busy_until) return;
  s_.ddg2_busy_until = t + el_.tau_d2.count();
  s_.gate_open = t + el_.insertion_delay.count();
  s_.gate_close = s_.gate_open + el_.t_star.count();
  s_.gate_ref = t;
  log.push_back({LogKind::ddg2_trigger, t, t, s_.gate_open});
  out.push_back({TriggerAction::Kind::retrieval_trigger,
                 s_.gate_open + el_.retrieval_delay.count() + el_.retrieval_trim.count(), t, 0});
}

void TriggerLogic::on_idler1(std::int64_t t, std::int64_t storage_time, std::vector<TriggerAction>& out,
                             std::vector<LogEntry>& log) {
  if (mode_ == SimMode::direct) return;
  if (t < s_.ddg1_busy_until) return;
  std::int64_t gate_ref = -1;
  const std::int64_t store_at = t + el_.insertion_delay.count() + el_.store_delay.count();
  std::int64_t retrieve_at = store_at + storage_time;
  if (mode_ == SimMode::sync) {
    if (!(t >= s_.gate_open && t < s_.gate_close)) return;
    gate_ref = s_.gate_ref;
    retrieve_at = s_.gate_open + el_.retrieval_delay.count() + el_.retrieval_trim.count();
  }
  // Stores are tau_d1 apart, but a late idler-1 followed by an early one can
  // put two retrievals closer than PC-2 can fire; that operation is skipped.
  if (s_.planned_retrieve != kNever && retrieve_at - s_.planned_retrieve < el_.pc_min_spacing.count()) {
    ++s_.pc2_blocked;
    return;
  }
  s_.planned_retrieve = retrieve_at;
  s_.ddg1_busy_until = t + el_.tau_d1.count();
  log.push_back({LogKind::ddg1_trigger, t, t, gate_ref});
  s_.scheduled_store = store_at;
  out.push_back({TriggerAction::Kind::store_pulse, store_at, t, gate_ref});
  if (mode_ == SimMode::sync) {
    if (s_.buffer_armed && t < s_.buffer_close)
      throw LogicError("trigger logic: Buffer re-armed while a retrieval is pending");
    s_.buffer_open = t + el_.insertion_delay.count();
    s_.buffer_close = s_.buffer_open + el_.buffer_gate.count();
    s_.buffer_armed = true;
  } else {
    out.push_back({TriggerAction::Kind::retrieve_pulse, retrieve_at, t, 0});
  }
}

void TriggerLogic::on_retrieval_trigger(std::int64_t t, std::int64_t herald, std::vector<TriggerAction>& out) {
  if (!s_.buffer_armed) return;
  if (t >= s_.buffer_close) {
    s_.buffer_armed = false;  // Buffer gate expired without a trigger
    return;
  }
  if (t < s_.buffer_open) return;
  s_.buffer_armed = false;
  out.push_back({TriggerAction::Kind::retrieve_pulse, t, herald, 0});
}

void TriggerLogic::on_store_pulse(std::int64_t t, std::int64_t ref, std::int64_t aux, std::vector<LogEntry>& log) {
  if (s_.last_store != kNever && t - s_.last_store < el_.pc_min_spacing.count())
    throw LogicError("PC-1 pulses closer than the minimum spacing (" + std::to_string(t - s_.last_store) + " ps)");
  if (s_.pending_store)
    throw LogicError("store pulse while the memory still holds an unretrieved operation");
  s_.last_store = t;
  s_.scheduled_store.reset();
  log.push_back({LogKind::pc_store, t, ref, aux});
  if (s_.early_retrieval) {
    // Its retrieval already fired (negative retrieval trim); nothing is read out.
    s_.early_retrieval = false;
    return;
  }
  s_.pending_store = t;
}

void TriggerLogic::on_retrieve_pulse(std::int64_t t, std::int64_t ref, std::vector<LogEntry>& log) {
  const bool early = !s_.pending_store && s_.scheduled_store && *s_.scheduled_store >= t;
  if (!s_.pending_store && !early) throw LogicError("retrieve pulse without a preceding store pulse");
  if (s_.last_retrieve != kNever && t - s_.last_retrieve < el_.pc_min_spacing.count())
    throw LogicError("PC-2 pulses closer than the minimum spacing (" + std::to_string(t - s_.last_retrieve) +
                     " ps)");
  s_.last_retrieve = t;
  if (early) {
    s_.early_retrieval = true;
    log.push_back({LogKind::pc_retrieve, t, ref, *s_.scheduled_store});
    return;
  }
  log.push_back({LogKind::pc_retrieve, t, ref, *s_.pending_store});
  s_.pending_store.reset();
}

// ------------------------------------------------------------------ memory

MemoryCell::MemoryCell(const MemoryParams& mem, const Envelope& source_env, double route_factor,
                       double fock_leak_prob)
    : mem_(mem),
      source_env_(source_env),
      retrieved_env_(mem.retrieved_envelope, mem.retrieved_fwhm),
      kappa_(route_factor),
      fock_leak_(fock_leak_prob),
      half_window_(mem.accept_window.count() / 2) {}

void MemoryCell::store_pulse(std::int64_t t) {
  last_store_ = t;
  store_time_ = t;
  contents_.clear();
}

void MemoryCell::retrieve_pulse(std::int64_t t) { last_retrieve_ = t; }

MemoryCell::Fate MemoryCell::on_photon(const Photon& p, std::mt19937_64& rng, std::vector<Photon>& out) {
  if (store_time_ && last_store_ != kNever && std::abs(p.time - last_store_) <= half_window_) {
    contents_.push_back(p);
    return Fate::stored;
  }
  if (last_retrieve_ != kNever && std::abs(p.time - last_retrieve_) <= half_window_) {
    if (std::bernoulli_distribution(std::min(1.0, mem_.t_retrieval() * kappa_))(rng)) {
      out.push_back({p.time, p.center, 1, p.retrieved});
      return Fate::leaked;
    }
  }
  return Fate::absorbed;
}

bool MemoryCell::on_background(const Photon& p, std::mt19937_64& rng, std::vector<Photon>& out) {
  if (!std::bernoulli_distribution(std::min(1.0, mem_.t_offres() * kappa_))(rng)) return false;
  out.push_back({p.time, p.center, 1, 0});
  return true;
}

void MemoryCell::readout(std::int64_t t_r, std::mt19937_64& rng, std::vector<Photon>& out) {
  if (store_time_ && *store_time_ <= t_r) {
    const double st_ns = static_cast<double>(std::max<std::int64_t>(0, t_r - *store_time_)) * 1e-3;
    const double p = std::min(1.0, memory_efficiency(st_ns, mem_.decay) * kappa_);
    for (std::size_t i = 0; i < contents_.size(); ++i)
      if (std::bernoulli_distribution(p)(rng)) out.push_back({t_r + retrieved_env_.sample(rng), t_r, 1, 1});
  }
  // Multi-photon part of the field present during the retrieval pulse leaks
  // through with the retrieval transmission.
  if (fock_leak_ > 0.0 &&
      std::bernoulli_distribution(std::min(1.0, fock_leak_ * mem_.t_retrieval() * kappa_))(rng))
    out.push_back({t_r + source_env_.sample(rng), t_r, 1, 0});
  if (mem_.nu > 0.0 && std::bernoulli_distribution(std::min(1.0, mem_.nu * kappa_))(rng))
    out.push_back({t_r + retrieved_env_.sample(rng), t_r, 1, 1});
  contents_.clear();
  store_time_.reset();
}

// ------------------------------------------------------------ beamsplitter

HomBeamsplitter::HomBeamsplitter(double mu, std::int64_t cw, const Envelope& src, const Envelope& ret)
    : mu_(mu), cw_(cw), ss_(src, src, cw), rs_(ret, src, cw), rr_(ret, ret, cw) {}

double HomBeamsplitter::overlap(const Photon& a, const Photon& b) const {
  const std::int64_t d = a.center - b.center;
  if (a.retrieved && b.retrieved) return rr_(d);
  if (a.retrieved || b.retrieved) return rs_(d);
  return ss_(d);
}

void HomBeamsplitter::resolve(std::int64_t limit, std::mt19937_64& rng, std::vector<Routed>& out) {
  if (pending_.empty()) return;
  std::sort(pending_.begin(), pending_.end(), [](const Photon& x, const Photon& y) {
    if (x.time != y.time) return x.time < y.time;
    if (x.path != y.path) return x.path < y.path;
    if (x.center != y.center) return x.center < y.center;
    return x.retrieved < y.retrieved;
  });
  std::vector<char> done(pending_.size(), 0);
  std::uniform_int_distribution<int> coin(0, 1);
  const auto port = [&]() { return coin(rng) ? Channel::sig_b : Channel::sig_a; };
  const std::size_t n = pending_.size();
  for (std::size_t i = 0; i < n && pending_[i].time < limit; ++i) {
    if (done[i]) continue;
    const Photon& p = pending_[i];
    done[i] = 1;
    // Nearest unresolved photon of the other path within the coherence window.
    std::size_t best = n;
    std::int64_t best_d = 0;
    for (std::size_t j = i + 1; j < n && pending_[j].time - p.time <= cw_; ++j) {
      if (done[j] || pending_[j].path == p.path) continue;
      const std::int64_t d = pending_[j].time - p.time;
      if (best == n || d < best_d) {
        best = j;
        best_d = d;
      }
    }
    if (best == n) {
      out.push_back({p.time, port()});
      continue;
    }
    const Photon& q = pending_[best];
    done[best] = 1;
    const double m = mu_ * overlap(p, q);
    if (std::bernoulli_distribution(std::clamp(m, 0.0, 1.0))(rng)) {
      const Channel c = port();
      out.push_back({p.time, c});
      out.push_back({q.time, c});
    } else {
      out.push_back({p.time, port()});
      out.push_back({q.time, port()});
    }
  }
  std::vector<Photon> keep;
  for (std::size_t i = 0; i < n; ++i)
    if (!done[i]) keep.push_back(pending_[i]);
  pending_.swap(keep);
}

std::vector<Routed> apply_hom_beamsplitter(const std::vector<Photon>& sig1, const std::vector<Photon>& sig2,
                                           double mu, std::int64_t cw, const Envelope& src, const Envelope& ret,
                                           std::mt19937_64& rng) {
  HomBeamsplitter bs(mu, cw, src, ret);
  for (Photon p : sig1) {
    p.path = 1;
    bs.push(p);
  }
  for (Photon p : sig2) {
    p.path = 2;
    bs.push(p);
  }
  std::vector<Routed> out;
  bs.resolve(std::numeric_limits<std::int64_t>::max(), rng, out);
  return out;
}

// ---------------------------------------------------------------- detector

Detector::Detector(double keep, double sigma, Picos latency)
    : keep_(keep), sigma_(sigma), latency_(latency.count()),
      max_jitter_(static_cast<std::int64_t>(std::ceil(10.0 * sigma))) {
  if (!(keep >= 0.0 && keep <= 1.0)) throw ValidationError("detector keep probability must be in [0, 1]");
  if (!(sigma >= 0.0)) throw ValidationError("detector jitter must be >= 0");
}

std::optional<std::int64_t> Detector::detect(std::int64_t t, std::mt19937_64& rng) const {
  if (keep_ < 1.0 && !std::bernoulli_distribution(keep_)(rng)) return std::nullopt;
  std::int64_t j = 0;
  if (sigma_ > 0.0) {
    const double x = std::clamp(std::normal_distribution<double>(0.0, sigma_)(rng), -10.0 * sigma_, 10.0 * sigma_);
    j = static_cast<std::int64_t>(std::llround(x));
  }
  return t + latency_ + j;
}

std::vector<TimeTag> apply_detector(const std::vector<Routed>& photons, const Detector& det, std::mt19937_64& rng) {
  std::vector<TimeTag> out;
  out.reserve(photons.size());
  for (const auto& p : photons)
    if (auto t = det.detect(p.time, rng)) out.push_back({p.channel, *t});
  std::sort(out.begin(), out.end(), [](const TimeTag& a, const TimeTag& b) {
    return a.time != b.time ? a.time < b.time : a.channel < b.channel;
  });
  return out;
}

}  // namespace psync::sim
