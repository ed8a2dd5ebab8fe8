#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "psync/core/params.hpp"
#include "psync/sim/envelope.hpp"
#include "psync/sim/types.hpp"

namespace psync::sim {

constexpr std::int64_t kNever = std::numeric_limits<std::int64_t>::min() / 4;

// A photon in flight. `center` is the center of its wavepacket, which decides
// interference; `time` is the realized arrival.
struct Photon {
  std::int64_t time = 0;
  std::int64_t center = 0;
  std::uint8_t path = 1;      // 1: signal-1 / memory output, 2: signal-2
  std::uint8_t retrieved = 0; // 1 if the envelope is the retrieved one
};

// ---------------------------------------------------------------- triggers

struct TriggerState {
  std::int64_t ddg1_busy_until = kNever;
  std::int64_t ddg2_busy_until = kNever;
  std::int64_t gate_open = kNever;   // DDG-2 gate to DDG-1, [open, close)
  std::int64_t gate_close = kNever;
  std::int64_t gate_ref = -1;        // idler-2 tag that opened the gate
  std::int64_t buffer_open = kNever; // DDG-1 gate to the Buffer, [open, close)
  std::int64_t buffer_close = kNever;
  bool buffer_armed = false;
  std::int64_t last_store = kNever;
  std::int64_t last_retrieve = kNever;
  std::int64_t planned_retrieve = kNever;  // PC-2 time of the last accepted operation
  std::uint64_t pc2_blocked = 0;           // idler-1 triggers refused to keep PC-2 spacing
  std::optional<std::int64_t> pending_store;  // store pulse awaiting its retrieval
  std::optional<std::int64_t> scheduled_store;  // PC-1 pulse requested but not yet fired
  bool early_retrieval = false;  // PC-2 fired before the PC-1 pulse of the same operation
};

struct TriggerAction {
  enum class Kind : std::uint8_t { retrieval_trigger, store_pulse, retrieve_pulse } kind;
  std::int64_t time;
  std::int64_t ref;
  std::int64_t aux;
};

// The DDG / Buffer / Pockels-cell state machine. Callers feed idler tags and
// the actions it scheduled, in time order; it returns newly scheduled actions
// and appends to the event log.
class TriggerLogic {
 public:
  TriggerLogic(const ElectronicsParams& el, const SimParams& sim);

  // Storage mode needs the storage time of the operation started by an
  // accepted idler-1; sync mode ignores it.
  void on_idler1(std::int64_t t, std::int64_t storage_time, std::vector<TriggerAction>& out,
                 std::vector<LogEntry>& log);
  void on_idler2(std::int64_t t, std::vector<TriggerAction>& out, std::vector<LogEntry>& log);
  // DDG-2 output toward PC-2; passes only through an armed Buffer.
  void on_retrieval_trigger(std::int64_t t, std::int64_t herald, std::vector<TriggerAction>& out);
  void on_store_pulse(std::int64_t t, std::int64_t ref, std::int64_t aux, std::vector<LogEntry>& log);
  void on_retrieve_pulse(std::int64_t t, std::int64_t ref, std::vector<LogEntry>& log);

  const TriggerState& state() const { return s_; }

 private:
  ElectronicsParams el_;
  SimMode mode_;
  TriggerState s_;
};

// ------------------------------------------------------------------ memory

class MemoryCell {
 public:
  MemoryCell(const MemoryParams& mem, const Envelope& source_env, double route_factor, double fock_leak_prob);

  void store_pulse(std::int64_t t);
  void retrieve_pulse(std::int64_t t);

  enum class Fate : std::uint8_t { stored, leaked, absorbed };
  // An on-resonance photon reaching the memory. Must be called once every
  // control pulse within accept_window/2 of its arrival has been applied.
  Fate on_photon(const Photon& p, std::mt19937_64& rng, std::vector<Photon>& out);
  // Off-resonant background passes regardless of the control pulses.
  bool on_background(const Photon& p, std::mt19937_64& rng, std::vector<Photon>& out);
  // Emits whatever the retrieval at time t_r releases and empties the cell.
  void readout(std::int64_t t_r, std::mt19937_64& rng, std::vector<Photon>& out);

  std::size_t stored_count() const { return contents_.size(); }
  std::optional<std::int64_t> store_time() const { return store_time_; }

 private:
  MemoryParams mem_;
  Envelope source_env_;
  Envelope retrieved_env_;
  double kappa_;
  double fock_leak_;
  std::int64_t half_window_;
  std::int64_t last_store_ = kNever;
  std::int64_t last_retrieve_ = kNever;
  std::optional<std::int64_t> store_time_;
  std::vector<Photon> contents_;
};

// ------------------------------------------------------------ beamsplitter

struct Routed {
  std::int64_t time;
  Channel channel;
};

// Stochastic two-port HOM beamsplitter. Photons from the two input paths
// whose arrivals fall within the coherence window are paired greedily in
// time order (nearest partner first); a pair leaves through one common,
// randomly chosen port with probability mu * M(center difference), otherwise
// both photons pick ports independently.
class HomBeamsplitter {
 public:
  HomBeamsplitter(double mu, std::int64_t coherence_window, const Envelope& source_env, const Envelope& retrieved_env);

  void push(const Photon& p) { pending_.push_back(p); }
  // Resolves every photon earlier than `limit`. All photons earlier than
  // limit + coherence_window must already have been pushed.
  void resolve(std::int64_t limit, std::mt19937_64& rng, std::vector<Routed>& out);
  std::size_t pending() const { return pending_.size(); }
  double overlap(const Photon& a, const Photon& b) const;

 private:
  double mu_;
  std::int64_t cw_;
  ModeOverlap ss_, rs_, rr_;
  std::vector<Photon> pending_;
};

std::vector<Routed> apply_hom_beamsplitter(const std::vector<Photon>& sig1, const std::vector<Photon>& sig2,
                                           double mu, std::int64_t coherence_window, const Envelope& source_env,
                                           const Envelope& retrieved_env, std::mt19937_64& rng);

// ---------------------------------------------------------------- detector

class Detector {
 public:
  Detector(double keep_probability, double jitter_sigma_ps, Picos latency);
  std::optional<std::int64_t> detect(std::int64_t t, std::mt19937_64& rng) const;
  // Jitter is clamped to +-10 sigma so a detection never precedes its photon
  // by more than that; with latency >= 10 sigma tags are causal.
  std::int64_t max_jitter() const { return max_jitter_; }

 private:
  double keep_;
  double sigma_;
  std::int64_t latency_;
  std::int64_t max_jitter_;
};

std::vector<TimeTag> apply_detector(const std::vector<Routed>& photons, const Detector& det, std::mt19937_64& rng);

}  // namespace psync::sim
