#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "psync/core/units.hpp"

namespace psync {

enum class EnvelopeShape : std::uint8_t { gaussian, two_sided_exponential };

struct SourceParams {
  double r1_cps = 50e3;                 // detected heralded rate, channel 1
  std::optional<double> r2_cps;         // defaults to 0.97 * r1
  double eta_h1 = 0.209;
  double eta_h2 = 0.159;
  double g2_source = 0.0126;
  double rho = 0.35;                    // fraction of the noise that is off-resonant pump scatter
  Picos pulse_fwhm{950};
  EnvelopeShape envelope = EnvelopeShape::gaussian;

  double r2() const { return r2_cps.value_or(0.97 * r1_cps); }
  double idler1_rate() const { return r1_cps / eta_h1; }
  double idler2_rate() const { return r2() / eta_h2; }
  void validate() const;
};

// eta(t) = eta0 * exp(-t^2 / (2 tau_sigma^2) - t / tau_gamma), t in ns.
// Either time constant may be +inf (pure Gaussian or pure exponential decay).
struct DecayModel {
  double eta0 = 0.262;
  double tau_sigma_ns = 98.620047;
  double tau_gamma_ns = 343.489407;
  void validate() const;
};

struct MemoryParams {
  DecayModel decay;
  double transmission = 0.68;
  double nu = 1.7e-5;
  double t_offres_factor = 0.9;
  double t_retrieval_factor = 0.1;
  Picos retrieved_fwhm{1500};
  EnvelopeShape retrieved_envelope = EnvelopeShape::gaussian;
  Picos accept_window{3500};  // control-pulse acceptance window for store and leak

  double t_offres() const { return t_offres_factor * transmission; }
  double t_retrieval() const { return t_retrieval_factor * transmission; }
  void validate() const;
};

struct ElectronicsParams {
  Picos t_star{100'000};
  Picos tau_d1{1'525'000};
  Picos tau_d2{260'000};
  Picos pc_min_spacing{1'500'000};
  Picos insertion_delay{22'000};
  Picos store_delay{15'000};       // DDG-1 output to PC-1
  Picos retrieval_delay{137'000};  // gate start to PC-2 trigger
  Picos buffer_gate{200'000};
  Picos retrieval_trim{0};
  void validate() const;
};

struct DetectorParams {
  double efficiency = 0.91;
  double jitter_sigma_ps = 55.0;
  Picos latency{1000};
  double coupling_memory = 0.98;
  double coupling_direct = 0.92;

  // Retrieved photons are scaled by the direct/memory sleeve ratio so the
  // retrieved rate follows the conservative coupling correction of eta_e2e.
  double memory_route_factor() const { return coupling_direct / coupling_memory; }
  void validate() const;
};

struct AnalysisParams {
  Picos herald_window{3500};
  Picos coincidence_window{600};  // full width of the idler-idler acceptance (+-300 ps)
  double g2_reference_ns = 20.0;
  Picos bin_width{100};
  Picos hist_min{-20'000};
  Picos hist_max{80'000};
  Picos fiber_delay{160'000};  // nominal signal delay behind its idler; offsets idler-anchored tau axes
  void validate() const;
};

struct HomParams {
  double mu = 0.923;
  Picos coherence_window{5000};
  void validate() const;
};

enum class SimMode : std::uint8_t { direct, storage, sync };
enum class Routing : std::uint8_t { rates, hbt, hom };

struct SimParams {
  SimMode mode = SimMode::sync;
  Routing routing = Routing::rates;
  Picos storage_time{20'000};
  Picos storage_time_max{20'000};  // > storage_time draws uniformly per operation
  std::uint64_t event_cap = 1'000'000'000ULL;
  Picos signal_delay{160'000};     // emission to beamsplitter/detector stage
  Picos memory_delay{38'000};      // emission to memory input
  Picos path1_delay{0};            // extra signal-1 delay in direct mode (HOM scans)
  void validate() const;
};

struct SystemConfig {
  SourceParams source;
  MemoryParams memory;
  ElectronicsParams electronics;
  DetectorParams detector;
  AnalysisParams analysis;
  HomParams hom;
  SimParams sim;

  void validate() const;
};

std::string to_string(EnvelopeShape s);
std::string to_string(SimMode m);
std::string to_string(Routing r);
EnvelopeShape parse_envelope(const std::string& s);
SimMode parse_mode(const std::string& s);
Routing parse_routing(const std::string& s);

}  // namespace psync
