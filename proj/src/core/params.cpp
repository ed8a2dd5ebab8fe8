#include "psync/core/params.hpp"

#include <cmath>
#include <sstream>

namespace psync {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ValidationError(what);
}

bool in_unit(double x) { return x > 0.0 && x <= 1.0; }

}  // namespace

void SourceParams::validate() const {
  require(std::isfinite(r1_cps) && r1_cps >= 0.0, "source.r1_cps must be >= 0");
  require(std::isfinite(r2()) && r2() >= 0.0, "source.r2_cps must be >= 0");
  require(in_unit(eta_h1), "source.eta_h1 must be in (0, 1]");
  require(in_unit(eta_h2), "source.eta_h2 must be in (0, 1]");
  require(g2_source >= 0.0, "source.g2 must be >= 0");
  require(rho >= 0.0 && rho <= 1.0, "source.rho must be in [0, 1]");
  require(pulse_fwhm.count() > 0, "source.pulse_fwhm must be > 0");
}

void DecayModel::validate() const {
  require(in_unit(eta0), "memory.eta0 must be in (0, 1]");
  require(tau_sigma_ns > 0.0, "memory.tau_sigma_ns must be > 0");
  require(tau_gamma_ns > 0.0, "memory.tau_gamma_ns must be > 0");
  require(std::isfinite(tau_sigma_ns) || std::isfinite(tau_gamma_ns),
          "memory decay needs at least one finite time constant");
}

void MemoryParams::validate() const {
  decay.validate();
  require(in_unit(transmission), "memory.transmission must be in (0, 1]");
  require(nu >= 0.0 && nu <= 1.0, "memory.nu must be in [0, 1]");
  require(t_retrieval_factor >= 0.0 && t_retrieval_factor <= t_offres_factor && t_offres_factor <= 1.0,
          "memory factors must satisfy 0 <= t_retrieval_factor <= t_offres_factor <= 1");
  require(decay.eta0 <= transmission, "memory.eta0 exceeds memory.transmission (internal efficiency > 1)");
  require(retrieved_fwhm.count() > 0, "memory.retrieved_fwhm must be > 0");
  require(accept_window.count() > 0, "memory.accept_window must be > 0");
}

void ElectronicsParams::validate() const {
  require(t_star.count() > 0, "electronics.t_star must be > 0");
  require(tau_d1 >= pc_min_spacing, "electronics.tau_d1 must be >= pc_min_spacing");
  require(tau_d2.count() > 0, "electronics.tau_d2 must be > 0");
  require(pc_min_spacing.count() >= 0, "electronics.pc_min_spacing must be >= 0");
  require(insertion_delay.count() >= 0 && store_delay.count() >= 0, "electronics delays must be >= 0");
  require(retrieval_delay.count() >= 0, "electronics.retrieval_delay must be >= 0");
  require(buffer_gate.count() > 0, "electronics.buffer_gate must be > 0");
  require(retrieval_trim.count() % 10 == 0, "electronics.retrieval_trim must be a multiple of 10 ps");
  require(retrieval_delay + retrieval_trim >= Picos{0}, "retrieval_delay + retrieval_trim must be >= 0");
}

void DetectorParams::validate() const {
  require(in_unit(efficiency), "detector.efficiency must be in (0, 1]");
  require(jitter_sigma_ps >= 0.0, "detector.jitter_ps must be >= 0");
  require(latency.count() >= 0, "detector.latency must be >= 0");
  require(in_unit(coupling_memory), "detector.coupling_memory must be in (0, 1]");
  require(in_unit(coupling_direct), "detector.coupling_direct must be in (0, 1]");
}

void AnalysisParams::validate() const {
  require(herald_window.count() > 0, "analysis.herald_window must be > 0");
  require(coincidence_window.count() > 0, "analysis.coincidence_window must be > 0");
  require(g2_reference_ns >= 0.0, "analysis.g2_reference_ns must be >= 0");
  require(bin_width.count() > 0, "analysis.bin_width must be > 0");
  require(hist_max > hist_min && (hist_max - hist_min).count() % bin_width.count() == 0,
          "analysis histogram range must be a positive multiple of bin_width");
}

void HomParams::validate() const {
  require(mu >= 0.0 && mu <= 1.0, "hom.mu must be in [0, 1]");
  require(coherence_window.count() > 0, "hom.coherence_window must be > 0");
}

void SimParams::validate() const {
  require(storage_time.count() >= 0, "sim.storage_time must be >= 0");
  require(storage_time_max >= storage_time, "sim.storage_time_max must be >= sim.storage_time");
  require(event_cap > 0, "sim.event_cap must be > 0");
  require(signal_delay.count() >= 0 && memory_delay.count() >= 0, "fiber delays must be >= 0");
  require(signal_delay + path1_delay >= Picos{0}, "sim.path1_delay must not make the signal-1 delay negative");
}

void SystemConfig::validate() const {
  source.validate();
  memory.validate();
  electronics.validate();
  detector.validate();
  analysis.validate();
  hom.validate();
  sim.validate();
  // The direct-path losses are inside eta_h, so the emission probability they imply must stay <= 1.
  const double path = detector.efficiency * detector.coupling_direct;
  require(source.eta_h1 <= path + 1e-12 && source.eta_h2 <= path + 1e-12,
          "eta_h exceeds detector.efficiency * detector.coupling_direct");
}

std::string to_string(EnvelopeShape s) {
  return s == EnvelopeShape::gaussian ? "gaussian" : "two-sided-exponential";
}

std::string to_string(SimMode m) {
  switch (m) {
    case SimMode::direct: return "direct";
    case SimMode::storage: return "storage";
    case SimMode::sync: return "sync";
  }
  return "?";
}

std::string to_string(Routing r) {
  switch (r) {
    case Routing::rates: return "rates";
    case Routing::hbt: return "hbt";
    case Routing::hom: return "hom";
  }
  return "?";
}

EnvelopeShape parse_envelope(const std::string& s) {
  if (s == "gaussian") return EnvelopeShape::gaussian;
  if (s == "two-sided-exponential") return EnvelopeShape::two_sided_exponential;
  throw ValidationError("unknown envelope '" + s + "' (gaussian | two-sided-exponential)");
}

SimMode parse_mode(const std::string& s) {
  if (s == "direct") return SimMode::direct;
  if (s == "storage") return SimMode::storage;
  if (s == "sync") return SimMode::sync;
  throw ValidationError("unknown sim mode '" + s + "' (direct | storage | sync)");
}

Routing parse_routing(const std::string& s) {
  if (s == "rates") return Routing::rates;
  if (s == "hbt") return Routing::hbt;
  if (s == "hom") return Routing::hom;
  throw ValidationError("unknown routing '" + s + "' (rates | hbt | hom)");
}

}  // namespace psync
