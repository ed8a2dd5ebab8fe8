#pragma once

#include <span>

#include "psync/core/params.hpp"

namespace psync {

struct Estimate {
  double value = 0.0;
  double stderr_ = 0.0;
};

// Derived metrics of one operating point. Analytic evaluations leave the
// standard errors at zero; Monte-Carlo analyses fill them from counting
// statistics. hom_visibility and overlap_i are only produced by analysis.
struct RatesReport {
  double r1_cps = 0.0;
  Estimate r_stoc;
  Estimate r_sync;
  Estimate zeta;
  Estimate r_trig2;
  Estimate r_sync_trials;
  Estimate downtime;
  Estimate g2_h;
  Estimate hom_visibility;
  Estimate overlap_i;
  double eta_bar = 0.0;  // average memory efficiency used for r_sync
};

// eta(t) of the decoherence model, t in ns.
double memory_efficiency(double t_ns, const DecayModel& decay);

// Batch form; dispatches to the active SIMD kernel.
void memory_efficiency(std::span<const double> t_ns, const DecayModel& decay, std::span<double> out);

// Mean of eta over [0, t_star] by adaptive Simpson quadrature.
double avg_memory_efficiency(const DecayModel& decay, double t_star_ns, double abs_tol = 1e-6);

double stoc_rate(double r1, double r2, Seconds window);
double trig2_rate(double r_idler2, Seconds tau_d2);
double sync_trials_rate(double r_trig2, double r1, double eta_h1, Seconds t_star, Seconds tau_d1);
double memory_downtime(double r_trig2, double r_sync_trials, Seconds tau_d1, Seconds tau_d2);
double sync_rate(double r_sync_trials, double eta_h1, double eta_h2, double eta_bar);
double g2_after_memory(double t_ns, const SourceParams& source, const MemoryParams& memory);
double snr(double eta_h, double eta0, double nu);
double internal_efficiency(double eta_e2e, double transmission);

// Average memory efficiency entering the rate chain: quadrature of the decay
// curve over [0, t*] times the direct/memory coupling correction.
double chain_eta_bar(const SystemConfig& config);

RatesReport full_chain(const SystemConfig& config);

}  // namespace psync
