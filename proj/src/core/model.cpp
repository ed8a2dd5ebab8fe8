#include "psync/core/model.hpp"

#include <cmath>
#include <limits>

#include "psync/kernels/kernels.hpp"

namespace psync {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw ValidationError(what);
}

double exponent(double t, const DecayModel& d) {
  // 1/inf == 0 keeps the limiting pure-Gaussian and pure-exponential forms exact.
  const double inv_s = 1.0 / d.tau_sigma_ns;
  const double inv_g = 1.0 / d.tau_gamma_ns;
  return -0.5 * t * t * inv_s * inv_s - t * inv_g;
}

template <class F>
double simpson_step(const F& f, double a, double b, double fa, double fm, double fb, double whole, double tol,
                    int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace

double memory_efficiency(double t_ns, const DecayModel& decay) {
  require(t_ns >= 0.0, "memory_efficiency: storage time must be >= 0");
  return decay.eta0 * std::exp(exponent(t_ns, decay));
}

void memory_efficiency(std::span<const double> t_ns, const DecayModel& decay, std::span<double> out) {
  require(out.size() == t_ns.size(), "memory_efficiency: output size mismatch");
  for (double t : t_ns) require(t >= 0.0, "memory_efficiency: storage time must be >= 0");
  kernels::decay_curve(t_ns, decay.eta0, 1.0 / decay.tau_sigma_ns, 1.0 / decay.tau_gamma_ns, out);
}

double avg_memory_efficiency(const DecayModel& decay, double t_star_ns, double abs_tol) {
  require(t_star_ns > 0.0, "avg_memory_efficiency: t_star must be > 0");
  const auto f = [&](double t) { return decay.eta0 * std::exp(exponent(t, decay)); };
  const double fa = f(0.0);
  const double fb = f(t_star_ns);
  const double fm = f(0.5 * t_star_ns);
  const double whole = t_star_ns / 6.0 * (fa + 4.0 * fm + fb);
  // Tolerance is on the mean, so scale it to the integral.
  const double integral = simpson_step(f, 0.0, t_star_ns, fa, fm, fb, whole, abs_tol * t_star_ns, 48);
  return integral / t_star_ns;
}

double stoc_rate(double r1, double r2, Seconds window) {
  require(r1 >= 0.0 && r2 >= 0.0 && window.count() >= 0.0, "stoc_rate: inputs must be >= 0");
  return r1 * r2 * window.count();
}

double trig2_rate(double r_idler2, Seconds tau_d2) {
  require(r_idler2 >= 0.0 && tau_d2.count() >= 0.0, "trig2_rate: inputs must be >= 0");
  if (std::isinf(r_idler2)) return tau_d2.count() > 0.0 ? 1.0 / tau_d2.count() : r_idler2;
  return r_idler2 / (1.0 + r_idler2 * tau_d2.count());
}

double sync_trials_rate(double r_trig2, double r1, double eta_h1, Seconds t_star, Seconds tau_d1) {
  require(eta_h1 > 0.0, "sync_trials_rate: eta_h1 must be > 0");
  require(r_trig2 >= 0.0 && r1 >= 0.0 && t_star.count() >= 0.0 && tau_d1.count() >= 0.0,
          "sync_trials_rate: inputs must be >= 0");
  const double p_trig1 = (r1 / eta_h1) * t_star.count();
  const double x = r_trig2 * p_trig1;
  return x / (1.0 + x * tau_d1.count());
}

double memory_downtime(double r_trig2, double r_sync_trials, Seconds tau_d1, Seconds tau_d2) {
  require(r_sync_trials <= r_trig2, "memory_downtime: r_sync_trials exceeds r_trig2");
  require(r_sync_trials >= 0.0, "memory_downtime: rates must be >= 0");
  const double d = (r_trig2 - r_sync_trials) * tau_d2.count() + r_sync_trials * tau_d1.count();
  if (d > 1.0) throw ValidationError("memory_downtime: rates are not self-consistent (downtime > 1)");
  return d;
}

double sync_rate(double r_sync_trials, double eta_h1, double eta_h2, double eta_bar) {
  require(eta_h1 >= 0.0 && eta_h1 <= 1.0 && eta_h2 >= 0.0 && eta_h2 <= 1.0 && eta_bar >= 0.0 && eta_bar <= 1.0,
          "sync_rate: efficiencies must be in [0, 1]");
  return r_sync_trials * eta_h1 * eta_h2 * eta_bar;
}

double g2_after_memory(double t_ns, const SourceParams& source, const MemoryParams& memory) {
  const double eta = memory_efficiency(t_ns, memory.decay);
  require(eta > 0.0, "g2_after_memory: memory efficiency is zero");
  const double rho = source.rho;
  return source.g2_source *
         ((1.0 - rho) + (1.0 - rho) * memory.t_retrieval() / eta + rho * memory.t_offres() / eta);
}

double snr(double eta_h, double eta0, double nu) {
  require(nu > 0.0, "snr: nu must be > 0");
  return eta_h * eta0 / nu;
}

double internal_efficiency(double eta_e2e, double transmission) {
  require(transmission > 0.0 && transmission <= 1.0, "internal_efficiency: transmission must be in (0, 1]");
  const double q = eta_e2e / transmission;
  if (q > 1.0 + 1e-12) throw ValidationError("internal_efficiency: eta_e2e exceeds transmission");
  return q;
}

double chain_eta_bar(const SystemConfig& config) {
  return avg_memory_efficiency(config.memory.decay, to_ns(config.electronics.t_star)) *
         config.detector.memory_route_factor();
}

RatesReport full_chain(const SystemConfig& config) {
  config.validate();
  const auto& src = config.source;
  const auto& el = config.electronics;
  RatesReport rep;
  rep.r1_cps = src.r1_cps;
  rep.eta_bar = chain_eta_bar(config);
  rep.r_stoc.value = stoc_rate(src.r1_cps, src.r2(), config.analysis.coincidence_window);
  rep.r_trig2.value = trig2_rate(src.idler2_rate(), el.tau_d2);
  rep.r_sync_trials.value = sync_trials_rate(rep.r_trig2.value, src.r1_cps, src.eta_h1, el.t_star, el.tau_d1);
  rep.downtime.value = memory_downtime(rep.r_trig2.value, rep.r_sync_trials.value, el.tau_d1, el.tau_d2);
  rep.r_sync.value = sync_rate(rep.r_sync_trials.value, src.eta_h1, src.eta_h2, rep.eta_bar);
  rep.zeta.value = rep.r_stoc.value > 0.0 ? rep.r_sync.value / rep.r_stoc.value : 0.0;
  // No heralded photons, no conditional statistics.
  rep.g2_h.value = src.r1_cps > 0.0 ? g2_after_memory(config.analysis.g2_reference_ns, src, config.memory) : 0.0;
  rep.hom_visibility.value = std::numeric_limits<double>::quiet_NaN();
  rep.overlap_i.value = std::numeric_limits<double>::quiet_NaN();
  return rep;
}

}  // namespace psync
