#include "psync/fit/fit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

#include "psync/core/model.hpp"
#include "psync/kernels/kernels.hpp"

namespace psync::fit {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr int kMaxIterations = 200;
constexpr double kRelTol = 1e-10;
constexpr int kPolishSteps = 8;

// Residuals and (optionally) their Jacobian at theta.
using Evaluator = std::function<void(const VectorXd& theta, VectorXd& r, MatrixXd* J)>;

struct LmOutcome {
  VectorXd theta;
  MatrixXd jtj;
  double chi2 = 0.0;
  int iterations = 0;
  bool converged = false;
};

LmOutcome levenberg_marquardt(const Evaluator& eval, VectorXd theta, int m) {
  VectorXd r(m);
  MatrixXd J(m, theta.size());
  eval(theta, r, &J);
  double chi2 = r.squaredNorm();
  if (!std::isfinite(chi2)) throw ValidationError("fit: objective is not finite at the start point");
  double lambda = 1e-3;
  LmOutcome out;
  int it = 0;
  bool stop = false;
  VectorXd r_try(m);
  while (it < kMaxIterations && !stop) {
    ++it;
    const MatrixXd jtj = J.transpose() * J;
    const VectorXd g = J.transpose() * r;
    bool accepted = false;
    // Increase damping until the step lowers the objective.
    for (int inner = 0; inner < 60 && !accepted; ++inner) {
      MatrixXd A = jtj;
      for (int k = 0; k < A.rows(); ++k) A(k, k) += lambda * std::max(jtj(k, k), 1e-300);
      const VectorXd step = A.ldlt().solve(-g);
      if (!step.allFinite()) {
        lambda *= 10.0;
        continue;
      }
      const VectorXd cand = theta + step;
      eval(cand, r_try, nullptr);
      const double c = r_try.squaredNorm();
      if (std::isfinite(c) && c <= chi2) {
        const double rel = chi2 > 0.0 ? (chi2 - c) / chi2 : 0.0;
        theta = cand;
        chi2 = c;
        eval(theta, r, &J);
        lambda = std::max(lambda * 0.1, 1e-15);
        accepted = true;
        if (rel < kRelTol || chi2 == 0.0) stop = true;
      } else {
        lambda *= 10.0;
      }
    }
    if (!accepted) {
      // No descent direction at any damping: at numerical optimum.
      stop = true;
    }
  }
  out.converged = stop;
  // Undamped Gauss-Newton polish. Near the optimum chi2 changes drop below its
  // rounding, so a step is kept when it shrinks the gradient J^T r without
  // raising chi2 beyond that rounding.
  MatrixXd J_try(m, theta.size());
  double grad = (J.transpose() * r).norm();
  for (int k = 0; k < kPolishSteps && grad > 0.0; ++k) {
    const VectorXd step = J.colPivHouseholderQr().solve(-r);
    if (!step.allFinite()) break;
    const VectorXd cand = theta + step;
    eval(cand, r_try, &J_try);
    const double c = r_try.squaredNorm();
    const double g = (J_try.transpose() * r_try).norm();
    const double slack = 64.0 * std::numeric_limits<double>::epsilon() * std::max(chi2, 1.0);
    if (!(std::isfinite(c) && std::isfinite(g) && c <= chi2 + slack && g < grad)) break;
    theta = cand;
    chi2 = c;
    r = r_try;
    J = J_try;
    grad = g;
  }
  out.theta = theta;
  out.chi2 = chi2;
  out.iterations = it;
  out.jtj = J.transpose() * J;
  return out;
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void check_points(std::span<const DataPoint> points, std::size_t min_points, const char* who) {
  if (points.size() < min_points)
    throw ValidationError(std::string(who) + ": need at least " + std::to_string(min_points) + " points");
  for (const auto& p : points) {
    if (!(p.stderr_ > 0.0) || !std::isfinite(p.stderr_)) throw ValidationError(std::string(who) + ": stderr must be > 0");
    if (!std::isfinite(p.t_ns) || !std::isfinite(p.value)) throw ValidationError(std::string(who) + ": non-finite point");
  }
}

}  // namespace

const FitParam& FitResult::param(const std::string& name) const {
  for (const auto& p : parameters)
    if (p.name == name) return p;
  throw std::out_of_range("FitResult: no parameter " + name);
}

double decay_chi2(std::span<const DataPoint> points, const DecayModel& model) {
  double s = 0.0;
  for (const auto& p : points) {
    const double d = (memory_efficiency(p.t_ns, model) - p.value) / p.stderr_;
    s += d * d;
  }
  return s;
}

FitResult fit_decay(std::span<const DataPoint> points, const DecayModel* start) {
  check_points(points, 4, "fit_decay");
  for (const auto& p : points)
    if (p.t_ns < 0.0) throw ValidationError("fit_decay: storage times must be >= 0");
  const int m = static_cast<int>(points.size());

  DecayModel init;
  if (start) {
    init = *start;
  } else {
    // Weighted log-linear regression for a pure exponential, then split the
    // 1/e time evenly between the Gaussian and exponential terms.
    double sw = 0, st = 0, sy = 0, stt = 0, sty = 0;
    for (const auto& p : points) {
      if (p.value <= 0.0) continue;
      const double w = (p.value / p.stderr_) * (p.value / p.stderr_);
      const double y = std::log(p.value);
      sw += w;
      st += w * p.t_ns;
      sy += w * y;
      stt += w * p.t_ns * p.t_ns;
      sty += w * p.t_ns * y;
    }
    const double det = sw * stt - st * st;
    double slope = det > 0 ? (sw * sty - st * sy) / det : -0.01;
    double icpt = det > 0 ? (sy - slope * st) / sw : std::log(0.5);
    if (!(slope < 0.0)) slope = -0.01;
    const double tau_e = -1.0 / slope;
    init.eta0 = std::clamp(std::exp(icpt), 1e-6, 1.0 - 1e-6);
    init.tau_sigma_ns = tau_e;
    init.tau_gamma_ns = 2.0 * tau_e;
  }
  if (!(init.eta0 > 0 && init.eta0 < 1 && init.tau_sigma_ns > 0 && init.tau_gamma_ns > 0 &&
        std::isfinite(init.tau_sigma_ns) && std::isfinite(init.tau_gamma_ns)))
    throw ValidationError("fit_decay: start point must have 0 < eta0 < 1 and finite positive time constants");

  std::vector<double> t(points.size()), f(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) t[i] = points[i].t_ns;

  const Evaluator eval = [&](const VectorXd& th, VectorXd& r, MatrixXd* J) {
    const double e0 = logistic(th[0]);
    const double s = std::exp(th[1]);
    const double g = std::exp(th[2]);
    kernels::decay_curve(t, e0, 1.0 / s, 1.0 / g, f);
    for (int i = 0; i < m; ++i) {
      const double sig = points[i].stderr_;
      r[i] = (f[i] - points[i].value) / sig;
      if (J) {
        const double ti = t[i];
        (*J)(i, 0) = f[i] * (1.0 - e0) / sig;
        (*J)(i, 1) = f[i] * ti * ti / (s * s) / sig;
        (*J)(i, 2) = f[i] * ti / g / sig;
      }
    }
  };

  VectorXd th0(3);
  th0 << std::log(init.eta0 / (1.0 - init.eta0)), std::log(init.tau_sigma_ns), std::log(init.tau_gamma_ns);
  const LmOutcome o = levenberg_marquardt(eval, th0, m);

  const double e0 = logistic(o.theta[0]);
  const double s = std::exp(o.theta[1]);
  const double g = std::exp(o.theta[2]);
  const VectorXd d = (VectorXd(3) << e0 * (1.0 - e0), s, g).finished();
  MatrixXd cov_theta = o.jtj.completeOrthogonalDecomposition().pseudoInverse();
  const MatrixXd cov = d.asDiagonal() * cov_theta * d.asDiagonal();

  FitResult res;
  res.parameters = {{"eta0", e0, std::sqrt(std::max(0.0, cov(0, 0)))},
                    {"tau_sigma_ns", s, std::sqrt(std::max(0.0, cov(1, 1)))},
                    {"tau_gamma_ns", g, std::sqrt(std::max(0.0, cov(2, 2)))}};
  res.covariance = cov;
  res.chi2 = o.chi2;
  res.dof = m - 3;
  res.iterations = o.iterations;
  res.converged = o.converged && cov.allFinite() && o.theta.allFinite();
  return res;
}

double g2_chi2(std::span<const G2Dataset> datasets, double factor) {
  double s = 0.0;
  for (const auto& ds : datasets) {
    MemoryParams mem = ds.memory;
    for (const auto& p : ds.points) {
      const double eta = memory_efficiency(p.t_ns, mem.decay);
      const double g = ds.source.g2_source;
      const double rho = ds.source.rho;
      const double model =
          g * ((1.0 - rho) + (1.0 - rho) * factor * mem.transmission / eta + rho * mem.t_offres() / eta);
      const double d = (model - p.value) / p.stderr_;
      s += d * d;
    }
  }
  return s;
}

FitResult fit_g2_transmission(std::span<const G2Dataset> datasets) {
  if (datasets.empty()) throw ValidationError("fit_g2_transmission: no datasets");
  std::size_t m_total = 0;
  for (const auto& ds : datasets) {
    check_points(ds.points, 1, "fit_g2_transmission");
    ds.source.validate();
    ds.memory.decay.validate();
    m_total += ds.points.size();
  }
  if (m_total < 2) throw ValidationError("fit_g2_transmission: need at least 2 points");
  const int m = static_cast<int>(m_total);

  // Per point: model = base + slope * factor.
  std::vector<double> base, slope, y, sig;
  for (const auto& ds : datasets) {
    const double g = ds.source.g2_source;
    const double rho = ds.source.rho;
    for (const auto& p : ds.points) {
      const double eta = memory_efficiency(p.t_ns, ds.memory.decay);
      if (!(eta > 0.0)) throw ValidationError("fit_g2_transmission: memory efficiency is zero");
      base.push_back(g * ((1.0 - rho) + rho * ds.memory.t_offres() / eta));
      slope.push_back(g * (1.0 - rho) * ds.memory.transmission / eta);
      y.push_back(p.value);
      sig.push_back(p.stderr_);
    }
  }
  const Evaluator eval = [&](const VectorXd& th, VectorXd& r, MatrixXd* J) {
    for (int i = 0; i < m; ++i) {
      r[i] = (base[i] + slope[i] * th[0] - y[i]) / sig[i];
      if (J) (*J)(i, 0) = slope[i] / sig[i];
    }
  };
  VectorXd th0(1);
  th0 << 0.0;
  const LmOutcome o = levenberg_marquardt(eval, th0, m);
  FitResult res;
  const double var = o.jtj(0, 0) > 0 ? 1.0 / o.jtj(0, 0) : std::numeric_limits<double>::infinity();
  res.parameters = {{"t_retrieval_factor", o.theta[0], std::sqrt(var)}};
  res.covariance = MatrixXd::Constant(1, 1, var);
  res.chi2 = o.chi2;
  res.dof = m - 1;
  res.iterations = o.iterations;
  res.converged = o.converged && std::isfinite(var);
  return res;
}

namespace {

// Gaussian share a of the exponent at t_1e: t_1e^2/(2 ts^2) = a, t_1e/tg = 1 - a.
DecayModel split_model(double eta0, double t_1e, double a) {
  DecayModel d;
  d.eta0 = eta0;
  d.tau_sigma_ns = a > 0.0 ? t_1e / std::sqrt(2.0 * a) : std::numeric_limits<double>::infinity();
  d.tau_gamma_ns = a < 1.0 ? t_1e / (1.0 - a) : std::numeric_limits<double>::infinity();
  return d;
}

constexpr double kQuadTol = 1e-13;

}  // namespace

EtaBarBounds eta_bar_bounds(double eta0, double t_1e, double t_star) {
  if (!(eta0 > 0.0 && eta0 <= 1.0)) throw ValidationError("calibrate_decay: eta0 must be in (0, 1]");
  if (!(t_1e > 0.0 && t_star > 0.0)) throw ValidationError("calibrate_decay: times must be > 0");
  return {avg_memory_efficiency(split_model(eta0, t_1e, 0.0), t_star, kQuadTol),
          avg_memory_efficiency(split_model(eta0, t_1e, 1.0), t_star, kQuadTol)};
}

DecayModel calibrate_decay(double eta0, double t_1e, double target, double t_star) {
  const EtaBarBounds b = eta_bar_bounds(eta0, t_1e, t_star);
  const double lo_v = std::min(b.exponential, b.gaussian);
  const double hi_v = std::max(b.exponential, b.gaussian);
  const double slack = 1e-12;
  if (!(target >= lo_v - slack && target <= hi_v + slack)) {
    std::ostringstream ss;
    ss << std::setprecision(8) << "calibrate_decay: eta_bar target " << target << " outside feasible interval ["
       << lo_v << ", " << hi_v << "] (pure exponential " << b.exponential << ", pure Gaussian " << b.gaussian << ")";
    throw ValidationError(ss.str());
  }
  if (std::abs(target - b.exponential) <= slack) return split_model(eta0, t_1e, 0.0);
  if (std::abs(target - b.gaussian) <= slack) return split_model(eta0, t_1e, 1.0);
  const bool increasing = b.gaussian > b.exponential;
  double lo = 0.0, hi = 1.0;
  for (int i = 0; i < 200 && hi - lo > 1e-16; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double v = avg_memory_efficiency(split_model(eta0, t_1e, mid), t_star, kQuadTol);
    if ((v < target) == increasing)
      lo = mid;
    else
      hi = mid;
  }
  return split_model(eta0, t_1e, 0.5 * (lo + hi));
}

std::vector<DataPoint> parse_points_csv(std::istream& in) {
  std::vector<DataPoint> pts;
  std::string line;
  std::uint64_t offset = 0;
  bool header = true;
  while (std::getline(in, line)) {
    const std::uint64_t here = offset;
    offset += line.size() + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (header) {
      header = false;
      if (line.rfind("t_ns", 0) == 0) continue;
    }
    std::istringstream ss(line);
    std::string a, b, c;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') || !std::getline(ss, c, ','))
      throw FormatError("points CSV: expected t_ns,value,stderr", here);
    try {
      std::size_t ia = 0, ib = 0, ic = 0;
      DataPoint p{std::stod(a, &ia), std::stod(b, &ib), std::stod(c, &ic)};
      if (ia != a.size() || ib != b.size() || ic != c.size()) throw std::invalid_argument("trailing");
      pts.push_back(p);
    } catch (const std::logic_error&) {
      throw FormatError("points CSV: malformed number", here);
    }
  }
  return pts;
}

std::vector<DataPoint> read_points_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  return parse_points_csv(in);
}

void write_points_csv(std::ostream& out, std::span<const DataPoint> points) {
  out << "t_ns,value,stderr\n" << std::setprecision(17);
  for (const auto& p : points) out << p.t_ns << ',' << p.value << ',' << p.stderr_ << '\n';
}

void write_report(std::ostream& out, const FitResult& r, const std::string& title) {
  out << title << '\n';
  out << "  converged: " << (r.converged ? "yes" : "no") << " after " << r.iterations << " iterations\n";
  out << std::setprecision(6) << "  chi2 = " << r.chi2 << " for " << r.dof << " degrees of freedom\n";
  for (const auto& p : r.parameters)
    out << "  " << std::left << std::setw(20) << p.name << std::right << std::setw(14) << p.value << " +- "
        << p.stderr_ << '\n';
}

void write_params_csv(std::ostream& out, const FitResult& r) {
  out << "name,value,stderr\n" << std::setprecision(17);
  for (const auto& p : r.parameters) out << p.name << ',' << p.value << ',' << p.stderr_ << '\n';
  out << "chi2," << r.chi2 << ",0\n";
  out << "dof," << r.dof << ",0\n";
  out << "converged," << (r.converged ? 1 : 0) << ",0\n";
}

}  // namespace psync::fit
