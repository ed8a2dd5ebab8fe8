#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "psync/core/params.hpp"

namespace psync::fit {

struct DataPoint {
  double t_ns = 0.0;
  double value = 0.0;
  double stderr_ = 0.0;
};

struct FitParam {
  std::string name;
  double value = 0.0;
  double stderr_ = 0.0;
};

struct FitResult {
  std::vector<FitParam> parameters;
  Eigen::MatrixXd covariance;  // natural parameters, same order as `parameters`
  double chi2 = 0.0;
  int dof = 0;
  bool converged = false;
  int iterations = 0;

  const FitParam& param(const std::string& name) const;
};

// Weighted least squares of eta0 * exp(-t^2/(2 ts^2) - t/tg). The search runs
// on (logit eta0, log ts, log tg). `start` seeds the search; when omitted a
// pure-exponential estimate from the data is used.
FitResult fit_decay(std::span<const DataPoint> points, const DecayModel* start = nullptr);

double decay_chi2(std::span<const DataPoint> points, const DecayModel& model);

// One g2-after-memory dataset: its own source (g2_source, rho) and memory
// (transmission, decay, t_offres_factor). The retrieval leak factor is the
// shared fit parameter; the memory's own value is ignored.
struct G2Dataset {
  std::vector<DataPoint> points;
  SourceParams source;
  MemoryParams memory;
};

FitResult fit_g2_transmission(std::span<const G2Dataset> datasets);

double g2_chi2(std::span<const G2Dataset> datasets, double t_retrieval_factor);

// Feasible eta_bar interval [pure exponential, pure Gaussian] for a decay
// through eta0/e at t_1e.
struct EtaBarBounds {
  double exponential = 0.0;
  double gaussian = 0.0;
};
EtaBarBounds eta_bar_bounds(double eta0, double t_1e_ns, double t_star_ns);

// Solves eta(t_1e) = eta0/e and mean(eta, [0, t_star]) = eta_bar_target for
// (tau_sigma, tau_gamma). Bound targets return the infinite branch.
DecayModel calibrate_decay(double eta0, double t_1e_ns, double eta_bar_target, double t_star_ns);

// CSV with header `t_ns,value,stderr`. Malformed rows raise FormatError.
std::vector<DataPoint> read_points_csv(const std::filesystem::path& path);
std::vector<DataPoint> parse_points_csv(std::istream& in);
void write_points_csv(std::ostream& out, std::span<const DataPoint> points);

void write_report(std::ostream& out, const FitResult& r, const std::string& title);
// `name,value,stderr` rows plus chi2, dof and converged.
void write_params_csv(std::ostream& out, const FitResult& r);

}  // namespace psync::fit
