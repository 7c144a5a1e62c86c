#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ltcepi/data.hpp"
#include "ltcepi/gradient.hpp"
#include "ltcepi/model.hpp"

namespace ltcepi {

/// Penalty scales and the reference values the deviations are measured from.
struct PenaltyConfig {
  double lambda = 100.0;  // objective balance J = F + lambda * G
  double s_t = 10.0;      // ratio-deviation scale
  double s = 5.0;         // scalar relative-deviation scale
  Eigen::Vector2d tau_ref = Eigen::Vector2d(0.40, 0.10);
  Eigen::Vector2d zeta_ref = Eigen::Vector2d(0.25, 0.05);
  Eigen::Vector2d xi_ref = Eigen::Vector2d(0.40, 0.10);
  Eigen::Vector2d beta_ref = Eigen::Vector2d(0.30, 0.30);
  Eigen::Vector2d sigma_ref = Eigen::Vector2d(0.25, 0.25);
  Eigen::Vector2d eta_ref = Eigen::Vector2d(0.13, 0.13);
  Eigen::Vector2d mu_ref = Eigen::Vector2d(0.13, 0.13);
  Eigen::Vector2d gamma_I_ref = Eigen::Vector2d(0.20, 0.20);
  Eigen::Vector2d gamma_H_ref = Eigen::Vector2d(0.14, 0.14);
  Eigen::Matrix2d contact_ref = (Eigen::Matrix2d() << 4.0, 0.5, 0.1, 2.0).finished();
};

/// Box bounds over the packed theta vector.
struct Bounds {
  Eigen::VectorXd lower, upper;

  bool contains(const Eigen::VectorXd& x, double tol = 0.0) const;
  Eigen::VectorXd project(const Eigen::VectorXd& x) const;
};

/// Relative bound factors around the reference values.
struct BoundsSpec {
  double alpha_first_max = 0.1;  // alpha_i(t_0) in [0, alpha_first_max]
  double alpha_max = 0.9;        // later alpha knots in [0, alpha_max]
  double ratio_lo = 0.25, ratio_hi = 2.0;    // tau/zeta/xi in [lo*ref, hi*ref]
  double scalar_lo = 0.5, scalar_hi = 2.0;   // rates and contacts
};

Bounds make_bounds(const TimeGrid& grid, const PenaltyConfig& cfg, const BoundsSpec& spec = {});

/// Weighted squared log-residual sum over all observation blocks.
/// weight_exponent 1 gives the deterministic misfit (daily blocks weighted
/// 0.1); weight_exponent 2 gives the residual form the likelihood uses
/// (weights folded into both data and model values).
double weighted_misfit(const ParameterSet& p, const StateVec& init, const ObservationSet& obs,
                       double weight_exponent = 1.0);

/// Same value plus its adjoint gradient over the packed theta vector.
Eigen::VectorXd weighted_misfit_gradient(const ParameterSet& p, const StateVec& init,
                                         const ObservationSet& obs, double weight_exponent,
                                         double* value_out);

inline double misfit(const ParameterSet& p, const StateVec& init, const ObservationSet& obs) {
  return weighted_misfit(p, init, obs, 1.0);
}

double penalty(const ParameterSet& p, const PenaltyConfig& cfg);
Eigen::VectorXd penalty_gradient(const ParameterSet& p, const PenaltyConfig& cfg);

double objective(const ParameterSet& p, const StateVec& init, const ObservationSet& obs,
                 const PenaltyConfig& cfg);
Eigen::VectorXd objective_gradient(const ParameterSet& p, const StateVec& init,
                                   const ObservationSet& obs, const PenaltyConfig& cfg,
                                   double* value_out = nullptr);

struct OptimOptions {
  int max_iter = 100;
  double decrease_tol_ratio = 1e-4;  // stop when step decrease < ratio * first decrease
  int lbfgs_memory = 10;
  int max_linesearch = 40;
};

enum class OptimStatus { kConverged, kMaxIterations, kLineSearchFailure };

struct IterationRecord {
  int iter = 0;
  double value = 0.0;
  double step = 0.0;
};

struct BoxOptimResult {
  Eigen::VectorXd x;
  double value = 0.0;
  OptimStatus status = OptimStatus::kConverged;
  std::vector<IterationRecord> log;
  std::string warning;
};

/// Limited-memory BFGS with gradient projection onto box bounds and a
/// backtracking Armijo line search. Evaluations that throw NumericalError
/// reject the trial step. Never throws on line-search failure; returns the
/// best iterate with a warning instead. The observer, when given, sees every
/// accepted iterate.
BoxOptimResult lbfgs_box_minimize(
    const std::function<double(const Eigen::VectorXd&)>& value_fn,
    const std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>& value_grad_fn,
    const Eigen::VectorXd& x0, const Bounds& bounds, const OptimOptions& opts,
    const std::function<void(int, double, const Eigen::VectorXd&)>& observer = nullptr);

struct FitIteration {
  int iter = 0;
  double J = 0.0, F = 0.0, G = 0.0;
};

struct FitResult {
  ParameterSet optimum;
  double J = 0.0, F = 0.0, G = 0.0;
  OptimStatus status = OptimStatus::kConverged;
  std::vector<FitIteration> log;
  std::string warning;
};

FitResult optimize(const ParameterSet& theta0, const StateVec& init, const ObservationSet& obs,
                   const PenaltyConfig& cfg, const Bounds& bounds, const OptimOptions& opts = {});

/// Linear interpolation of all knot sequences onto a finer knot grid
/// (scalars copied). The fine grid keeps the time span and substeps.
ParameterSet interpolate_to_grid(const ParameterSet& coarse, double fine_delta_t,
                                 int fine_num_knots = 0);

/// Coarse-to-fine protocol: interpolate the coarse optimum to delta_t = 1
/// and re-run the optimization there.
FitResult refine(const ParameterSet& coarse_opt, const StateVec& init, const ObservationSet& obs,
                 const PenaltyConfig& cfg, const BoundsSpec& bspec = {},
                 const OptimOptions& opts = {}, double fine_delta_t = 1.0);

}  // namespace ltcepi
