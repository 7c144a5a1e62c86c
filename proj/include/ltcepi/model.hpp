#pragma once

#include <array>

#include "ltcepi/types.hpp"

namespace ltcepi {

/// All model parameters for the two-group system: four time-dependent ratio
/// sequences per group on the knot grid, twelve scalar rates, the 2x2 contact
/// matrix, and group populations.
///
/// The flat vector layout (pack/unpack) is
///   [alpha_1 | alpha_2 | tau_1 | tau_2 | zeta_1 | zeta_2 | xi_1 | xi_2]
/// with knot_count entries per block, followed by the 16 scalars
///   (beta_1, beta_2, sigma_1, sigma_2, eta_1, eta_2, mu_1, mu_2,
///    gammaI_1, gammaI_2, gammaH_1, gammaH_2, C_11, C_12, C_21, C_22).
struct ParameterSet {
  TimeGrid grid;
  std::array<Eigen::VectorXd, 2> alpha, tau, zeta, xi;  // knot values in (0,1)
  Eigen::Vector2d beta, sigma, eta, mu, gamma_I, gamma_H;  // rates, 1/day
  Eigen::Matrix2d contact;
  Eigen::Vector2d population;

  int knot_count() const { return grid.knot_count(); }
  int theta_dim() const { return 8 * knot_count() + 16; }

  Eigen::VectorXd pack() const;
  static ParameterSet unpack(const Eigen::VectorXd& theta, const TimeGrid& grid,
                             const Eigen::Vector2d& population);

  /// Reference values for rates/contacts plus constant ratio sequences at
  /// their reference levels; alpha identically zero.
  static ParameterSet reference(const TimeGrid& grid, const Eigen::Vector2d& population);

  void validate() const;
};

/// Piecewise-linear value of a knot sequence at continuous day t. Exact at
/// knots; constant extension past the last knot. t before the first knot is a
/// domain error.
double interpolate_ratio(const Eigen::VectorXd& knots, const TimeGrid& grid, double t);

/// pi(t) = gammaI * zeta / (eta + (gammaI - eta) * zeta): fraction of exits
/// from I that go to H, given the infection hospitalization ratio zeta.
double hospitalization_fraction(double zeta, double gamma_I, double eta);
double hospitalization_fraction_inverse(double pi, double gamma_I, double eta);

/// nu(t) = gammaH * xi / (mu + (gammaH - mu) * xi): fraction of exits from H
/// that end in death, given the hospitalization fatality ratio xi.
double fatality_fraction(double xi, double gamma_H, double mu);
double fatality_fraction_inverse(double nu, double gamma_H, double mu);

/// Per-group force of infection C_i(t) = (1 - alpha_i(t)) sum_j C_ij I_j / N_j.
Eigen::Vector2d effective_transmission(const ParameterSet& p, const StateVec& y, double t);

/// Right-hand side of the compartmental system at (t, y).
StateVec rhs(double t, const StateVec& y, const ParameterSet& p);

/// Default initial condition: S_i = N_i, given exposed counts, all else zero.
StateVec initial_state(const ParameterSet& p, double exposed_1, double exposed_2);

/// One classical RK4 step of length h.
StateVec rk4_step(const ParameterSet& p, double t, double h, const StateVec& y);

/// Fixed-step RK4 integration sampled at integer days over [grid.t_start,
/// grid.t_end]. Deterministic; throws DivergenceError if any component
/// exceeds 10 * (N_1 + N_2) or becomes non-finite.
Trajectory integrate(const ParameterSet& p, const StateVec& init, const TimeGrid& grid);

/// Daily and cumulative observable series derived from a trajectory.
/// Cumulative arrays are indexed by day - t_start (length n); daily arrays
/// start one day later (length n - 1) and are first differences.
struct ObservableSeries {
  int t_start = 0;
  Eigen::VectorXd hospitalized;     // H = H_1 + H_2
  Eigen::VectorXd confirmed_cum;    // Pc = Pc_1 + Pc_2
  Eigen::VectorXd confirmed_daily;  // pc(t) = Pc(t) - Pc(t-1)
  Eigen::VectorXd deceased_cum;     // D = D_1 + D_2
  Eigen::VectorXd deceased_daily;   // d(t) = D(t) - D(t-1)
  std::array<Eigen::VectorXd, 2> deceased_cum_group;    // D_i
  std::array<Eigen::VectorXd, 2> deceased_daily_group;  // d_i

  int t_end() const { return t_start + static_cast<int>(hospitalized.size()) - 1; }
};

ObservableSeries observables(const Trajectory& traj);

}  // namespace ltcepi
