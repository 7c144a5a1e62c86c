#include "ltcepi/gradient.hpp"

#include <algorithm>
#include <cmath>

#include "ltcepi/rng.hpp"

namespace ltcepi {

namespace {

struct KnotWeights {
  int j0 = 0, j1 = 0;
  double w0 = 1.0, w1 = 0.0;
};

// mirrors interpolate_ratio: linear between neighbors, constant past the end
KnotWeights knot_weights(const TimeGrid& grid, int m, double t) {
  KnotWeights w;
  const double tk = grid.t_start + (m - 1) * grid.delta_t;
  if (t >= tk) {
    w.j0 = w.j1 = m - 1;
    w.w0 = 1.0;
    w.w1 = 0.0;
    return w;
  }
  double s = (t - grid.t_start) / grid.delta_t;
  int j = static_cast<int>(std::floor(s));
  j = std::clamp(j, 0, m - 2);
  w.j0 = j;
  w.j1 = j + 1;
  w.w1 = s - j;
  w.w0 = 1.0 - w.w1;
  return w;
}

// per-group quantities shared by both Jacobian applications
struct GroupEval {
  double alpha, tau, zeta, xi;
  double pi, nu;
  double dpi, dnu;         // denominators of the pi / nu closed forms
  double mix;              // sum_j C_ij I_j / N_j
  double force;            // (1 - alpha) * mix
};

GroupEval eval_group(const ParameterSet& p, int i, double t, const StateVec& y) {
  GroupEval e;
  e.alpha = interpolate_ratio(p.alpha[i], p.grid, t);
  e.tau = interpolate_ratio(p.tau[i], p.grid, t);
  e.zeta = interpolate_ratio(p.zeta[i], p.grid, t);
  e.xi = interpolate_ratio(p.xi[i], p.grid, t);
  e.dpi = p.eta[i] + (p.gamma_I[i] - p.eta[i]) * e.zeta;
  e.dnu = p.mu[i] + (p.gamma_H[i] - p.mu[i]) * e.xi;
  e.pi = p.gamma_I[i] * e.zeta / e.dpi;
  e.nu = p.gamma_H[i] * e.xi / e.dnu;
  e.mix = p.contact(i, 0) * y[state_index(0, kI)] / p.population[0] +
          p.contact(i, 1) * y[state_index(1, kI)] / p.population[1];
  e.force = (1.0 - e.alpha) * e.mix;
  return e;
}

}  // namespace

void EpidemicSystem::add_jac_y_T_vec(double t, const State& y, const State& v, State& out) const {
  const ParameterSet& p = *p_;
  GroupEval ge[2] = {eval_group(p, 0, t, y), eval_group(p, 1, t, y)};
  for (int i = 0; i < 2; ++i) {
    const int o = i * kCompartments;
    const GroupEval& e = ge[i];
    const double vS = v[o + kS], vE = v[o + kE], vI = v[o + kI], vH = v[o + kH];
    const double vR = v[o + kR], vD = v[o + kD], vPc = v[o + kPc], vPu = v[o + kPu];
    const double exit_I = e.pi * p.eta[i] + (1.0 - e.pi) * p.gamma_I[i];
    const double exit_H = e.nu * p.mu[i] + (1.0 - e.nu) * p.gamma_H[i];

    out[o + kS] += p.beta[i] * e.force * (vE - vS);
    out[o + kE] += p.sigma[i] * (-vE + vI + e.tau * vPc + (1.0 - e.tau) * vPu);
    out[o + kI] += -exit_I * vI + e.pi * p.eta[i] * vH + (1.0 - e.pi) * p.gamma_I[i] * vR;
    out[o + kH] += -exit_H * vH + (1.0 - e.nu) * p.gamma_H[i] * vR + e.nu * p.mu[i] * vD;
    // cross-group coupling through I_i in every group's force of infection
    for (int a = 0; a < 2; ++a) {
      const int oa = a * kCompartments;
      const double coupling =
          p.beta[a] * (1.0 - ge[a].alpha) * p.contact(a, i) * y[oa + kS] / p.population[i];
      out[o + kI] += coupling * (v[oa + kE] - v[oa + kS]);
    }
  }
}

void EpidemicSystem::add_jac_theta_T_vec(double t, const State& y, const State& v,
                                         Eigen::VectorXd& out) const {
  const ParameterSet& p = *p_;
  const int m = p.knot_count();
  const int scal = 8 * m;
  const KnotWeights kw = knot_weights(p.grid, m, t);
  GroupEval ge[2] = {eval_group(p, 0, t, y), eval_group(p, 1, t, y)};

  for (int i = 0; i < 2; ++i) {
    const int o = i * kCompartments;
    const GroupEval& e = ge[i];
    const double S = y[o + kS], E = y[o + kE], I = y[o + kI], H = y[o + kH];
    const double vS = v[o + kS], vE = v[o + kE], vI = v[o + kI], vH = v[o + kH];
    const double vR = v[o + kR], vD = v[o + kD], vPc = v[o + kPc], vPu = v[o + kPu];

    // sensitivity of the rhs to the interpolated pi / nu values
    const double via_pi = p.eta[i] * I * vH + (p.gamma_I[i] - p.eta[i]) * I * vI -
                          p.gamma_I[i] * I * vR;
    const double via_nu = (p.gamma_H[i] - p.mu[i]) * H * vH - p.gamma_H[i] * H * vR +
                          p.mu[i] * H * vD;

    auto spread = [&](int block, double g) {
      out[block * m + kw.j0] += kw.w0 * g;
      if (kw.w1 != 0.0) out[block * m + kw.j1] += kw.w1 * g;
    };
    spread(0 + i, p.beta[i] * S * e.mix * (vS - vE));                        // alpha_i
    spread(2 + i, p.sigma[i] * E * (vPc - vPu));                             // tau_i
    spread(4 + i, (p.gamma_I[i] * p.eta[i] / (e.dpi * e.dpi)) * via_pi);     // zeta_i
    spread(6 + i, (p.gamma_H[i] * p.mu[i] / (e.dnu * e.dnu)) * via_nu);      // xi_i

    const double dpi_deta = -p.gamma_I[i] * e.zeta * (1.0 - e.zeta) / (e.dpi * e.dpi);
    const double dpi_dgI = e.zeta * p.eta[i] * (1.0 - e.zeta) / (e.dpi * e.dpi);
    const double dnu_dmu = -p.gamma_H[i] * e.xi * (1.0 - e.xi) / (e.dnu * e.dnu);
    const double dnu_dgH = e.xi * p.mu[i] * (1.0 - e.xi) / (e.dnu * e.dnu);

    out[scal + i] += e.force * S * (vE - vS);                                        // beta_i
    out[scal + 2 + i] += E * (-vE + vI + e.tau * vPc + (1.0 - e.tau) * vPu);         // sigma_i
    out[scal + 4 + i] += e.pi * I * (vH - vI) + dpi_deta * via_pi;                   // eta_i
    out[scal + 6 + i] += e.nu * H * (vD - vH) + dnu_dmu * via_nu;                    // mu_i
    out[scal + 8 + i] += (1.0 - e.pi) * I * (vR - vI) + dpi_dgI * via_pi;            // gammaI_i
    out[scal + 10 + i] += (1.0 - e.nu) * H * (vR - vH) + dnu_dgH * via_nu;           // gammaH_i
    for (int j = 0; j < 2; ++j) {
      const double dforce = (1.0 - e.alpha) * y[state_index(j, kI)] / p.population[j];
      out[scal + 12 + 2 * i + j] += p.beta[i] * S * dforce * (vE - vS);              // C_ij
    }
  }
}

StateMat EpidemicSystem::jac_y(double t, const State& y) const {
  StateMat J = StateMat::Zero();
  // assemble rows via transpose applications on unit vectors
  for (int row = 0; row < kStateDim; ++row) {
    StateVec e = StateVec::Zero();
    e[row] = 1.0;
    StateVec r = StateVec::Zero();
    add_jac_y_T_vec(t, y, e, r);  // r = J^T e = row `row` of J
    J.row(row) = r.transpose();
  }
  return J;
}

Eigen::MatrixXd EpidemicSystem::jac_theta(double t, const State& y) const {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(kStateDim, theta_dim());
  for (int row = 0; row < kStateDim; ++row) {
    StateVec e = StateVec::Zero();
    e[row] = 1.0;
    Eigen::VectorXd r = Eigen::VectorXd::Zero(theta_dim());
    add_jac_theta_T_vec(t, y, e, r);
    J.row(row) = r.transpose();
  }
  return J;
}

SensitivityBundle epidemic_sensitivities(const ParameterSet& p, double t, const StateVec& y) {
  EpidemicSystem sys(p);
  SensitivityBundle b;
  b.f_y = sys.jac_y(t, y);
  b.f_theta = sys.jac_theta(t, y);
  b.g_y = Eigen::VectorXd::Zero(kStateDim);
  b.g_theta = Eigen::VectorXd::Zero(p.theta_dim());
  return b;
}

Eigen::MatrixXd numerical_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x, double step) {
  Eigen::VectorXd fx = f(x);
  Eigen::MatrixXd J(fx.size(), x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    Eigen::VectorXd xp = x, xm = x;
    double h = step * std::max(1.0, std::abs(x[j]));
    xp[j] += h;
    xm[j] -= h;
    J.col(j) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return J;
}

FdReport fd_check(const std::function<double(const Eigen::VectorXd&)>& f,
                  const Eigen::VectorXd& theta, const Eigen::VectorXd& grad, int n_coords,
                  double step, std::uint64_t seed, const Eigen::VectorXd* lower,
                  const Eigen::VectorXd* upper) {
  FdReport report;
  const int d = static_cast<int>(theta.size());
  Rng rng(seed);
  std::vector<int> order(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) order[static_cast<std::size_t>(i)] = i;
  // seeded Fisher-Yates; take the first n_coords usable coordinates
  for (int i = d - 1; i > 0; --i)
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(rng.uniform_int(i + 1))]);

  for (int idx : order) {
    if (static_cast<int>(report.entries.size()) >= n_coords) break;
    double h = step * std::max(1.0, std::abs(theta[idx]));
    if ((lower && theta[idx] - h <= (*lower)[idx]) || (upper && theta[idx] + h >= (*upper)[idx])) {
      report.skipped.push_back(idx);
      continue;
    }
    Eigen::VectorXd tp = theta, tm = theta;
    tp[idx] += h;
    tm[idx] -= h;
    double fd = (f(tp) - f(tm)) / (2.0 * h);
    FdEntry e;
    e.coordinate = idx;
    e.analytic = grad[idx];
    e.numeric = fd;
    double denom = std::max({std::abs(fd), std::abs(grad[idx]), 1e-12});
    e.rel_error = std::abs(grad[idx] - fd) / denom;
    report.entries.push_back(e);
  }
  if (!report.entries.empty()) {
    std::vector<double> errs;
    errs.reserve(report.entries.size());
    double diff2 = 0.0, ref2 = 0.0;
    for (const auto& e : report.entries) {
      errs.push_back(e.rel_error);
      diff2 += (e.analytic - e.numeric) * (e.analytic - e.numeric);
      ref2 += e.numeric * e.numeric;
    }
    std::sort(errs.begin(), errs.end());
    report.max_rel_error = errs.back();
    report.median_rel_error = errs[errs.size() / 2];
    report.l2_rel_error = ref2 > 0.0 ? std::sqrt(diff2 / ref2) : std::sqrt(diff2);
  }
  return report;
}

}  // namespace ltcepi
