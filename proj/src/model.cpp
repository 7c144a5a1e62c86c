#include "ltcepi/model.hpp"

#include <cmath>

namespace ltcepi {

Eigen::VectorXd ParameterSet::pack() const {
  const int m = knot_count();
  Eigen::VectorXd theta(theta_dim());
  int off = 0;
  for (const auto* seq : {&alpha, &tau, &zeta, &xi}) {
    for (int i = 0; i < 2; ++i) {
      theta.segment(off, m) = (*seq)[i];
      off += m;
    }
  }
  for (int i = 0; i < 2; ++i) theta[off + i] = beta[i];
  for (int i = 0; i < 2; ++i) theta[off + 2 + i] = sigma[i];
  for (int i = 0; i < 2; ++i) theta[off + 4 + i] = eta[i];
  for (int i = 0; i < 2; ++i) theta[off + 6 + i] = mu[i];
  for (int i = 0; i < 2; ++i) theta[off + 8 + i] = gamma_I[i];
  for (int i = 0; i < 2; ++i) theta[off + 10 + i] = gamma_H[i];
  theta[off + 12] = contact(0, 0);
  theta[off + 13] = contact(0, 1);
  theta[off + 14] = contact(1, 0);
  theta[off + 15] = contact(1, 1);
  return theta;
}

ParameterSet ParameterSet::unpack(const Eigen::VectorXd& theta, const TimeGrid& grid,
                                  const Eigen::Vector2d& population) {
  ParameterSet p;
  p.grid = grid;
  p.population = population;
  const int m = grid.knot_count();
  if (theta.size() != 8 * m + 16)
    throw DomainError("unpack: theta has dimension " + std::to_string(theta.size()) +
                      ", expected " + std::to_string(8 * m + 16));
  int off = 0;
  for (auto* seq : {&p.alpha, &p.tau, &p.zeta, &p.xi}) {
    for (int i = 0; i < 2; ++i) {
      (*seq)[i] = theta.segment(off, m);
      off += m;
    }
  }
  for (int i = 0; i < 2; ++i) p.beta[i] = theta[off + i];
  for (int i = 0; i < 2; ++i) p.sigma[i] = theta[off + 2 + i];
  for (int i = 0; i < 2; ++i) p.eta[i] = theta[off + 4 + i];
  for (int i = 0; i < 2; ++i) p.mu[i] = theta[off + 6 + i];
  for (int i = 0; i < 2; ++i) p.gamma_I[i] = theta[off + 8 + i];
  for (int i = 0; i < 2; ++i) p.gamma_H[i] = theta[off + 10 + i];
  p.contact(0, 0) = theta[off + 12];
  p.contact(0, 1) = theta[off + 13];
  p.contact(1, 0) = theta[off + 14];
  p.contact(1, 1) = theta[off + 15];
  return p;
}

ParameterSet ParameterSet::reference(const TimeGrid& grid, const Eigen::Vector2d& population) {
  ParameterSet p;
  p.grid = grid;
  p.population = population;
  const int m = grid.knot_count();
  const Eigen::Vector2d tau_ref(0.40, 0.10), zeta_ref(0.25, 0.05), xi_ref(0.40, 0.10);
  for (int i = 0; i < 2; ++i) {
    p.alpha[i] = Eigen::VectorXd::Zero(m);
    p.tau[i] = Eigen::VectorXd::Constant(m, tau_ref[i]);
    p.zeta[i] = Eigen::VectorXd::Constant(m, zeta_ref[i]);
    p.xi[i] = Eigen::VectorXd::Constant(m, xi_ref[i]);
  }
  p.beta = Eigen::Vector2d(0.30, 0.30);
  p.sigma = Eigen::Vector2d(0.25, 0.25);
  p.eta = Eigen::Vector2d(0.13, 0.13);
  p.mu = Eigen::Vector2d(0.13, 0.13);
  p.gamma_I = Eigen::Vector2d(0.20, 0.20);
  p.gamma_H = Eigen::Vector2d(0.14, 0.14);
  p.contact << 4.0, 0.5, 0.1, 2.0;
  return p;
}

void ParameterSet::validate() const {
  grid.validate();
  const int m = knot_count();
  for (const auto* seq : {&alpha, &tau, &zeta, &xi}) {
    for (int i = 0; i < 2; ++i) {
      if ((*seq)[i].size() != m) throw DomainError("parameter set: knot sequence length mismatch");
      for (int j = 0; j < m; ++j) {
        double v = (*seq)[i][j];
        if (!(v >= 0.0 && v < 1.0))
          throw DomainError("parameter set: ratio value outside [0, 1)");
      }
    }
  }
  for (const auto* r : {&beta, &sigma, &eta, &mu, &gamma_I, &gamma_H}) {
    if (!((*r)[0] > 0.0 && (*r)[1] > 0.0)) throw DomainError("parameter set: nonpositive rate");
  }
  if ((contact.array() < 0.0).any()) throw DomainError("parameter set: negative contact entry");
  if (!(population[0] > 0.0 && population[1] > 0.0))
    throw DomainError("parameter set: nonpositive population");
}

double interpolate_ratio(const Eigen::VectorXd& knots, const TimeGrid& grid, double t) {
  const int m = static_cast<int>(knots.size());
  const double t0 = grid.t_start;
  if (t < t0 - 1e-12)
    throw DomainError("interpolate_ratio: t before first knot");
  const double tk = t0 + (m - 1) * grid.delta_t;
  if (t >= tk) return knots[m - 1];  // constant extension
  double s = (t - t0) / grid.delta_t;
  int j = static_cast<int>(std::floor(s));
  if (j < 0) j = 0;
  if (j > m - 2) j = m - 2;
  double w = s - j;
  return knots[j] + w * (knots[j + 1] - knots[j]);
}

double hospitalization_fraction(double zeta, double gamma_I, double eta) {
  double den = eta + (gamma_I - eta) * zeta;
  if (!(den > 0.0)) throw NumericalError("hospitalization_fraction: nonpositive denominator");
  return gamma_I * zeta / den;
}

double hospitalization_fraction_inverse(double pi, double gamma_I, double eta) {
  double den = gamma_I + (eta - gamma_I) * pi;
  if (!(den > 0.0)) throw NumericalError("hospitalization_fraction_inverse: nonpositive denominator");
  return eta * pi / den;
}

double fatality_fraction(double xi, double gamma_H, double mu) {
  double den = mu + (gamma_H - mu) * xi;
  if (!(den > 0.0)) throw NumericalError("fatality_fraction: nonpositive denominator");
  return gamma_H * xi / den;
}

double fatality_fraction_inverse(double nu, double gamma_H, double mu) {
  double den = gamma_H + (mu - gamma_H) * nu;
  if (!(den > 0.0)) throw NumericalError("fatality_fraction_inverse: nonpositive denominator");
  return mu * nu / den;
}

Eigen::Vector2d effective_transmission(const ParameterSet& p, const StateVec& y, double t) {
  Eigen::Vector2d c;
  const double i_frac_0 = y[state_index(0, kI)] / p.population[0];
  const double i_frac_1 = y[state_index(1, kI)] / p.population[1];
  for (int i = 0; i < 2; ++i) {
    double a = interpolate_ratio(p.alpha[i], p.grid, t);
    c[i] = (1.0 - a) * (p.contact(i, 0) * i_frac_0 + p.contact(i, 1) * i_frac_1);
  }
  return c;
}

StateVec rhs(double t, const StateVec& y, const ParameterSet& p) {
  if (!y.allFinite()) throw NumericalError("rhs: non-finite state");
  StateVec dy;
  Eigen::Vector2d c = effective_transmission(p, y, t);
  for (int i = 0; i < 2; ++i) {
    const int o = i * kCompartments;
    const double s = y[o + kS], e = y[o + kE], inf = y[o + kI], h = y[o + kH];
    const double tau_t = interpolate_ratio(p.tau[i], p.grid, t);
    const double zeta_t = interpolate_ratio(p.zeta[i], p.grid, t);
    const double xi_t = interpolate_ratio(p.xi[i], p.grid, t);
    const double pi = hospitalization_fraction(zeta_t, p.gamma_I[i], p.eta[i]);
    const double nu = fatality_fraction(xi_t, p.gamma_H[i], p.mu[i]);
    const double infection = p.beta[i] * c[i] * s;
    const double incubation = p.sigma[i] * e;
    dy[o + kS] = -infection;
    dy[o + kE] = infection - incubation;
    dy[o + kI] = incubation - pi * p.eta[i] * inf - (1.0 - pi) * p.gamma_I[i] * inf;
    dy[o + kH] = pi * p.eta[i] * inf - nu * p.mu[i] * h - (1.0 - nu) * p.gamma_H[i] * h;
    dy[o + kR] = (1.0 - pi) * p.gamma_I[i] * inf + (1.0 - nu) * p.gamma_H[i] * h;
    dy[o + kD] = nu * p.mu[i] * h;
    dy[o + kPc] = tau_t * incubation;
    dy[o + kPu] = (1.0 - tau_t) * incubation;
  }
  return dy;
}

StateVec initial_state(const ParameterSet& p, double exposed_1, double exposed_2) {
  StateVec y = StateVec::Zero();
  y[state_index(0, kS)] = p.population[0];
  y[state_index(1, kS)] = p.population[1];
  y[state_index(0, kE)] = exposed_1;
  y[state_index(1, kE)] = exposed_2;
  return y;
}

StateVec rk4_step(const ParameterSet& p, double t, double h, const StateVec& y) {
  StateVec k1 = rhs(t, y, p);
  StateVec k2 = rhs(t + 0.5 * h, y + (0.5 * h) * k1, p);
  StateVec k3 = rhs(t + 0.5 * h, y + (0.5 * h) * k2, p);
  StateVec k4 = rhs(t + h, y + h * k3, p);
  return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

Trajectory integrate(const ParameterSet& p, const StateVec& init, const TimeGrid& grid) {
  grid.validate();
  const int n_days = grid.days();
  const int sub = grid.substeps_per_day;
  const double h = 1.0 / sub;
  const double blowup = 10.0 * (p.population[0] + p.population[1]);

  Trajectory traj;
  traj.t_start = grid.t_start;
  traj.days.reserve(static_cast<std::size_t>(n_days) + 1);
  StateVec y = init;
  traj.days.push_back(y);
  for (int d = 0; d < n_days; ++d) {
    const double t_day = grid.t_start + d;
    for (int s = 0; s < sub; ++s) y = rk4_step(p, t_day + s * h, h, y);
    if (!y.allFinite() || (y.array().abs() > blowup).any())
      throw DivergenceError("integrate: trajectory diverged at day " +
                                std::to_string(grid.t_start + d + 1),
                            grid.t_start + d + 1);
    traj.days.push_back(y);
  }
  return traj;
}

ObservableSeries observables(const Trajectory& traj) {
  const int n = static_cast<int>(traj.days.size());
  ObservableSeries s;
  s.t_start = traj.t_start;
  s.hospitalized.resize(n);
  s.confirmed_cum.resize(n);
  s.deceased_cum.resize(n);
  for (int i = 0; i < 2; ++i) s.deceased_cum_group[i].resize(n);
  for (int d = 0; d < n; ++d) {
    const StateVec& y = traj.days[static_cast<std::size_t>(d)];
    s.hospitalized[d] = y[state_index(0, kH)] + y[state_index(1, kH)];
    s.confirmed_cum[d] = y[state_index(0, kPc)] + y[state_index(1, kPc)];
    s.deceased_cum[d] = y[state_index(0, kD)] + y[state_index(1, kD)];
    for (int i = 0; i < 2; ++i) s.deceased_cum_group[i][d] = y[state_index(i, kD)];
  }
  auto diff = [](const Eigen::VectorXd& v) {
    return Eigen::VectorXd(v.tail(v.size() - 1) - v.head(v.size() - 1));
  };
  s.confirmed_daily = diff(s.confirmed_cum);
  s.deceased_daily = diff(s.deceased_cum);
  for (int i = 0; i < 2; ++i) s.deceased_daily_group[i] = diff(s.deceased_cum_group[i]);
  return s;
}

}  // namespace ltcepi
