#include "ltcepi/inversion.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

namespace ltcepi {

bool Bounds::contains(const Eigen::VectorXd& x, double tol) const {
  return (x.array() >= lower.array() - tol).all() && (x.array() <= upper.array() + tol).all();
}

Eigen::VectorXd Bounds::project(const Eigen::VectorXd& x) const {
  return x.cwiseMax(lower).cwiseMin(upper);
}

Bounds make_bounds(const TimeGrid& grid, const PenaltyConfig& cfg, const BoundsSpec& spec) {
  const int m = grid.knot_count();
  const int d = 8 * m + 16;
  Bounds b;
  b.lower.resize(d);
  b.upper.resize(d);
  for (int i = 0; i < 2; ++i) {
    b.lower.segment((0 + i) * m, m).setZero();
    b.upper.segment((0 + i) * m, m).setConstant(spec.alpha_max);
    b.upper[(0 + i) * m] = spec.alpha_first_max;
    auto ratio_block = [&](int block, double ref) {
      b.lower.segment(block * m, m).setConstant(spec.ratio_lo * ref);
      b.upper.segment(block * m, m).setConstant(spec.ratio_hi * ref);
    };
    ratio_block(2 + i, cfg.tau_ref[i]);
    ratio_block(4 + i, cfg.zeta_ref[i]);
    ratio_block(6 + i, cfg.xi_ref[i]);
  }
  const int scal = 8 * m;
  auto scalar_pair = [&](int off, const Eigen::Vector2d& ref) {
    for (int i = 0; i < 2; ++i) {
      b.lower[scal + off + i] = spec.scalar_lo * ref[i];
      b.upper[scal + off + i] = spec.scalar_hi * ref[i];
    }
  };
  scalar_pair(0, cfg.beta_ref);
  scalar_pair(2, cfg.sigma_ref);
  scalar_pair(4, cfg.eta_ref);
  scalar_pair(6, cfg.mu_ref);
  scalar_pair(8, cfg.gamma_I_ref);
  scalar_pair(10, cfg.gamma_H_ref);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      b.lower[scal + 12 + 2 * i + j] = spec.scalar_lo * cfg.contact_ref(i, j);
      b.upper[scal + 12 + 2 * i + j] = spec.scalar_hi * cfg.contact_ref(i, j);
    }
  return b;
}

// ---- misfit over day-sampled states ----

namespace {

enum class BlockKind {
  kHospitalized,
  kConfirmedCum,
  kConfirmedDaily,
  kDeceasedCum,
  kDeceasedDaily,
  kDeceasedCum1,
  kDeceasedCum2,
  kDeceasedDaily1,
  kDeceasedDaily2,
};

BlockKind block_kind(const std::string& name) {
  if (name == "hospitalized") return BlockKind::kHospitalized;
  if (name == "confirmed_cum") return BlockKind::kConfirmedCum;
  if (name == "confirmed_daily") return BlockKind::kConfirmedDaily;
  if (name == "deceased_cum") return BlockKind::kDeceasedCum;
  if (name == "deceased_daily") return BlockKind::kDeceasedDaily;
  if (name == "deceased_cum_1") return BlockKind::kDeceasedCum1;
  if (name == "deceased_cum_2") return BlockKind::kDeceasedCum2;
  if (name == "deceased_daily_1") return BlockKind::kDeceasedDaily1;
  if (name == "deceased_daily_2") return BlockKind::kDeceasedDaily2;
  throw DomainError("unknown observation block '" + name + "'");
}

struct BlockAccess {
  bool daily = false;
  int idx_a = 0, idx_b = -1;  // state components summed into the observable
};

BlockAccess block_access(BlockKind k) {
  switch (k) {
    case BlockKind::kHospitalized:
      return {false, state_index(0, kH), state_index(1, kH)};
    case BlockKind::kConfirmedCum:
      return {false, state_index(0, kPc), state_index(1, kPc)};
    case BlockKind::kConfirmedDaily:
      return {true, state_index(0, kPc), state_index(1, kPc)};
    case BlockKind::kDeceasedCum:
      return {false, state_index(0, kD), state_index(1, kD)};
    case BlockKind::kDeceasedDaily:
      return {true, state_index(0, kD), state_index(1, kD)};
    case BlockKind::kDeceasedCum1:
      return {false, state_index(0, kD), -1};
    case BlockKind::kDeceasedCum2:
      return {false, state_index(1, kD), -1};
    case BlockKind::kDeceasedDaily1:
      return {true, state_index(0, kD), -1};
    case BlockKind::kDeceasedDaily2:
      return {true, state_index(1, kD), -1};
  }
  throw DomainError("unreachable block kind");
}

double day_states_objective(const std::vector<StateVec>& days, int t_start,
                            const ObservationSet& obs, double weight_exponent,
                            std::vector<StateVec>* day_grads) {
  const int n = static_cast<int>(days.size());
  if (day_grads) day_grads->assign(static_cast<std::size_t>(n), StateVec::Zero());
  const double floor = obs.log_floor;
  double total = 0.0;
  for (const ObservationBlock& b : obs.blocks) {
    const BlockAccess acc = block_access(block_kind(b.name));
    const double we = std::pow(b.weight, weight_exponent);
    if (b.t_start - t_start < (acc.daily ? 1 : 0) || b.t_end - t_start >= n)
      throw DomainError("observation block '" + b.name + "' outside the integrated span");
    for (int t = b.t_start; t <= b.t_end; ++t) {
      const int i = t - t_start;
      auto value_at = [&](int day_i) {
        double v = days[static_cast<std::size_t>(day_i)][acc.idx_a];
        if (acc.idx_b >= 0) v += days[static_cast<std::size_t>(day_i)][acc.idx_b];
        return v;
      };
      double m = acc.daily ? value_at(i) - value_at(i - 1) : value_at(i);
      const bool clamped = m < floor;
      const double mv = clamped ? floor : m;
      const double log_data = b.log_values[t - b.t_start] / b.weight;
      const double r = std::log(mv) - log_data;
      total += we * r * r;
      if (day_grads && !clamped) {
        const double dm = 2.0 * we * r / mv;
        auto& gi = (*day_grads)[static_cast<std::size_t>(i)];
        gi[acc.idx_a] += dm;
        if (acc.idx_b >= 0) gi[acc.idx_b] += dm;
        if (acc.daily) {
          auto& gp = (*day_grads)[static_cast<std::size_t>(i - 1)];
          gp[acc.idx_a] -= dm;
          if (acc.idx_b >= 0) gp[acc.idx_b] -= dm;
        }
      }
    }
  }
  return total;
}

TimeGrid checked_grid(const ParameterSet& p, const ObservationSet& obs) {
  TimeGrid g = p.grid;
  if (obs.t_end > g.t_end)
    throw DomainError("observations extend past the parameter grid's end day");
  return g;
}

}  // namespace

double weighted_misfit(const ParameterSet& p, const StateVec& init, const ObservationSet& obs,
                       double weight_exponent) {
  TimeGrid g = checked_grid(p, obs);
  Trajectory traj = integrate(p, init, g);
  return day_states_objective(traj.days, g.t_start, obs, weight_exponent, nullptr);
}

Eigen::VectorXd weighted_misfit_gradient(const ParameterSet& p, const StateVec& init,
                                         const ObservationSet& obs, double weight_exponent,
                                         double* value_out) {
  TimeGrid g = checked_grid(p, obs);
  EpidemicSystem sys(p);
  auto fwd = forward_solve(sys, init, g.t_start, g.days(), g.substeps_per_day, 1.0);
  const double blowup = 10.0 * (p.population[0] + p.population[1]);
  std::vector<StateVec> days(static_cast<std::size_t>(g.days()) + 1);
  for (int d = 0; d <= g.days(); ++d) {
    days[static_cast<std::size_t>(d)] = fwd.nodes[static_cast<std::size_t>(fwd.major_node(d))];
    const auto& y = days[static_cast<std::size_t>(d)];
    if (!y.allFinite() || (y.array().abs() > blowup).any())
      throw DivergenceError("trajectory diverged at day " + std::to_string(g.t_start + d),
                            g.t_start + d);
  }
  std::vector<StateVec> day_grads;
  double value = day_states_objective(days, g.t_start, obs, weight_exponent, &day_grads);
  if (value_out) *value_out = value;

  std::vector<StateVec> inj(static_cast<std::size_t>(fwd.steps()) + 1, StateVec::Zero());
  for (int d = 0; d <= g.days(); ++d)
    inj[static_cast<std::size_t>(fwd.major_node(d))] = day_grads[static_cast<std::size_t>(d)];
  auto adj = adjoint_solve(sys, fwd, inj);
  return assemble_gradient(sys, fwd, adj);
}

// ---- penalty ----

namespace {

// trapezoid-style smoothness + reference-deviation terms for one knot
// sequence; one_sided adds the decrease penalty used for alpha inside LTC
void penalty_sequence(const Eigen::VectorXd& v, double delta_t, bool one_sided, double s_t,
                      double ref, bool with_ref_term, double& acc, Eigen::VectorXd* grad,
                      int offset) {
  const int m = static_cast<int>(v.size());
  for (int j = 1; j < m; ++j) {
    const double diff = (v[j] - v[j - 1]) / delta_t;
    acc += diff * diff * delta_t;
    if (grad) {
      (*grad)[offset + j] += 2.0 * diff;
      (*grad)[offset + j - 1] -= 2.0 * diff;
    }
    if (one_sided) {
      const double dec = (v[j - 1] - v[j]) / delta_t;
      if (dec > 0.0) {
        acc += dec * dec * delta_t;
        if (grad) {
          (*grad)[offset + j - 1] += 2.0 * dec;
          (*grad)[offset + j] -= 2.0 * dec;
        }
      }
    }
  }
  if (with_ref_term) {
    for (int j = 0; j < m; ++j) {
      const double dev = (v[j] - ref) / s_t;
      acc += dev * dev * delta_t;
      if (grad) (*grad)[offset + j] += 2.0 * dev * delta_t / s_t;
    }
  }
}

void penalty_scalar(double v, double ref, double s, double& acc, Eigen::VectorXd* grad, int idx) {
  const double dev = (v - ref) / (s * ref);
  acc += dev * dev;
  if (grad) (*grad)[idx] += 2.0 * dev / (s * ref);
}

double penalty_impl(const ParameterSet& p, const PenaltyConfig& cfg, Eigen::VectorXd* grad) {
  const int m = p.knot_count();
  const double dt = p.grid.delta_t;
  if (grad) grad->setZero(p.theta_dim());
  double acc = 0.0;
  for (int i = 0; i < 2; ++i) {
    penalty_sequence(p.alpha[i], dt, i == 0, cfg.s_t, 0.0, false, acc, grad, (0 + i) * m);
    penalty_sequence(p.tau[i], dt, false, cfg.s_t, cfg.tau_ref[i], true, acc, grad, (2 + i) * m);
    penalty_sequence(p.zeta[i], dt, false, cfg.s_t, cfg.zeta_ref[i], true, acc, grad, (4 + i) * m);
    penalty_sequence(p.xi[i], dt, false, cfg.s_t, cfg.xi_ref[i], true, acc, grad, (6 + i) * m);
  }
  const int scal = 8 * m;
  for (int i = 0; i < 2; ++i) {
    penalty_scalar(p.beta[i], cfg.beta_ref[i], cfg.s, acc, grad, scal + i);
    penalty_scalar(p.sigma[i], cfg.sigma_ref[i], cfg.s, acc, grad, scal + 2 + i);
    penalty_scalar(p.eta[i], cfg.eta_ref[i], cfg.s, acc, grad, scal + 4 + i);
    penalty_scalar(p.mu[i], cfg.mu_ref[i], cfg.s, acc, grad, scal + 6 + i);
    penalty_scalar(p.gamma_I[i], cfg.gamma_I_ref[i], cfg.s, acc, grad, scal + 8 + i);
    penalty_scalar(p.gamma_H[i], cfg.gamma_H_ref[i], cfg.s, acc, grad, scal + 10 + i);
    for (int j = 0; j < 2; ++j)
      penalty_scalar(p.contact(i, j), cfg.contact_ref(i, j), cfg.s, acc, grad,
                     scal + 12 + 2 * i + j);
  }
  return acc;
}

}  // namespace

double penalty(const ParameterSet& p, const PenaltyConfig& cfg) {
  return penalty_impl(p, cfg, nullptr);
}

Eigen::VectorXd penalty_gradient(const ParameterSet& p, const PenaltyConfig& cfg) {
  Eigen::VectorXd g;
  penalty_impl(p, cfg, &g);
  return g;
}

double objective(const ParameterSet& p, const StateVec& init, const ObservationSet& obs,
                 const PenaltyConfig& cfg) {
  return weighted_misfit(p, init, obs, 1.0) + cfg.lambda * penalty(p, cfg);
}

Eigen::VectorXd objective_gradient(const ParameterSet& p, const StateVec& init,
                                   const ObservationSet& obs, const PenaltyConfig& cfg,
                                   double* value_out) {
  double f = 0.0;
  Eigen::VectorXd g = weighted_misfit_gradient(p, init, obs, 1.0, &f);
  Eigen::VectorXd gp;
  double pen = penalty_impl(p, cfg, &gp);
  g += cfg.lambda * gp;
  if (value_out) *value_out = f + cfg.lambda * pen;
  return g;
}

// ---- projected L-BFGS ----

BoxOptimResult lbfgs_box_minimize(
    const std::function<double(const Eigen::VectorXd&)>& value_fn,
    const std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>& value_grad_fn,
    const Eigen::VectorXd& x0, const Bounds& bounds, const OptimOptions& opts,
    const std::function<void(int, double, const Eigen::VectorXd&)>& observer) {
  const int d = static_cast<int>(x0.size());
  BoxOptimResult res;
  res.x = bounds.project(x0);

  Eigen::VectorXd g(d);
  double fx = value_grad_fn(res.x, g);
  res.value = fx;
  res.log.push_back({0, fx, 0.0});
  if (observer) observer(0, fx, res.x);

  std::deque<Eigen::VectorXd> mem_s, mem_y;
  std::deque<double> mem_rho;
  double first_decrease = -1.0;
  const double bound_eps = 1e-12;

  auto is_active = [&](const Eigen::VectorXd& x, const Eigen::VectorXd& grad, int i) {
    const double span = std::max(1.0, bounds.upper[i] - bounds.lower[i]);
    if (x[i] <= bounds.lower[i] + bound_eps * span && grad[i] > 0.0) return true;
    if (x[i] >= bounds.upper[i] - bound_eps * span && grad[i] < 0.0) return true;
    return false;
  };

  for (int iter = 1; iter <= opts.max_iter; ++iter) {
    Eigen::VectorXd gf = g;
    for (int i = 0; i < d; ++i)
      if (is_active(res.x, g, i)) gf[i] = 0.0;
    if (gf.norm() == 0.0) {
      res.status = OptimStatus::kConverged;
      return res;
    }

    // two-loop recursion restricted to the free subspace
    Eigen::VectorXd dir = -gf;
    std::vector<double> alpha(mem_s.size());
    for (int k = static_cast<int>(mem_s.size()) - 1; k >= 0; --k) {
      const auto ku = static_cast<std::size_t>(k);
      alpha[ku] = mem_rho[ku] * mem_s[ku].dot(dir);
      dir -= alpha[ku] * mem_y[ku];
    }
    if (!mem_s.empty()) dir *= mem_s.back().dot(mem_y.back()) / mem_y.back().squaredNorm();
    for (std::size_t k = 0; k < mem_s.size(); ++k) {
      const double beta = mem_rho[k] * mem_y[k].dot(dir);
      dir += (alpha[k] - beta) * mem_s[k];
    }
    // clip the direction to the feasible cone: no component may push a
    // coordinate out of the box it already sits on
    auto clip_to_cone = [&](Eigen::VectorXd& v) {
      for (int i = 0; i < d; ++i) {
        const double span = std::max(1.0, bounds.upper[i] - bounds.lower[i]);
        if (v[i] > 0.0 && res.x[i] >= bounds.upper[i] - bound_eps * span) v[i] = 0.0;
        if (v[i] < 0.0 && res.x[i] <= bounds.lower[i] + bound_eps * span) v[i] = 0.0;
      }
    };
    for (int i = 0; i < d; ++i)
      if (is_active(res.x, g, i)) dir[i] = 0.0;
    clip_to_cone(dir);
    if (dir.dot(g) >= 0.0) {
      dir = -gf;  // quasi-Newton direction lost descent
      clip_to_cone(dir);
      if (dir.dot(g) >= 0.0) {
        res.status = OptimStatus::kConverged;  // stationary within the box
        return res;
      }
    }

    // largest feasible step along dir before a bound clips the segment
    double t_max = std::numeric_limits<double>::infinity();
    for (int i = 0; i < d; ++i) {
      if (dir[i] > 0.0) t_max = std::min(t_max, (bounds.upper[i] - res.x[i]) / dir[i]);
      if (dir[i] < 0.0) t_max = std::min(t_max, (bounds.lower[i] - res.x[i]) / dir[i]);
    }
    if (!(t_max > 0.0)) t_max = 0.0;

    // weak-Wolfe line search (bisection bracketing) on the feasible segment
    const double c1 = 1e-4, c2 = 0.9;
    const double gd = g.dot(dir);
    double lo = 0.0, hi = std::numeric_limits<double>::infinity();
    double step = std::min(1.0, t_max);
    bool accepted = false;
    Eigen::VectorXd x_new, g_new(d);
    double f_acc = 0.0;
    bool have_grad = false;
    for (int ls = 0; ls < opts.max_linesearch && step > 0.0; ++ls) {
      x_new = bounds.project(res.x + step * dir);
      bool ok = true;
      double f_t = 0.0;
      try {
        f_t = value_grad_fn(x_new, g_new);
      } catch (const NumericalError&) {
        ok = false;
      }
      if (!ok || !std::isfinite(f_t) || f_t > fx + c1 * step * gd) {
        hi = step;
        step = 0.5 * (lo + hi);
        continue;
      }
      if (step < t_max && g_new.dot(dir) < c2 * gd) {
        lo = step;
        step = std::isfinite(hi) ? 0.5 * (lo + hi) : std::min(2.0 * step, t_max);
        if (step == lo) {  // hit the cap
          f_acc = f_t;
          have_grad = true;
          accepted = true;
          break;
        }
        continue;
      }
      f_acc = f_t;
      have_grad = true;
      accepted = true;
      break;
    }
    if (!accepted) {
      res.status = OptimStatus::kLineSearchFailure;
      res.warning = "line search failed at iteration " + std::to_string(iter) +
                    "; returning best iterate";
      return res;
    }
    (void)have_grad;

    Eigen::VectorXd s = x_new - res.x;
    Eigen::VectorXd y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      mem_s.push_back(s);
      mem_y.push_back(y);
      mem_rho.push_back(1.0 / sy);
      if (static_cast<int>(mem_s.size()) > opts.lbfgs_memory) {
        mem_s.pop_front();
        mem_y.pop_front();
        mem_rho.pop_front();
      }
    }

    const double decrease = fx - f_acc;
    res.x = x_new;
    fx = f_acc;
    g = g_new;
    res.value = fx;
    res.log.push_back({iter, fx, step});
    if (observer) observer(iter, fx, res.x);

    if (first_decrease < 0.0 && decrease > 0.0) first_decrease = decrease;
    if (first_decrease > 0.0 && decrease < opts.decrease_tol_ratio * first_decrease) {
      res.status = OptimStatus::kConverged;
      return res;
    }
  }
  res.status = OptimStatus::kMaxIterations;
  return res;
}

FitResult optimize(const ParameterSet& theta0, const StateVec& init, const ObservationSet& obs,
                   const PenaltyConfig& cfg, const Bounds& bounds, const OptimOptions& opts) {
  const TimeGrid grid = theta0.grid;
  const Eigen::Vector2d pop = theta0.population;

  auto value_fn = [&](const Eigen::VectorXd& x) {
    ParameterSet p = ParameterSet::unpack(x, grid, pop);
    return objective(p, init, obs, cfg);
  };
  auto value_grad_fn = [&](const Eigen::VectorXd& x, Eigen::VectorXd& grad) {
    ParameterSet p = ParameterSet::unpack(x, grid, pop);
    double value = 0.0;
    grad = objective_gradient(p, init, obs, cfg, &value);
    return value;
  };

  FitResult fit;
  auto observer = [&](int iter, double J, const Eigen::VectorXd& x) {
    const double G = penalty(ParameterSet::unpack(x, grid, pop), cfg);
    fit.log.push_back({iter, J, J - cfg.lambda * G, G});
  };

  BoxOptimResult r = lbfgs_box_minimize(value_fn, value_grad_fn, theta0.pack(), bounds, opts,
                                        observer);
  fit.optimum = ParameterSet::unpack(r.x, grid, pop);
  fit.G = penalty(fit.optimum, cfg);
  fit.F = r.value - cfg.lambda * fit.G;
  fit.J = r.value;
  fit.status = r.status;
  fit.warning = r.warning;
  return fit;
}

ParameterSet interpolate_to_grid(const ParameterSet& coarse, double fine_delta_t,
                                 int fine_num_knots) {
  TimeGrid fine = coarse.grid;
  fine.delta_t = fine_delta_t;
  fine.num_knots = fine_num_knots;
  ParameterSet out = coarse;
  out.grid = fine;
  const int mf = fine.knot_count();
  for (int i = 0; i < 2; ++i) {
    out.alpha[i].resize(mf);
    out.tau[i].resize(mf);
    out.zeta[i].resize(mf);
    out.xi[i].resize(mf);
    for (int j = 0; j < mf; ++j) {
      const double t = fine.knot_time(j);
      out.alpha[i][j] = interpolate_ratio(coarse.alpha[i], coarse.grid, t);
      out.tau[i][j] = interpolate_ratio(coarse.tau[i], coarse.grid, t);
      out.zeta[i][j] = interpolate_ratio(coarse.zeta[i], coarse.grid, t);
      out.xi[i][j] = interpolate_ratio(coarse.xi[i], coarse.grid, t);
    }
  }
  return out;
}

FitResult refine(const ParameterSet& coarse_opt, const StateVec& init, const ObservationSet& obs,
                 const PenaltyConfig& cfg, const BoundsSpec& bspec, const OptimOptions& opts,
                 double fine_delta_t) {
  ParameterSet theta0 = interpolate_to_grid(coarse_opt, fine_delta_t);
  Bounds bounds = make_bounds(theta0.grid, cfg, bspec);
  return optimize(theta0, init, obs, cfg, bounds, opts);
}

}  // namespace ltcepi
