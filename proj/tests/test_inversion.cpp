#include <doctest.h>

#include <cmath>

#include "ltcepi/inversion.hpp"
#include "ltcepi/rng.hpp"
#include "test_util.hpp"

using namespace ltcepi;
using testutil::make_grid;
using testutil::random_admissible;

namespace {

const Eigen::Vector2d kPop(6e4, 8.8e6);

ParameterSet smooth_truth(const TimeGrid& g) {
  ParameterSet p = ParameterSet::reference(g, kPop);
  const int m = g.knot_count();
  for (int j = 0; j < m; ++j) {
    double s = static_cast<double>(j) / std::max(1, m - 1);
    p.alpha[0][j] = std::min(0.75, 0.85 * s);  // ramping mitigation inside LTC
    p.alpha[1][j] = std::min(0.65, 0.75 * s);
    p.tau[0][j] = 0.40 + 0.05 * s;
    p.tau[1][j] = 0.10 + 0.04 * s;
    p.zeta[0][j] = 0.25 - 0.03 * s;
    p.zeta[1][j] = 0.05 + 0.01 * s;
    p.xi[0][j] = 0.40 - 0.05 * s;
    p.xi[1][j] = 0.10 - 0.02 * s;
  }
  p.alpha[0][0] = std::min(p.alpha[0][0], 0.1);
  p.alpha[1][0] = std::min(p.alpha[1][0], 0.1);
  return p;
}

// noiseless twin observations through the (unsmoothed) data pipeline
ObservationSet twin_observations(const ParameterSet& truth) {
  Trajectory traj = integrate(truth, initial_state(truth, 1.0, 100.0), truth.grid);
  ObservableSeries s = observables(traj);
  StateStream state = state_stream_from_observables(s, "2020-03-01");
  LtcStream ltc = ltc_stream_from_observables(s, 0);
  return run_data_pipeline(state, ltc, false, 0.5).obs;
}

}  // namespace

TEST_CASE("misfit: zero at the generating parameters, one unit per factor e") {
  TimeGrid g = make_grid(49, 7.0);
  ParameterSet truth = smooth_truth(g);
  ObservationSet obs = twin_observations(truth);
  StateVec init = initial_state(truth, 1.0, 100.0);

  double f0 = misfit(truth, init, obs);
  CHECK(f0 < 1e-12);

  SUBCASE("single weight-one entry off by factor e adds one") {
    ObservationSet obs2 = obs;
    for (auto& b : obs2.blocks)
      if (b.name == "confirmed_cum") b.log_values[b.size() / 2] += 1.0;  // data scaled by e
    double f1 = misfit(truth, init, obs2);
    CHECK(f1 == doctest::Approx(1.0).epsilon(1e-9));
  }
  SUBCASE("daily block entry off by factor e adds 0.1") {
    ObservationSet obs2 = obs;
    for (auto& b : obs2.blocks)
      if (b.name == "confirmed_daily") b.log_values[b.size() / 2] += 0.1;  // 0.1 * log e
    double f1 = misfit(truth, init, obs2);
    CHECK(f1 == doctest::Approx(0.1).epsilon(1e-9));
  }
}

TEST_CASE("misfit: term-by-term summation oracle") {
  TimeGrid g = make_grid(35, 7.0);
  Rng rng(3);
  ParameterSet truth = smooth_truth(g);
  ObservationSet obs = twin_observations(truth);
  ParameterSet other = random_admissible(g, kPop, rng);
  StateVec init = initial_state(other, 1.0, 100.0);

  // independent path: observables + direct block sums
  Trajectory traj = integrate(other, init, g);
  ObservableSeries s = observables(traj);
  auto series_value = [&](const std::string& name, int t) -> double {
    if (name == "hospitalized") return s.hospitalized[t];
    if (name == "confirmed_cum") return s.confirmed_cum[t];
    if (name == "confirmed_daily") return s.confirmed_daily[t - 1];
    if (name == "deceased_cum") return s.deceased_cum[t];
    if (name == "deceased_daily") return s.deceased_daily[t - 1];
    if (name == "deceased_cum_1") return s.deceased_cum_group[0][t];
    if (name == "deceased_cum_2") return s.deceased_cum_group[1][t];
    if (name == "deceased_daily_1") return s.deceased_daily_group[0][t - 1];
    if (name == "deceased_daily_2") return s.deceased_daily_group[1][t - 1];
    FAIL("unknown block");
    return 0.0;
  };
  double expect = 0.0;
  for (const auto& b : obs.blocks)
    for (int t = b.t_start; t <= b.t_end; ++t) {
      double m = std::max(series_value(b.name, t), obs.log_floor);
      double r = std::log(m) - b.log_values[t - b.t_start] / b.weight;
      expect += b.weight * r * r;
    }
  CHECK(misfit(other, init, obs) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("penalty") {
  TimeGrid g = make_grid(28, 7.0);
  PenaltyConfig cfg;
  ParameterSet refs = ParameterSet::reference(g, kPop);

  SUBCASE("zero when everything sits at the references") {
    CHECK(penalty(refs, cfg) == 0.0);
  }
  SUBCASE("alpha_1 drop of 0.07 across one knot costs 1.4e-3") {
    ParameterSet p = refs;
    p.alpha[0].setConstant(0.07);
    p.alpha[0].segment(1, p.alpha[0].size() - 1).setZero();
    CHECK(penalty(p, cfg) == doctest::Approx(1.4e-3).epsilon(1e-12));
    // gradient of the two affected terms by hand: d/d(alpha[0]) = 0.04
    Eigen::VectorXd gp = penalty_gradient(p, cfg);
    CHECK(gp[0] == doctest::Approx(0.04).epsilon(1e-12));
  }
  SUBCASE("alpha_1 increase has no one-sided term") {
    ParameterSet p = refs;
    p.alpha[0].setZero();
    p.alpha[0].segment(1, p.alpha[0].size() - 1).setConstant(0.07);
    CHECK(penalty(p, cfg) == doctest::Approx(7e-4).epsilon(1e-12));
  }
  SUBCASE("alpha_2 decrease has no one-sided term") {
    ParameterSet p = refs;
    p.alpha[1].setConstant(0.07);
    p.alpha[1].segment(1, p.alpha[1].size() - 1).setZero();
    CHECK(penalty(p, cfg) == doctest::Approx(7e-4).epsilon(1e-12));
  }
  SUBCASE("doubled beta_1 contributes (1/s)^2 = 0.04") {
    ParameterSet p = refs;
    p.beta[0] = 2.0 * cfg.beta_ref[0];
    CHECK(penalty(p, cfg) == doctest::Approx(0.04).epsilon(1e-12));
  }
  SUBCASE("gradient passes finite differences") {
    Rng rng(7);
    ParameterSet p = random_admissible(g, kPop, rng);
    auto f = [&](const Eigen::VectorXd& th) {
      return penalty(ParameterSet::unpack(th, g, kPop), cfg);
    };
    FdReport rep = fd_check(f, p.pack(), penalty_gradient(p, cfg), 30, 1e-6, 11);
    CHECK(rep.l2_rel_error < 1e-7);
  }
}

TEST_CASE("objective composition and gradient") {
  TimeGrid g = make_grid(30, 7.0);
  ParameterSet truth = smooth_truth(g);
  ObservationSet obs = twin_observations(truth);
  StateVec init = initial_state(truth, 1.0, 100.0);
  PenaltyConfig cfg;

  SUBCASE("J = F + lambda G") {
    Rng rng(19);
    ParameterSet p = random_admissible(g, kPop, rng);
    double F = misfit(p, init, obs);
    double G = penalty(p, cfg);
    CHECK(objective(p, init, obs, cfg) == doctest::Approx(F + cfg.lambda * G).epsilon(1e-14));
  }
  SUBCASE("gradient consistency against central differences") {
    Rng rng(23);
    for (int trial = 0; trial < 3; ++trial) {
      ParameterSet p = random_admissible(g, kPop, rng);
      double value = 0.0;
      Eigen::VectorXd grad = objective_gradient(p, init, obs, cfg, &value);
      CHECK(value == doctest::Approx(objective(p, init, obs, cfg)).epsilon(1e-12));
      auto f = [&](const Eigen::VectorXd& th) {
        return objective(ParameterSet::unpack(th, g, kPop), init, obs, cfg);
      };
      FdReport rep = fd_check(f, p.pack(), grad, 16, 1e-6, 100 + trial);
      CAPTURE(rep.max_rel_error);
      CHECK(rep.l2_rel_error < 1e-6);
    }
  }
}

TEST_CASE("lbfgs_box_minimize") {
  OptimOptions opts;
  SUBCASE("already optimal: no movement") {
    Eigen::VectorXd c = Eigen::VectorXd::Constant(4, 0.3);
    Bounds b{Eigen::VectorXd::Zero(4), Eigen::VectorXd::Ones(4)};
    auto v = [&](const Eigen::VectorXd& x) { return (x - c).squaredNorm(); };
    auto vg = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
      g = 2.0 * (x - c);
      return (x - c).squaredNorm();
    };
    BoxOptimResult r = lbfgs_box_minimize(v, vg, c, b, opts);
    CHECK((r.x - c).norm() == 0.0);
    CHECK(r.status == OptimStatus::kConverged);
  }
  SUBCASE("minimizer outside the box lands on the boundary projection") {
    // f = (x0 - 2)^2 + (x1 + 1)^2 over [0,1]^2; KKT point is (1, 0)
    Bounds b{Eigen::VectorXd::Zero(2), Eigen::VectorXd::Ones(2)};
    auto v = [](const Eigen::VectorXd& x) {
      return (x[0] - 2.0) * (x[0] - 2.0) + (x[1] + 1.0) * (x[1] + 1.0);
    };
    auto vg = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
      g.resize(2);
      g << 2.0 * (x[0] - 2.0), 2.0 * (x[1] + 1.0);
      return (x[0] - 2.0) * (x[0] - 2.0) + (x[1] + 1.0) * (x[1] + 1.0);
    };
    Eigen::VectorXd x0(2);
    x0 << 0.5, 0.5;
    BoxOptimResult r = lbfgs_box_minimize(v, vg, x0, b, opts);
    CHECK(r.x[0] == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(r.x[1] == doctest::Approx(0.0).epsilon(1e-10));
  }
  SUBCASE("rosenbrock in a box converges") {
    Bounds b{Eigen::VectorXd::Constant(2, -2.0), Eigen::VectorXd::Constant(2, 2.0)};
    auto v = [](const Eigen::VectorXd& x) {
      double a = 1.0 - x[0], c = x[1] - x[0] * x[0];
      return a * a + 100.0 * c * c;
    };
    auto vg = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
      double a = 1.0 - x[0], c = x[1] - x[0] * x[0];
      g.resize(2);
      g << -2.0 * a - 400.0 * x[0] * c, 200.0 * c;
      return a * a + 100.0 * c * c;
    };
    Eigen::VectorXd x0(2);
    x0 << -1.2, 1.0;
    OptimOptions o2;
    o2.max_iter = 400;
    o2.decrease_tol_ratio = 0.0;
    BoxOptimResult r = lbfgs_box_minimize(v, vg, x0, b, o2);
    CHECK((r.x - Eigen::VectorXd::Ones(2)).norm() < 1e-5);
  }
  SUBCASE("line-search failure returns best iterate with a warning") {
    Bounds b{Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1)};
    auto v = [](const Eigen::VectorXd& x) -> double {
      if (x[0] != 0.5) throw NumericalError("poisoned evaluation");
      return 1.0;
    };
    auto vg = [](const Eigen::VectorXd&, Eigen::VectorXd& g) {
      g.resize(1);
      g << 1.0;
      return 1.0;
    };
    Eigen::VectorXd x0(1);
    x0 << 0.5;
    BoxOptimResult r = lbfgs_box_minimize(v, vg, x0, b, opts);
    CHECK(r.status == OptimStatus::kLineSearchFailure);
    CHECK(r.x[0] == 0.5);
    CHECK(!r.warning.empty());
  }
}

TEST_CASE("optimize: descent log and alpha-only identifiability") {
  TimeGrid g = make_grid(35, 7.0);
  ParameterSet truth = smooth_truth(g);
  ObservationSet obs = twin_observations(truth);
  StateVec init = initial_state(truth, 1.0, 100.0);

  PenaltyConfig cfg;
  cfg.lambda = 0.0;  // pure misfit: identifiability at fixed nuisance
  ParameterSet theta0 = truth;
  for (int i = 0; i < 2; ++i) theta0.alpha[i].setZero();

  // freeze everything except the alpha blocks at the truth
  Bounds bounds = make_bounds(g, cfg, {});
  const int m = g.knot_count();
  Eigen::VectorXd truth_vec = truth.pack();
  for (int idx = 2 * m; idx < truth_vec.size(); ++idx) {
    bounds.lower[idx] = truth_vec[idx];
    bounds.upper[idx] = truth_vec[idx];
  }

  OptimOptions opts;
  opts.max_iter = 2500;
  opts.decrease_tol_ratio = 0.0;
  opts.lbfgs_memory = 25;
  FitResult fit = optimize(theta0, init, obs, cfg, bounds, opts);

  for (std::size_t k = 1; k < fit.log.size(); ++k)
    CHECK(fit.log[k].J <= fit.log[k - 1].J + 1e-12);
  CHECK(bounds.contains(fit.optimum.pack(), 1e-12));
  CAPTURE(fit.F);
  CHECK(fit.F < 1e-6);
  // recovered alpha close to the generating curves
  for (int i = 0; i < 2; ++i) {
    double rms = std::sqrt((fit.optimum.alpha[i] - truth.alpha[i]).squaredNorm() /
                           truth.alpha[i].size());
    CHECK(rms < 0.05);
  }
}

TEST_CASE("refine: interpolation table and descent guarantee") {
  SUBCASE("coarse knots (0.2, 0.4) interpolate to the daily table") {
    TimeGrid g = make_grid(7, 7.0);
    ParameterSet coarse = ParameterSet::reference(g, kPop);
    coarse.alpha[0][0] = 0.2;
    coarse.alpha[0][1] = 0.4;
    ParameterSet fine = interpolate_to_grid(coarse, 1.0);
    REQUIRE(fine.knot_count() == 8);
    for (int j = 0; j <= 7; ++j)
      CHECK(fine.alpha[0][j] == doctest::Approx(0.2 + j * 0.2 / 7.0).epsilon(1e-14));
  }
  SUBCASE("constant coarse solution stays constant") {
    TimeGrid g = make_grid(21, 7.0);
    ParameterSet coarse = ParameterSet::reference(g, kPop);
    ParameterSet fine = interpolate_to_grid(coarse, 1.0);
    CHECK(fine.tau[1].minCoeff() == fine.tau[1].maxCoeff());
  }
  SUBCASE("fine optimum does not exceed the interpolated coarse optimum") {
    TimeGrid g = make_grid(28, 7.0);
    ParameterSet truth = smooth_truth(g);
    ObservationSet obs = twin_observations(truth);
    StateVec init = initial_state(truth, 1.0, 100.0);
    PenaltyConfig cfg;
    Bounds bounds = make_bounds(g, cfg, {});
    OptimOptions opts;
    opts.max_iter = 25;
    FitResult coarse = optimize(ParameterSet::reference(g, kPop), init, obs, cfg, bounds, opts);
    ParameterSet interp = interpolate_to_grid(coarse.optimum, 1.0);
    double j_interp = objective(interp, init, obs, cfg);
    OptimOptions fine_opts;
    fine_opts.max_iter = 15;
    FitResult fine = refine(coarse.optimum, init, obs, cfg, {}, fine_opts);
    CHECK(fine.J <= j_interp + 1e-10);
  }
}
