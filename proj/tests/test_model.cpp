#include <doctest.h>

#include <cmath>

#include "ltcepi/model.hpp"
#include "ltcepi/rng.hpp"
#include "test_util.hpp"

using namespace ltcepi;
using testutil::make_grid;
using testutil::random_admissible;

namespace {
const Eigen::Vector2d kPop(60000.0, 8.8e6);
}

TEST_CASE("interpolate_ratio: knot exactness, midpoints, extension") {
  TimeGrid g = make_grid(14, 7.0);
  Eigen::VectorXd two(2);
  two << 0.2, 0.4;
  CHECK(interpolate_ratio(two, g, 0.0) == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(interpolate_ratio(two, g, 3.5) == doctest::Approx(0.3).epsilon(1e-15));

  Eigen::VectorXd three(3);
  three << 0.2, 0.4, 0.1;
  // hand linear interpolation on the second segment: 0.4 + (3/7)(0.1 - 0.4)
  CHECK(interpolate_ratio(three, g, 10.0) == doctest::Approx(0.4 + (3.0 / 7.0) * (0.1 - 0.4)).epsilon(1e-14));
  CHECK(interpolate_ratio(three, g, 10.0) == doctest::Approx(0.2714285714285714).epsilon(1e-12));

  // constant extension past the last knot, domain error before the first
  CHECK(interpolate_ratio(three, g, 14.0) == doctest::Approx(0.1));
  CHECK(interpolate_ratio(three, g, 200.0) == doctest::Approx(0.1));
  CHECK_THROWS_AS(interpolate_ratio(three, g, -0.5), DomainError);
}

TEST_CASE("hospitalization and fatality fractions") {
  CHECK(hospitalization_fraction(0.0, 0.20, 0.13) == 0.0);
  CHECK(hospitalization_fraction(1.0, 0.20, 0.13) == doctest::Approx(1.0).epsilon(1e-15));
  // direct substitution: 0.20*0.25 / (0.13 + 0.07*0.25)
  CHECK(hospitalization_fraction(0.25, 0.20, 0.13) == doctest::Approx(0.3389830508474576).epsilon(1e-12));

  CHECK(fatality_fraction(0.0, 0.14, 0.13) == 0.0);
  CHECK(fatality_fraction(1.0, 0.14, 0.13) == doctest::Approx(1.0).epsilon(1e-15));
  // direct substitution: 0.14*0.40 / (0.13 + 0.01*0.40)
  CHECK(fatality_fraction(0.40, 0.14, 0.13) == doctest::Approx(0.056 / 0.134).epsilon(1e-12));

  SUBCASE("monotone bijection of [0,1] onto [0,1], inverse round-trip") {
    double prev = -1.0;
    for (int k = 0; k <= 100; ++k) {
      double z = k / 100.0;
      double pi = hospitalization_fraction(z, 0.20, 0.13);
      CHECK(pi >= 0.0);
      CHECK(pi <= 1.0);
      CHECK(pi > prev);
      prev = pi;
      CHECK(hospitalization_fraction_inverse(pi, 0.20, 0.13) == doctest::Approx(z).epsilon(1e-12));
      double nu = fatality_fraction(z, 0.14, 0.13);
      CHECK(fatality_fraction_inverse(nu, 0.14, 0.13) == doctest::Approx(z).epsilon(1e-12));
    }
  }
}

TEST_CASE("effective_transmission") {
  TimeGrid g = make_grid(14, 7.0);
  ParameterSet p = ParameterSet::reference(g, Eigen::Vector2d(100.0, 1000.0));
  StateVec y = initial_state(p, 0.0, 0.0);

  SUBCASE("no infectious means no force") {
    Eigen::Vector2d c = effective_transmission(p, y, 0.0);
    CHECK(c[0] == 0.0);
    CHECK(c[1] == 0.0);
  }
  SUBCASE("alpha at one suppresses everything") {
    y[state_index(0, kI)] = 10.0;
    ParameterSet q = p;
    for (int i = 0; i < 2; ++i) q.alpha[i].setConstant(1.0 - 1e-16);
    Eigen::Vector2d c = effective_transmission(q, y, 3.0);
    CHECK(c[0] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(c[1] == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("hand 2x2 product") {
    // I_1/N_1 = 0.01, I_2/N_2 = 0.001, alpha = 0
    y[state_index(0, kI)] = 1.0;
    y[state_index(1, kI)] = 1.0;
    Eigen::Vector2d c = effective_transmission(p, y, 0.0);
    CHECK(c[0] == doctest::Approx(4.0 * 0.01 + 0.5 * 0.001).epsilon(1e-14));  // 0.0405
    CHECK(c[1] == doctest::Approx(0.1 * 0.01 + 2.0 * 0.001).epsilon(1e-14));  // 0.003
  }
}

TEST_CASE("rhs: disease-free equilibrium, no transmission, reference seed") {
  TimeGrid g = make_grid(14, 7.0);
  ParameterSet p = ParameterSet::reference(g, kPop);

  SUBCASE("E = I = 0 gives zero derivative") {
    StateVec y = initial_state(p, 0.0, 0.0);
    y[state_index(0, kR)] = 5.0;
    CHECK(rhs(0.0, y, p).norm() == 0.0);
  }
  SUBCASE("beta = 0 decouples exposure") {
    ParameterSet q = p;
    q.beta.setConstant(1e-300);  // rates must stay positive
    StateVec y = initial_state(q, 3.0, 0.0);
    StateVec dy = rhs(0.0, y, q);
    CHECK(dy[state_index(0, kS)] == doctest::Approx(0.0));
    CHECK(dy[state_index(0, kE)] == doctest::Approx(-q.sigma[0] * 3.0));
  }
  SUBCASE("single-term evaluation at the reference initialization") {
    StateVec y = initial_state(p, 1.0, 100.0);
    StateVec dy = rhs(0.0, y, p);
    CHECK(dy[state_index(0, kE)] == doctest::Approx(-0.25).epsilon(1e-14));
    CHECK(dy[state_index(0, kPc)] == doctest::Approx(0.4 * 0.25 * 1.0).epsilon(1e-14));
  }
  SUBCASE("structural conservation of rhs") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
      ParameterSet q = random_admissible(g, kPop, rng);
      StateVec y;
      for (int j = 0; j < kStateDim; ++j) y[j] = rng.uniform(0.0, 1000.0);
      StateVec dy = rhs(rng.uniform(0.0, 14.0), y, q);
      for (int i = 0; i < 2; ++i) {
        const int o = i * kCompartments;
        double mass = dy.segment<6>(o).sum();  // S,E,I,H,R,D
        CHECK(std::abs(mass) < 1e-9 * y.segment<6>(o).cwiseAbs().maxCoeff());
        CHECK(dy[o + kPc] + dy[o + kPu] ==
              doctest::Approx(q.sigma[i] * y[o + kE]).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("integrate: constant disease-free trajectory") {
  TimeGrid g = make_grid(30, 7.0);
  ParameterSet p = ParameterSet::reference(g, kPop);
  StateVec y0 = initial_state(p, 0.0, 0.0);
  Trajectory traj = integrate(p, y0, g);
  REQUIRE(static_cast<int>(traj.days.size()) == 31);
  for (const auto& y : traj.days) CHECK((y - y0).norm() == 0.0);
}

TEST_CASE("integrate: conservation and infection ledger over random draws") {
  TimeGrid g = make_grid(120, 7.0);
  Rng rng(42);
  for (int trial = 0; trial < 5; ++trial) {
    ParameterSet p = random_admissible(g, kPop, rng);
    StateVec y0 = initial_state(p, 1.0, 100.0);
    Trajectory traj = integrate(p, y0, g);
    Eigen::Vector2d mass0;
    for (int i = 0; i < 2; ++i) mass0[i] = y0.segment<6>(i * kCompartments).sum();
    for (const auto& y : traj.days) {
      for (int i = 0; i < 2; ++i) {
        const int o = i * kCompartments;
        double mass = y.segment<6>(o).sum();
        CHECK(std::abs(mass - mass0[i]) / p.population[i] < 1e-8);
        double ledger = y[o + kPc] + y[o + kPu] -
                        (y[o + kI] + y[o + kH] + y[o + kR] + y[o + kD]);
        CHECK(std::abs(ledger) / p.population[i] < 1e-8);
        for (int c = 0; c < kCompartments; ++c) CHECK(y[o + c] >= -1e-9 * p.population[i]);
      }
    }
  }
}

TEST_CASE("integrate: agreement with a 100x finer reference run") {
  TimeGrid g = make_grid(30, 7.0);
  Rng rng(3);
  ParameterSet p = random_admissible(g, kPop, rng);
  StateVec y0 = initial_state(p, 1.0, 100.0);
  Trajectory coarse = integrate(p, y0, g);
  TimeGrid fine = g;
  fine.substeps_per_day = g.substeps_per_day * 100;
  Trajectory ref = integrate(p, y0, fine);
  const double floor = 1e-6 * (kPop[0] + kPop[1]);
  for (std::size_t d = 0; d < ref.days.size(); ++d) {
    for (int j = 0; j < kStateDim; ++j) {
      double denom = std::max(std::abs(ref.days[d][j]), floor);
      CHECK(std::abs(coarse.days[d][j] - ref.days[d][j]) / denom < 1e-6);
    }
  }
}

TEST_CASE("integrate: empirical order of the scheme is at least 3.5") {
  // strong dynamics so truncation error dominates roundoff
  TimeGrid g = make_grid(10, 7.0, 1);
  ParameterSet p = ParameterSet::reference(g, Eigen::Vector2d(500.0, 5000.0));
  p.beta.setConstant(2.0);
  p.sigma.setConstant(1.0);
  p.gamma_I.setConstant(0.9);
  p.eta.setConstant(0.7);
  StateVec y0 = initial_state(p, 1.0, 50.0);

  auto final_state = [&](int sub) {
    TimeGrid gg = g;
    gg.substeps_per_day = sub;
    return integrate(p, y0, gg).days.back();
  };
  StateVec ref = final_state(512);
  double e1 = (final_state(2) - ref).norm();
  double e2 = (final_state(4) - ref).norm();
  double order = std::log2(e1 / e2);
  CHECK(order >= 3.5);
}

TEST_CASE("integrate: blow-up detection names the offending day") {
  TimeGrid g = make_grid(5, 7.0);
  ParameterSet p = ParameterSet::reference(g, Eigen::Vector2d(1.0, 1.0));
  StateVec y0 = StateVec::Zero();
  y0[state_index(0, kS)] = 1000.0;  // far above 10 * (N1 + N2)
  y0[state_index(0, kE)] = 1.0;
  try {
    integrate(p, y0, g);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.day == 1);
  }
}

TEST_CASE("observables: first differences and re-accumulation oracle") {
  SUBCASE("constant D gives zero daily deaths") {
    Trajectory traj;
    traj.t_start = 0;
    for (int d = 0; d < 4; ++d) {
      StateVec y = StateVec::Zero();
      y[state_index(0, kD)] = 10.0;
      traj.days.push_back(y);
    }
    ObservableSeries s = observables(traj);
    CHECK(s.deceased_daily.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("D = (10,12,15) gives d = (2,3)") {
    Trajectory traj;
    traj.t_start = 0;
    for (double v : {10.0, 12.0, 15.0}) {
      StateVec y = StateVec::Zero();
      y[state_index(1, kD)] = v;
      traj.days.push_back(y);
    }
    ObservableSeries s = observables(traj);
    REQUIRE(s.deceased_daily.size() == 2);
    CHECK(s.deceased_daily[0] == 2.0);
    CHECK(s.deceased_daily[1] == 3.0);
  }
  SUBCASE("all series against a brute-force re-summation") {
    TimeGrid g = make_grid(60, 7.0);
    Rng rng(11);
    ParameterSet p = random_admissible(g, kPop, rng);
    Trajectory traj = integrate(p, initial_state(p, 1.0, 100.0), g);
    ObservableSeries s = observables(traj);
    // prefix sums of dailies must reproduce cumulatives exactly
    double acc = s.confirmed_cum[0];
    for (int d = 1; d <= 60; ++d) {
      acc += s.confirmed_daily[d - 1];
      CHECK(acc == doctest::Approx(s.confirmed_cum[d]).epsilon(1e-12));
    }
    for (int d = 0; d <= 60; ++d) {
      const StateVec& y = traj.days[static_cast<std::size_t>(d)];
      CHECK(s.hospitalized[d] ==
            doctest::Approx(y[state_index(0, kH)] + y[state_index(1, kH)]).epsilon(1e-15));
      CHECK(s.deceased_cum[d] ==
            doctest::Approx(y[state_index(0, kD)] + y[state_index(1, kD)]).epsilon(1e-15));
      for (int i = 0; i < 2; ++i)
        CHECK(s.deceased_cum_group[i][d] == doctest::Approx(y[state_index(i, kD)]));
    }
    // monotone cumulative outputs
    for (int d = 1; d <= 60; ++d) {
      CHECK(s.confirmed_cum[d] >= s.confirmed_cum[d - 1]);
      CHECK(s.deceased_cum[d] >= s.deceased_cum[d - 1]);
      for (int i = 0; i < 2; ++i)
        CHECK(s.deceased_cum_group[i][d] >= s.deceased_cum_group[i][d - 1]);
    }
  }
}

TEST_CASE("pack/unpack round-trip") {
  TimeGrid g = make_grid(21, 7.0);
  Rng rng(5);
  ParameterSet p = random_admissible(g, kPop, rng);
  Eigen::VectorXd theta = p.pack();
  CHECK(theta.size() == p.theta_dim());
  ParameterSet q = ParameterSet::unpack(theta, g, kPop);
  CHECK((q.pack() - theta).norm() == 0.0);
  CHECK(q.contact(0, 1) == p.contact(0, 1));
  CHECK((q.xi[1] - p.xi[1]).norm() == 0.0);
}
