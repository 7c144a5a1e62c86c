#pragma once

#include <array>
#include <functional>
#include <vector>

#include "ltcepi/model.hpp"

namespace ltcepi {

/// Fixed-step RK4 forward solve retaining every node state and the four
/// stage slopes per step, for use by the discrete adjoint.
///
/// The time axis is major steps (days for the epidemic system) of width
/// major_dt, each split into n_sub RK4 substeps; time arguments are computed
/// exactly as in integrate() so day states agree bitwise.
///
/// System concept:
///   using State = fixed or dynamic Eigen column vector;
///   State rhs(double t, const State& y) const;
///   void add_jac_y_T_vec(double t, const State& y, const State& v, State& out) const;
///   void add_jac_theta_T_vec(double t, const State& y, const State& v, Eigen::VectorXd& out) const;
///   int theta_dim() const;
template <class System>
struct ForwardTrajectory {
  double t0 = 0.0;
  double major_dt = 1.0;
  int n_major = 0;
  int n_sub = 1;
  std::vector<typename System::State> nodes;                  // n_major*n_sub + 1
  std::vector<std::array<typename System::State, 4>> stages;  // k1..k4 per step

  int steps() const { return n_major * n_sub; }
  double h() const { return major_dt / n_sub; }
  double node_time(int n) const {
    int m = n / n_sub, s = n % n_sub;
    return t0 + m * major_dt + s * h();
  }
  int major_node(int m) const { return m * n_sub; }
};

template <class System>
ForwardTrajectory<System> forward_solve(const System& sys, const typename System::State& y0,
                                        double t0, int n_major, int n_sub, double major_dt) {
  ForwardTrajectory<System> f;
  f.t0 = t0;
  f.major_dt = major_dt;
  f.n_major = n_major;
  f.n_sub = n_sub;
  const double h = f.h();
  f.nodes.reserve(static_cast<std::size_t>(f.steps()) + 1);
  f.stages.reserve(static_cast<std::size_t>(f.steps()));
  typename System::State y = y0;
  f.nodes.push_back(y);
  for (int m = 0; m < n_major; ++m) {
    const double t_major = t0 + m * major_dt;
    for (int s = 0; s < n_sub; ++s) {
      const double t = t_major + s * h;
      typename System::State k1 = sys.rhs(t, y);
      typename System::State k2 = sys.rhs(t + 0.5 * h, y + (0.5 * h) * k1);
      typename System::State k3 = sys.rhs(t + 0.5 * h, y + (0.5 * h) * k2);
      typename System::State k4 = sys.rhs(t + h, y + h * k3);
      f.stages.push_back({k1, k2, k3, k4});
      y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      f.nodes.push_back(y);
    }
  }
  return f;
}

/// Costates from the backward sweep. lambda[n] follows the costate sign
/// convention of lambda' = -J_y^T lambda + g_y with lambda(T) = 0, i.e. it is
/// minus the sensitivity of the objective to a state perturbation at node n
/// propagated from later nodes only (so lambda.back() is exactly zero).
/// stage_costates hold the reverse-mode stage multipliers consumed by
/// assemble_gradient.
template <class System>
struct AdjointSolution {
  std::vector<typename System::State> lambda;
  std::vector<std::array<typename System::State, 4>> stage_costates;
};

/// Reverse sweep of the discrete RK4 scheme. node_injections[n] is the
/// direct derivative of the objective with respect to the state at node n
/// (zero at nodes the objective does not touch).
template <class System>
AdjointSolution<System> adjoint_solve(const System& sys, const ForwardTrajectory<System>& fwd,
                                      const std::vector<typename System::State>& node_injections) {
  using State = typename System::State;
  const int n_steps = fwd.steps();
  const double h = fwd.h();
  const State zero = State::Zero(fwd.nodes[0].size());

  AdjointSolution<System> adj;
  adj.lambda.assign(static_cast<std::size_t>(n_steps) + 1, zero);
  adj.stage_costates.assign(static_cast<std::size_t>(n_steps), {zero, zero, zero, zero});

  State mu = node_injections[static_cast<std::size_t>(n_steps)];
  for (int n = n_steps - 1; n >= 0; --n) {
    const State& y = fwd.nodes[static_cast<std::size_t>(n)];
    const auto& k = fwd.stages[static_cast<std::size_t>(n)];
    const double t = fwd.node_time(n);
    const State z2 = y + (0.5 * h) * k[0];
    const State z3 = y + (0.5 * h) * k[1];
    const State z4 = y + h * k[2];

    State bk1 = (h / 6.0) * mu;
    State bk2 = (h / 3.0) * mu;
    State bk3 = (h / 3.0) * mu;
    State bk4 = (h / 6.0) * mu;
    State acc = mu;

    State w = zero;
    sys.add_jac_y_T_vec(t + h, z4, bk4, w);
    acc += w;
    bk3 += h * w;

    w.setZero();
    sys.add_jac_y_T_vec(t + 0.5 * h, z3, bk3, w);
    acc += w;
    bk2 += (0.5 * h) * w;

    w.setZero();
    sys.add_jac_y_T_vec(t + 0.5 * h, z2, bk2, w);
    acc += w;
    bk1 += (0.5 * h) * w;

    w.setZero();
    sys.add_jac_y_T_vec(t, y, bk1, w);
    acc += w;

    adj.stage_costates[static_cast<std::size_t>(n)] = {bk1, bk2, bk3, bk4};
    adj.lambda[static_cast<std::size_t>(n)] = -acc;
    mu = acc + node_injections[static_cast<std::size_t>(n)];
  }
  return adj;
}

/// Accumulate the parameter gradient from the stored stage costates:
/// grad = sum over stage evaluation points of (df/dtheta)^T * stage costate.
/// Direct theta-dependence of the objective must be added by the caller.
template <class System>
Eigen::VectorXd assemble_gradient(const System& sys, const ForwardTrajectory<System>& fwd,
                                  const AdjointSolution<System>& adj) {
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(sys.theta_dim());
  const double h = fwd.h();
  for (int n = 0; n < fwd.steps(); ++n) {
    const auto& y = fwd.nodes[static_cast<std::size_t>(n)];
    const auto& k = fwd.stages[static_cast<std::size_t>(n)];
    const auto& a = adj.stage_costates[static_cast<std::size_t>(n)];
    const double t = fwd.node_time(n);
    sys.add_jac_theta_T_vec(t, y, a[0], grad);
    sys.add_jac_theta_T_vec(t + 0.5 * h, y + (0.5 * h) * k[0], a[1], grad);
    sys.add_jac_theta_T_vec(t + 0.5 * h, y + (0.5 * h) * k[1], a[2], grad);
    sys.add_jac_theta_T_vec(t + h, y + h * k[2], a[3], grad);
  }
  return grad;
}

/// The compartmental model as an adjoint-capable system over the packed
/// theta vector. Jacobians are hand-derived closed forms.
class EpidemicSystem {
 public:
  using State = StateVec;

  explicit EpidemicSystem(const ParameterSet& p) : p_(&p) {}

  State rhs(double t, const State& y) const { return ltcepi::rhs(t, y, *p_); }
  int theta_dim() const { return p_->theta_dim(); }

  void add_jac_y_T_vec(double t, const State& y, const State& v, State& out) const;
  void add_jac_theta_T_vec(double t, const State& y, const State& v, Eigen::VectorXd& out) const;

  /// Dense Jacobians assembled from the closed forms (test/diagnostic path).
  StateMat jac_y(double t, const State& y) const;
  Eigen::MatrixXd jac_theta(double t, const State& y) const;

  const ParameterSet& params() const { return *p_; }

 private:
  const ParameterSet* p_;
};

/// Closed-form partial derivatives of the model right-hand side at one
/// evaluation point, in the shapes the continuous adjoint works with.
struct SensitivityBundle {
  Eigen::MatrixXd f_y;      // 16 x 16
  Eigen::MatrixXd f_theta;  // 16 x dim(theta)
  Eigen::VectorXd g_y;      // 16
  Eigen::VectorXd g_theta;  // dim(theta)
};

SensitivityBundle epidemic_sensitivities(const ParameterSet& p, double t, const StateVec& y);

/// Slow centered-difference Jacobians of a vector field, used to validate
/// the closed forms above.
Eigen::MatrixXd numerical_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x, double step = 1e-6);

/// Per-coordinate central finite-difference verification of a gradient.
struct FdEntry {
  int coordinate = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct FdReport {
  std::vector<FdEntry> entries;
  std::vector<int> skipped;  // coordinates at (or within step of) a bound
  double max_rel_error = 0.0;
  double median_rel_error = 0.0;
  double l2_rel_error = 0.0;  // ||analytic - numeric|| / ||numeric|| over the sample

  bool pass(double tol) const { return !entries.empty() && max_rel_error <= tol; }
};

/// Samples n_coords distinct coordinates (seeded, deterministic), skipping
/// any closer than `step` to a bound, and compares grad against central
/// differences of f.
FdReport fd_check(const std::function<double(const Eigen::VectorXd&)>& f,
                  const Eigen::VectorXd& theta, const Eigen::VectorXd& grad, int n_coords,
                  double step, std::uint64_t seed,
                  const Eigen::VectorXd* lower = nullptr, const Eigen::VectorXd* upper = nullptr);

}  // namespace ltcepi
