#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

namespace ltcepi {

/// State layout: two groups (0 = inside LTC, 1 = outside LTC), eight
/// compartments each, group-major.
enum Compartment : int { kS = 0, kE, kI, kH, kR, kD, kPc, kPu };

constexpr int kGroups = 2;
constexpr int kCompartments = 8;
constexpr int kStateDim = kGroups * kCompartments;

constexpr int state_index(int group, int comp) { return group * kCompartments + comp; }

using StateVec = Eigen::Matrix<double, kStateDim, 1>;
using StateMat = Eigen::Matrix<double, kStateDim, kStateDim>;

struct DomainError : std::runtime_error {
  explicit DomainError(const std::string& what) : std::runtime_error(what) {}
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

/// Trajectory blow-up during integration; `day` names the first offending day.
struct DivergenceError : NumericalError {
  DivergenceError(const std::string& what, int day_) : NumericalError(what), day(day_) {}
  int day;
};

/// Time axis of one inference problem. Days are integer indices; the knot
/// grid for time-dependent parameters is equispaced with spacing `delta_t`
/// starting at `t_start`. `num_knots` may exceed the span (knots past t_end
/// are legal; values past the last knot extend as constants).
struct TimeGrid {
  int t_start = 0;
  int t_end = 0;
  double delta_t = 7.0;
  int substeps_per_day = 10;
  int num_knots = 0;  // 0: derive smallest count covering [t_start, t_end]

  int knot_count() const {
    if (num_knots > 0) return num_knots;
    int span = t_end - t_start;
    int k = static_cast<int>(std::ceil(static_cast<double>(span) / delta_t - 1e-12));
    return k + 1;
  }

  double knot_time(int j) const { return t_start + j * delta_t; }

  int days() const { return t_end - t_start; }

  void validate() const {
    if (t_end < t_start) throw ConfigError("time grid: t_end < t_start");
    if (delta_t < 1.0) throw ConfigError("time grid: delta_t must be >= 1 day");
    if (substeps_per_day < 1) throw ConfigError("time grid: substeps_per_day must be >= 1");
    if (num_knots < 0) throw ConfigError("time grid: negative knot count");
    if (knot_count() < 1) throw ConfigError("time grid: empty knot set");
  }
};

/// Day-sampled states over [t_start, t_start + days.size() - 1].
struct Trajectory {
  int t_start = 0;
  std::vector<StateVec> days;

  int t_end() const { return t_start + static_cast<int>(days.size()) - 1; }

  const StateVec& at_day(int t) const {
    int i = t - t_start;
    if (i < 0 || i >= static_cast<int>(days.size()))
      throw DomainError("trajectory: day " + std::to_string(t) + " outside stored range");
    return days[static_cast<std::size_t>(i)];
  }
};

}  // namespace ltcepi
