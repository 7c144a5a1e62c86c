#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "ltcepi/rng.hpp"

namespace ltcepi {

/// Posterior interface the samplers drive. Implementations must be safely
/// callable from several workers at once on distinct inputs.
class Target {
 public:
  virtual ~Target() = default;
  virtual int dim() const = 0;

  /// Log posterior density (up to an additive constant) and its gradient.
  /// Returns false when the model solve degenerates; the prior-only value
  /// and gradient are filled in so the sampler can keep moving the particle.
  virtual bool log_posterior(const Eigen::VectorXd& x, double* logp,
                             Eigen::VectorXd* grad) const = 0;

  /// Gradient of the log likelihood alone (drives the information matrix).
  /// Returns false when degenerate; the gradient is then zero.
  virtual bool likelihood_gradient(const Eigen::VectorXd& x, Eigen::VectorXd* grad) const = 0;

  /// Dense precision matrix of the prior (inverse of C_x).
  virtual const Eigen::MatrixXd& prior_precision() const = 0;

  virtual Eigen::VectorXd prior_sample(Rng& rng) const = 0;
};

// ---- kernels and update directions ----

double kernel_full(const Eigen::VectorXd& x, const Eigen::VectorXd& y, double bandwidth);

/// Median of pairwise squared distances between the rows of X.
double median_sq_distance(const Eigen::MatrixXd& X);

/// Bandwidth rule med^2 / log(N); falls back to 1 for degenerate sets.
double full_bandwidth(const Eigen::MatrixXd& X);

/// Per-particle steepest directions phi(x_m) = (1/N) sum_n [grad_n k(x_n,x_m)
/// + grad_{x_n} k(x_n,x_m)]; rows of X are particles, rows of grads are
/// log-density gradients.
Eigen::MatrixXd svgd_directions(const Eigen::MatrixXd& X, const Eigen::MatrixXd& grads,
                                double bandwidth);

/// H_hat = (1/M) sum_m grad_m grad_m^T.
Eigen::MatrixXd gradient_info_matrix(const Eigen::MatrixXd& grads);

// ---- data-informed subspace ----

struct ProjectionBasis {
  Eigen::MatrixXd psi;      // d x r, Euclidean-orthonormal columns
  Eigen::VectorXd lambda;   // r generalized eigenvalues, descending
  Eigen::VectorXd spectrum; // leading eigenvalues kept for diagnostics
  double truncation_tol = 0.1;

  int r() const { return static_cast<int>(psi.cols()); }
};

/// Dominant eigenpairs of H psi = lambda C_x psi computed through the
/// Cholesky factor of the prior precision, truncated at the first eigenvalue
/// not exceeding truncation_tol (at least one direction, at most r_max).
/// Columns are re-orthonormalized in the Euclidean sense, preserving span.
ProjectionBasis solve_projection_basis(const Eigen::MatrixXd& h_hat,
                                       const Eigen::MatrixXd& prior_precision,
                                       double truncation_tol, int r_max);

/// w_n = Psi^T x_n and x_perp_n = x_n - Psi w_n per row.
void project(const Eigen::MatrixXd& X, const ProjectionBasis& basis, Eigen::MatrixXd* W,
             Eigen::MatrixXd* Xperp);

double kernel_projected(const Eigen::VectorXd& w, const Eigen::VectorXd& v,
                        const Eigen::VectorXd& lambda, double bandwidth);

/// Median of (Lambda + I)-weighted pairwise squared distances over log(N).
double projected_bandwidth(const Eigen::MatrixXd& W, const Eigen::VectorXd& lambda);

Eigen::MatrixXd psvgd_directions(const Eigen::MatrixXd& W, const Eigen::MatrixXd& grads_w,
                                 const Eigen::VectorXd& lambda, double bandwidth);

// ---- samplers ----

struct SamplerConfig {
  int n_per_worker = 125;
  int workers = 8;
  int outer_iters = 10;
  int inner_iters = 10;
  double step_size = 0.1;
  bool adagrad = true;  // per-coordinate accumulated-square step rule
  double w_tol = 0.0;   // 0 disables early stopping
  double x_tol = 0.0;
  double truncation_tol = 0.1;
  int r_max = 50;
  std::uint64_t seed = 1;
  double max_degenerate_fraction = 0.5;

  int total_particles() const { return n_per_worker * workers; }
};

struct Ensemble {
  Eigen::MatrixXd samples;      // (N*K) x d
  Eigen::MatrixXd coeffs;       // (N*K) x r
  Eigen::MatrixXd complements;  // (N*K) x d, frozen during the inner loop
  std::uint64_t seed = 0;
  int outer_iter = 0;
};

struct SamplerDiagnostics {
  std::vector<Eigen::VectorXd> spectrum_history;  // per outer iteration
  std::vector<int> basis_rank;
  int degenerate_evals = 0;
  int inner_iterations_run = 0;
};

/// N*K prior draws, one deterministic stream regardless of worker count.
Ensemble draw_prior_ensemble(const Target& target, int n_total, std::uint64_t seed);

/// Inner pSVGD loop at a fixed basis: moves coefficients, freezes
/// complements, reconstructs samples on exit.
void psvgd_inner(Ensemble& ens, const ProjectionBasis& basis, const Target& target,
                 const SamplerConfig& cfg, SamplerDiagnostics* diag = nullptr);

struct SampleResult {
  Ensemble ensemble;
  SamplerDiagnostics diag;
};

/// Adaptive outer loop: rebuilds the gradient-information matrix and the
/// projection basis from the current particles, re-projects (refreshing the
/// frozen complements), and runs the inner loop.
SampleResult psvgd_adaptive(const Target& target, const SamplerConfig& cfg);
SampleResult psvgd_adaptive(const Target& target, const SamplerConfig& cfg, Ensemble initial);

/// Plain full-space SVGD, used for sanity benchmarks.
Eigen::MatrixXd svgd_run(const Target& target, Eigen::MatrixXd particles, int iterations,
                         double step_size, bool adagrad = true, int workers = 1,
                         double w_tol = 0.0);

/// Gaussian benchmark target: prior N(m0, C0), likelihood from linear data
/// y = A x + noise with covariance Gamma. Closed-form posterior moments and
/// the generalized data-Hessian spectrum are exposed for oracle checks.
class GaussianLinearTarget : public Target {
 public:
  GaussianLinearTarget(Eigen::VectorXd prior_mean, Eigen::MatrixXd prior_cov, Eigen::MatrixXd a,
                       Eigen::VectorXd y, Eigen::MatrixXd noise_cov);

  int dim() const override { return static_cast<int>(mean_.size()); }
  bool log_posterior(const Eigen::VectorXd& x, double* logp,
                     Eigen::VectorXd* grad) const override;
  bool likelihood_gradient(const Eigen::VectorXd& x, Eigen::VectorXd* grad) const override;
  const Eigen::MatrixXd& prior_precision() const override { return prior_precision_; }
  Eigen::VectorXd prior_sample(Rng& rng) const override;

  Eigen::VectorXd posterior_mean() const;
  Eigen::MatrixXd posterior_cov() const;
  Eigen::MatrixXd data_hessian() const;  // A^T Gamma^{-1} A
  /// Generalized eigenvalues of (data_hessian, prior_cov), descending.
  Eigen::VectorXd generalized_data_spectrum() const;

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd cov_, prior_precision_;
  Eigen::MatrixXd a_;
  Eigen::VectorXd y_;
  Eigen::MatrixXd noise_precision_;
  Eigen::LLT<Eigen::MatrixXd> cov_llt_;
};

}  // namespace ltcepi
