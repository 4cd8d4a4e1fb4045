#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "degdiff/expr.hpp"
#include "degdiff/linalg.hpp"
#include "degdiff/models.hpp"
#include "degdiff/rng.hpp"
#include "degdiff/sde.hpp"

namespace degdiff {

struct McResult {
  double mean = 0.0;
  double se = 0.0;
  long long n = 0;
};

// Mean and stderr over samples. Non-finite samples are flagged and excluded;
// more than 0.1% of them aborts.
McResult summarize(std::span<const double> samples);

// Runs fn(stream) for stream in [0, n). fn must only write per-stream state;
// all reductions happen afterwards in stream order, so results do not depend
// on the worker count.
void for_streams(long long n, int workers, const std::function<void(long long)>& fn);

int resolve_workers(int requested);

// Per-sample first-order (influence) contributions whose mean is the
// estimator value; used for coupled slack error bars.
std::vector<double> variance_influence(std::span<const double> f_samples);
// Entropy of F^2 with |F| clipped below at `clip`.
std::vector<double> entropy_influence(std::span<const double> f_samples, double clip = 1e-8);

struct InequalityReport {
  std::string name;
  McResult lhs;
  McResult rhs;
  double slack = 0.0;
  double combined_se = 0.0;
  std::string verdict;
};

std::string verdict_of(double lhs_mean, double rhs_mean, double combined_se);

// lhs/rhs sampled on the same paths: the slack error bar comes from the
// per-path differences, cancelling shared noise.
InequalityReport coupled_report(const std::string& name, std::span<const double> lhs_samples,
                                std::span<const double> rhs_samples);
InequalityReport uncoupled_report(const std::string& name, const McResult& lhs, const McResult& rhs);

// ---- polynomial least squares (conditional expectations) ----

struct PolyFit {
  int nvars = 0;
  int degree = 0;
  std::vector<std::vector<int>> exps;  // exponent multi-indices, graded order
  Vec col_scale;                       // per-column scaling (unit RMS)
  Mat gram;                            // scaled Gram matrix Phi^T Phi
  Mat gram_inv;
  long long nsamples = 0;
  bool ridged = false;

  size_t size() const { return exps.size(); }
  void eval_basis(std::span<const double> x, std::span<double> out) const;  // scaled
  double predict(std::span<const double> coef, std::span<const double> x) const;
  // sigma2 * phi(x)^T G^{-1} phi(x): OLS prediction variance at x
  // (homoskedastic form; the sandwich form below is used where conditional
  // variances vary with the state).
  double prediction_variance(std::span<const double> x, double sigma2) const;
  // phi(x)^T V phi(x) with V a coefficient covariance in scaled coordinates.
  double prediction_variance_with(std::span<const double> x, const Mat& coef_cov) const;
};

// Design for samples xs (nsamples rows of nvars). Requires
// nsamples >= 10 * basis size. Near-singular normal equations fall back to a
// small ridge (flagged).
PolyFit design_poly(const std::vector<double>& xs, long long nsamples, int nvars, int degree);

struct FitResult {
  Vec coef;
  double sigma2 = 0.0;  // residual variance estimate
  // Eicker-Huber-White sandwich covariance of coef (scaled basis):
  // G^{-1} (sum phi phi^T r^2) G^{-1}; robust to state-dependent residual
  // variance, which polynomial leverage otherwise understates.
  Mat coef_cov;
};
FitResult solve_target(const PolyFit& fit, const std::vector<double>& xs, const std::vector<double>& y);

// ---- semigroups ----

enum class SemigroupSide { left, right };

struct SemigroupContext {
  const BrownianDriver* driver;
  uint64_t outer_stream;
  uint64_t tag;
  int n_inner;
  int inner_steps;
};

// Q_t f(p): group models translate origin paths through the group law;
// other models restart the diffusion at p. `side` selects p * x_t vs y_t * p
// for the Heisenberg group.
McResult q_semigroup(const Model& model, double t, const Expr& f, std::span<const double> p, SemigroupSide side,
                     const SemigroupContext& ctx);

// Gradient of p -> Q_t f(p) by central differences with common random
// numbers across all bump evaluations.
Vec grad_q_fd(const Model& model, double t, const Expr& f, std::span<const double> p, double delta,
              const SemigroupContext& ctx);

// Vector semigroup M_t grad-f (xi) = E[(dX_t(xi))^T grad f(X_t(xi))], the
// Jacobian driven by the raw increments.
struct VectorMc {
  Vec mean;
  Vec se;
  long long n = 0;
};
VectorMc m_semigroup(const Model& model, double t, const Expr& f, std::span<const double> xi,
                     const SemigroupContext& ctx);

}  // namespace degdiff
