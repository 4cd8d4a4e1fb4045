#include <doctest.h>

#include <stdexcept>

#include <cmath>

#include "degdiff/estimators.hpp"
#include "degdiff/models.hpp"

using namespace degdiff;

TEST_CASE("summarize basics") {
  const std::vector<double> c(100, 3.25);
  const McResult r = summarize(c);
  CHECK(r.mean == 3.25);
  CHECK(r.se == 0.0);
  CHECK(r.n == 100);

  std::vector<double> bad(100, 1.0);
  for (int i = 0; i < 10; ++i) bad[i] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(summarize(bad), std::runtime_error);
}

TEST_CASE("mc estimate of a standard normal mean") {
  const BrownianDriver drv(701);
  const long long n = 1000000;
  std::vector<double> z(n);
  for_streams(n, 0, [&](long long s) { z[s] = drv.normal(static_cast<uint64_t>(s), slot_generic(0)); });
  const McResult r = summarize(z);
  CHECK(std::abs(r.mean) <= 4e-3);
  const McResult r2 = summarize(z);
  CHECK(r.mean == r2.mean);  // bit-identical on reruns
}

TEST_CASE("worker count does not change results") {
  const BrownianDriver drv(702);
  const long long n = 500;
  std::vector<double> a(n), b(n);
  auto fill = [&](std::vector<double>& out) {
    return [&out, &drv](long long s) {
      double acc = 0.0;
      for (int i = 0; i < 100; ++i) acc += drv.normal(static_cast<uint64_t>(s), slot_generic(i));
      out[s] = acc;
    };
  };
  for_streams(n, 1, fill(a));
  for_streams(n, 4, fill(b));
  CHECK(a == b);
}

TEST_CASE("for_streams rethrows the lowest-stream failure") {
  CHECK_THROWS_WITH_AS(
      for_streams(64, 4, [](long long s) { if (s >= 7) throw std::runtime_error("boom " + std::to_string(s)); }),
      "boom 7", std::runtime_error);
}

TEST_CASE("verdict thresholds") {
  CHECK(verdict_of(1.0, 2.0, 0.1) == "holds");
  CHECK(verdict_of(1.0, 0.0, 0.1) == "violated");
  CHECK(verdict_of(1.0, 1.01, 0.1) == "holds-at-equality");
  CHECK(verdict_of(1.0, 0.99, 0.1) == "holds-at-equality");
  CHECK(verdict_of(0.0, 0.0, 0.0) == "holds-at-equality");
  CHECK(verdict_of(-1.0, -1.2, 0.1) == "violated-within-noise");
}

TEST_CASE("entropy influence is nonnegative in the mean and matches Jensen") {
  const BrownianDriver drv(703);
  std::vector<double> f(20000);
  for (size_t i = 0; i < f.size(); ++i) f[i] = std::exp(0.3 * drv.normal(0, slot_generic(i)));
  const auto infl = entropy_influence(f);
  const McResult ent = summarize(infl);
  CHECK(ent.mean >= -3.0 * ent.se);
}

TEST_CASE("polynomial regression recovers in-basis targets exactly") {
  const BrownianDriver drv(704);
  const long long n = 400;
  const int k = 2;
  std::vector<double> xs(n * k), y(n);
  for (long long s = 0; s < n; ++s) {
    const double a = drv.normal(0, slot_generic(2 * s));
    const double b = drv.normal(0, slot_generic(2 * s + 1));
    xs[s * k] = a;
    xs[s * k + 1] = b;
    y[s] = 2.0 - a + 3.0 * a * b + 0.5 * b * b;
  }
  const PolyFit fit = design_poly(xs, n, k, 2);
  const FitResult fr = solve_target(fit, xs, y);
  for (long long s = 0; s < 40; ++s) {
    const std::span<const double> x(xs.data() + s * k, k);
    CHECK(fit.predict(fr.coef, x) == doctest::Approx(y[s]).epsilon(1e-8));
  }
  CHECK(fr.sigma2 <= 1e-12);

  // in-sample residual is orthogonal to the basis columns
  std::vector<double> noisy(y);
  for (long long s = 0; s < n; ++s) noisy[s] += drv.normal(1, slot_generic(s));
  const FitResult nf = solve_target(fit, xs, noisy);
  std::vector<double> phi(fit.size());
  Vec acc(fit.size(), 0.0);
  double ynorm = 0.0;
  for (long long s = 0; s < n; ++s) {
    const std::span<const double> x(xs.data() + s * k, k);
    fit.eval_basis(x, phi);
    const double r = noisy[s] - fit.predict(nf.coef, x);
    for (size_t j = 0; j < phi.size(); ++j) acc[j] += phi[j] * r;
    ynorm += noisy[s] * noisy[s];
  }
  for (double v : acc) CHECK(std::abs(v) <= 1e-8 * std::sqrt(ynorm * n));
}

TEST_CASE("regression on pure noise finds nothing") {
  const BrownianDriver drv(705);
  const long long n = 2000;
  std::vector<double> xs(n), y(n);
  for (long long s = 0; s < n; ++s) {
    xs[s] = drv.normal(0, slot_generic(2 * s));
    y[s] = drv.normal(0, slot_generic(2 * s + 1));
  }
  const PolyFit fit = design_poly(xs, n, 1, 3);
  const FitResult fr = solve_target(fit, xs, y);
  double ms = 0.0;
  for (long long s = 0; s < n; ++s) {
    const std::span<const double> x(xs.data() + s, 1);
    const double v = fit.predict(fr.coef, x);
    ms += v * v;
  }
  ms /= n;
  const int p = static_cast<int>(fit.size());
  CHECK(std::abs(ms - fr.sigma2 * p / n) <= 3.0 * fr.sigma2 * std::sqrt(2.0 * p) / n);
}

TEST_CASE("martingale regression: E[b_T | b_s] has unit slope") {
  const BrownianDriver drv(706);
  const long long n = 100000;
  std::vector<double> xs(n), y(n);
  const double s_time = 0.5;
  for (long long s = 0; s < n; ++s) {
    const double bs = std::sqrt(s_time) * drv.normal(static_cast<uint64_t>(s), slot_generic(0));
    const double rest = std::sqrt(1.0 - s_time) * drv.normal(static_cast<uint64_t>(s), slot_generic(1));
    xs[s] = bs;
    y[s] = bs + rest;
  }
  const PolyFit fit = design_poly(xs, n, 1, 1);
  const FitResult fr = solve_target(fit, xs, y);
  // slope in original units: coefficient of the degree-1 column times scaling
  const double slope = fr.coef[1] * fit.col_scale[1];
  const double se = std::sqrt(fr.sigma2 / (n * s_time));
  CHECK(std::abs(slope - 1.0) <= 3.0 * se);
  CHECK(design_poly(xs, n, 1, 1).ridged == false);
  CHECK_THROWS_AS(design_poly(xs, 10, 1, 3), std::invalid_argument);
}

TEST_CASE("ridge fallback on rank-deficient designs") {
  const long long n = 300;
  std::vector<double> xs(n, 1.0), y(n, 2.0);  // constant feature: x and 1 collide
  const PolyFit fit = design_poly(xs, n, 1, 1);
  CHECK(fit.ridged);
  const FitResult fr = solve_target(fit, xs, y);
  CHECK(fit.predict(fr.coef, std::vector<double>{1.0}) == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("q semigroup at the origin of the heisenberg group") {
  const Model m = make_heisenberg();
  const BrownianDriver drv(707);
  const Expr x1 = Expr::parse("x1", 3);
  const Expr x1sq = Expr::parse("x1^2", 3);
  const Vec origin{0.0, 0.0, 0.0};
  SemigroupContext ctx{&drv, 0, 0xAB, 4000, 64};
  const McResult odd = q_semigroup(m, 1.0, x1, origin, SemigroupSide::left, ctx);
  CHECK(std::abs(odd.mean) <= 3.0 * odd.se);
  const McResult sq = q_semigroup(m, 1.0, x1sq, origin, SemigroupSide::left, ctx);
  CHECK(std::abs(sq.mean - 1.0) <= 3.0 * sq.se);
  // t = 0 evaluates the function itself
  const McResult zero = q_semigroup(m, 0.0, x1sq, Vec{2.0, 0.0, 0.0}, SemigroupSide::left, ctx);
  CHECK(zero.mean == doctest::Approx(4.0));
  // both group sides are defined; the right one needs the group structure
  const Expr z = Expr::parse("x3", 3);
  const McResult left = q_semigroup(m, 1.0, z, Vec{1.0, 0.0, 0.0}, SemigroupSide::left, ctx);
  const McResult right = q_semigroup(m, 1.0, z, Vec{1.0, 0.0, 0.0}, SemigroupSide::right, ctx);
  CHECK(std::isfinite(left.mean));
  CHECK(std::isfinite(right.mean));
  CHECK_THROWS_AS(q_semigroup(make_circle(), 1.0, Expr::parse("x1", 1), Vec{0.0}, SemigroupSide::right, ctx),
                  std::invalid_argument);
}

TEST_CASE("vector semigroup: exact at t = 0, matrix exponential for linear drift") {
  const Mat a = Mat::from_rows({{0.0, 1.0}, {-1.0, 0.0}});
  const Model m = make_classical(a, Mat::identity(2));
  const BrownianDriver drv(708);
  const Expr f = Expr::parse("x1 + 2*x2", 2);
  SemigroupContext ctx{&drv, 3, 0xCD, 2000, 128};
  const VectorMc at0 = m_semigroup(m, 0.0, f, Vec{0.3, -0.7}, ctx);
  CHECK(at0.mean[0] == doctest::Approx(1.0));
  CHECK(at0.mean[1] == doctest::Approx(2.0));

  // M_t (grad f) = e^{A^T t} grad f, deterministic for constant gradients
  const VectorMc mt = m_semigroup(m, 1.0, f, Vec{0.0, 0.0}, ctx);
  const double c = std::cos(1.0), s = std::sin(1.0);
  // e^{A^T} (1,2) with A the rotation generator
  const double want0 = c * 1.0 - s * 2.0;
  const double want1 = s * 1.0 + c * 2.0;
  CHECK(std::abs(mt.mean[0] - want0) <= 3.0 * mt.se[0] + 0.02 * std::abs(want0));
  CHECK(std::abs(mt.mean[1] - want1) <= 3.0 * mt.se[1] + 0.02 * std::abs(want1));
}

TEST_CASE("vector semigroup on the heisenberg group: constant first coordinate") {
  const Model m = make_heisenberg();
  const BrownianDriver drv(709);
  const Expr f = Expr::parse("x1", 3);
  Mat sg;
  for (int rep = 0; rep < 3; ++rep) {
    Vec xi{0.3 * rep, -0.1 * rep, 0.5};
    SemigroupContext ctx{&drv, static_cast<uint64_t>(rep), 0xEF, 1500, 64};
    const VectorMc mt = m_semigroup(m, 0.5, f, xi, ctx);
    m.sigma(xi, sg);
    // sigma^T M_{1-t} grad f = (1, 0) for the martingale coordinate
    Vec out(2, 0.0);
    for (int k = 0; k < 2; ++k)
      for (int a2 = 0; a2 < 3; ++a2) out[k] += sg(a2, k) * mt.mean[a2];
    CHECK(std::abs(out[0] - 1.0) <= 3.0 * (mt.se[0] + mt.se[1] + mt.se[2]) + 1e-9);
    CHECK(std::abs(out[1]) <= 3.0 * (mt.se[0] + mt.se[1] + mt.se[2]) + 1e-9);
  }
}

TEST_CASE("coupled reports carry the difference stderr") {
  std::vector<double> lhs(1000), rhs(1000);
  const BrownianDriver drv(710);
  for (int i = 0; i < 1000; ++i) {
    const double shared = drv.normal(0, slot_generic(i));
    lhs[i] = shared + 1.0;
    rhs[i] = shared + 1.0 + 1e-6 * drv.normal(1, slot_generic(i));
  }
  const InequalityReport r = coupled_report("t", lhs, rhs);
  // the shared noise cancels: the slack error bar is far below each side's
  CHECK(r.combined_se < 0.01 * r.lhs.se);
  CHECK(r.verdict == "holds-at-equality");
}
