#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "degdiff/expr.hpp"
#include "degdiff/rng.hpp"

using namespace degdiff;

namespace {

// central finite differences, the independent oracle for grad()
Vec fd_gradient(const Expr& f, const Vec& x, double step) {
  Vec g(x.size());
  Vec p = x;
  for (size_t i = 0; i < x.size(); ++i) {
    p[i] = x[i] + step;
    const double up = f.eval(p);
    p[i] = x[i] - step;
    const double dn = f.eval(p);
    p[i] = x[i];
    g[i] = (up - dn) / (2.0 * step);
  }
  return g;
}

std::string random_polynomial(const BrownianDriver& drv, uint64_t stream, int nvars, int degree) {
  // sum of random monomials c * x_i^a * x_j^b with total degree <= degree
  std::string out;
  int slot = 0;
  const int terms = 4 + static_cast<int>(3.0 * drv.uniform(stream, slot_generic(slot++)));
  for (int t = 0; t < terms; ++t) {
    const double c = drv.normal(stream, slot_generic(slot++));
    char buf[32];
    snprintf(buf, sizeof(buf), "%.6f", c);
    std::string term = (t == 0 ? "" : " + ") + std::string(buf);
    int left = degree;
    for (int v = 0; v < nvars; ++v) {
      const int e = static_cast<int>((left + 1) * drv.uniform(stream, slot_generic(slot++)));
      if (e > 0) {
        term += "*x" + std::to_string(v + 1);
        if (e > 1) term += "^" + std::to_string(e);
        left -= e;
      }
    }
    out += term;
  }
  return out;
}

}  // namespace

TEST_CASE("parse and evaluate basic expressions") {
  const Expr f = Expr::parse("x1^2 + sin(x2)", 2);
  CHECK(f.eval(Vec{1.0, 0.0}) == doctest::Approx(1.0));
  CHECK(f.arity() == 2);

  const Expr g = Expr::parse("2*x1 - 3/(x2 + 4)", 2);
  CHECK(g.eval(Vec{1.0, -1.0}) == doctest::Approx(2.0 - 1.0));
}

TEST_CASE("parse errors carry exact byte offsets") {
  try {
    Expr::parse("x1 +", 1);
    FAIL("expected a syntax error");
  } catch (const ParseError& e) {
    CHECK(e.kind == ParseErrorKind::syntax);
    CHECK(e.offset == 4);
  }
  try {
    Expr::parse("exp(x3)", 2);
    FAIL("expected a variable-index error");
  } catch (const ParseError& e) {
    CHECK(e.kind == ParseErrorKind::bad_var_index);
    CHECK(e.offset == 4);
  }
  try {
    Expr::parse("foo(x1)", 1);
    FAIL("expected an unknown-identifier error");
  } catch (const ParseError& e) {
    CHECK(e.kind == ParseErrorKind::unknown_identifier);
    CHECK(e.offset == 0);
  }
  CHECK_THROWS_AS(Expr::parse("", 1), ParseError);
  CHECK_THROWS_AS(Expr::parse("(x1", 1), ParseError);
  CHECK_THROWS_AS(Expr::parse("x1^x2", 2), ParseError);
}

TEST_CASE("power binds tighter than unary minus") {
  const Expr f = Expr::parse("-x1^2", 1);
  CHECK(f.eval(Vec{3.0}) == doctest::Approx(-9.0));
  const Expr g = Expr::parse("x1^-2", 1);
  CHECK(g.eval(Vec{2.0}) == doctest::Approx(0.25));
}

TEST_CASE("gradients of simple functions") {
  const Expr f = Expr::parse("x1^2 + sin(x2)", 2);
  const Vec g = f.grad(Vec{1.0, 0.0});
  CHECK(g[0] == doctest::Approx(2.0));
  CHECK(g[1] == doctest::Approx(1.0));

  const Expr h = Expr::parse("x1*x2", 2);
  const Vec gh = h.grad(Vec{std::exp(1.0), -2.5});
  CHECK(gh[0] == doctest::Approx(-2.5));
  CHECK(gh[1] == doctest::Approx(std::exp(1.0)));
}

TEST_CASE("gradient matches central differences on random polynomials") {
  const BrownianDriver drv(301);
  for (int rep = 0; rep < 100; ++rep) {
    const std::string text = random_polynomial(drv, 100 + rep, 3, 4);
    const Expr f = Expr::parse(text, 3);
    Vec x(3);
    for (int i = 0; i < 3; ++i) x[i] = drv.normal(900 + rep, slot_generic(i));
    const Vec g = f.grad(x);
    const Vec fd = fd_gradient(f, x, 1e-5);
    for (int i = 0; i < 3; ++i) {
      const double scale = std::max({1.0, std::abs(g[i]), std::abs(fd[i])});
      CHECK(std::abs(g[i] - fd[i]) / scale <= 1e-6);
    }
  }
}

TEST_CASE("gradient linearity") {
  const Expr f = Expr::parse("x1^3 + cos(x2)", 2);
  const Expr g = Expr::parse("exp(x1) * x2", 2);
  const Expr comb = Expr::parse("2*(x1^3 + cos(x2)) - 0.5*(exp(x1) * x2)", 2);
  const Vec x{0.3, -0.7};
  const Vec gf = f.grad(x), gg = g.grad(x), gc = comb.grad(x);
  for (int i = 0; i < 2; ++i) CHECK(gc[i] == doctest::Approx(2.0 * gf[i] - 0.5 * gg[i]).epsilon(1e-12));
}

TEST_CASE("heisenberg fields on coordinate functions") {
  const Expr z = Expr::parse("x3", 3);
  // X = d_x - (y/2) d_z applied to the z coordinate
  CHECK(heisenberg_field_apply(z, Vec{1.0, 2.0, 0.0}, HField::X) == doctest::Approx(-1.0));
  CHECK(heisenberg_field_apply(z, Vec{1.0, 2.0, 0.0}, HField::Xhat) == doctest::Approx(1.0));
  const Expr x = Expr::parse("x1", 3);
  CHECK(heisenberg_field_apply(x, Vec{0.4, -1.2, 7.0}, HField::Y) == doctest::Approx(0.0));
}

TEST_CASE("left and right field identities hold exactly") {
  const BrownianDriver drv(302);
  const Expr f = Expr::parse("x1^2*x3 + sin(x2)*x3 + x1*x2", 3);
  for (int rep = 0; rep < 50; ++rep) {
    Vec p(3);
    for (int i = 0; i < 3; ++i) p[i] = drv.normal(rep, slot_generic(i));
    const Vec g = f.grad(p);
    const double xf = heisenberg_field_apply(f, p, HField::X);
    const double xh = heisenberg_field_apply(f, p, HField::Xhat);
    CHECK(xf + xh == doctest::Approx(2.0 * g[0]).epsilon(1e-12));
    CHECK(xf - xh == doctest::Approx(-p[1] * g[2]).epsilon(1e-12));
  }
}

TEST_CASE("print and reparse round-trip") {
  const BrownianDriver drv(303);
  const std::vector<std::string> fixtures = {
      "x1^2 + sin(x2)",
      "-x1^2 + x2^-3",
      "exp(x1/2) * (x2 - 1)",
      "cos(x1)*cos(x1) - x2/(1 + x1^2)",
      "1.5e-2 + x1*x2*x3",
  };
  int stream = 0;
  for (const auto& text : fixtures) {
    const int arity = 3;
    const Expr f = Expr::parse(text, arity);
    const Expr g = Expr::parse(f.to_string(), arity);
    for (int rep = 0; rep < 100; ++rep) {
      Vec x(arity);
      for (int i = 0; i < arity; ++i) x[i] = drv.normal(stream, slot_generic(rep * arity + i));
      CHECK(std::abs(f.eval(x) - g.eval(x)) <= 1e-12 * std::max(1.0, std::abs(f.eval(x))));
    }
    ++stream;
  }
}

TEST_CASE("domain errors and the abs flag") {
  const Expr d = Expr::parse("1/x1", 1);
  CHECK_THROWS_AS(d.eval(Vec{0.0}), EvalDomainError);
  const Expr l = Expr::parse("log(x1)", 1);
  CHECK_THROWS_AS(l.eval(Vec{-1.0}), EvalDomainError);
  const Expr s = Expr::parse("sqrt(x1)", 1);
  CHECK_THROWS_AS(s.eval(Vec{-1.0}), EvalDomainError);
  const Expr a = Expr::parse("abs(x1)", 1);
  CHECK(a.has_abs());
  CHECK(a.eval(Vec{-3.0}) == doctest::Approx(3.0));
  CHECK_FALSE(Expr::parse("x1^2", 1).has_abs());
}
