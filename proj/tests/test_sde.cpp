#include <doctest.h>

#include <stdexcept>

#include <algorithm>
#include <cmath>

#include "degdiff/estimators.hpp"
#include "degdiff/models.hpp"
#include "degdiff/sde.hpp"

using namespace degdiff;

namespace {

// scaling-and-squaring series oracle for the matrix exponential
Mat expm(const Mat& a) {
  double nrm = frobenius_norm(a);
  int squarings = 0;
  Mat scaled = a;
  while (nrm > 0.5) {
    scaled = 0.5 * scaled;
    nrm *= 0.5;
    ++squarings;
  }
  Mat term = Mat::identity(a.rows());
  Mat sum = term;
  for (int k = 1; k <= 20; ++k) {
    term = (1.0 / k) * (term * scaled);
    sum = sum + term;
  }
  for (int i = 0; i < squarings; ++i) sum = sum * sum;
  return sum;
}

double sup_jk_error(const PathBundle& b) {
  double worst = 0.0;
  for (int i = 0; i <= b.grid.steps; ++i) {
    Mat p = b.jflow[i] * b.kflow[i];
    for (int a = 0; a < b.n; ++a) p(a, a) -= 1.0;
    worst = std::max(worst, frobenius_norm(p));
  }
  return worst;
}

}  // namespace

TEST_CASE("driftless additive model integrates the Brownian path exactly") {
  const Model m = make_classical(Mat(2, 2), Mat::identity(2));
  const TimeGrid g{1.0, 64};
  const BrownianDriver drv(501);
  const PathBundle b = simulate(m, g, drv, 0, Vec{0.5, -0.5});
  Vec acc{0.5, -0.5};
  for (int i = 0; i < g.steps; ++i) {
    for (int k = 0; k < 2; ++k) acc[k] += b.incr(i)[k];
    for (int k = 0; k < 2; ++k) CHECK(b.state(i + 1)[k] == acc[k]);
  }
}

TEST_CASE("heisenberg coordinates: raw Brownian plus the Euler Levy area") {
  const Model m = make_heisenberg();
  const TimeGrid g{1.0, 128};
  const BrownianDriver drv(502);
  const PathBundle b = simulate(m, g, drv, 3, Vec{0.0, 0.0, 0.0});
  double bb = 0.0, ww = 0.0, area = 0.0;
  for (int i = 0; i < g.steps; ++i) {
    const double db = b.incr(i)[0], dw = b.incr(i)[1];
    area += 0.5 * (bb * dw - ww * db);
    bb += db;
    ww += dw;
    CHECK(b.state(i + 1)[0] == bb);
    CHECK(b.state(i + 1)[1] == ww);
    CHECK(b.state(i + 1)[2] == doctest::Approx(area).epsilon(1e-14));
  }
}

TEST_CASE("linear-drift jacobian flow matches the matrix exponential") {
  const Mat a = Mat::from_rows({{0.0, 1.0}, {-1.0, 0.0}});
  const Model m = make_classical(a, Mat::identity(2));
  const TimeGrid g{1.0, 1024};
  const BrownianDriver drv(503);
  const PathBundle b = simulate(m, g, drv, 0, Vec{0.0, 0.0});
  const Mat target = expm(a);
  CHECK(frobenius_norm(b.jflow[g.steps] - target) / frobenius_norm(target) <= 0.02);
  // K approximates the inverse flow
  const Mat ktarget = expm(-1.0 * a);
  CHECK(frobenius_norm(b.kflow[g.steps] - ktarget) / frobenius_norm(ktarget) <= 0.02);
}

TEST_CASE("shift by zero is the identity, additive shift is exact") {
  const Model m = make_classical(Mat(2, 2), Mat::identity(2));
  const TimeGrid g{1.0, 32};
  const BrownianDriver drv(504);
  const CameronMartinVector zero = CameronMartinVector::zero(2, g.steps);
  const PathBundle plain = simulate(m, g, drv, 1, Vec{0.0, 0.0});
  const PathBundle shifted0 = shift_simulate(m, g, drv, 1, Vec{0.0, 0.0}, zero);
  CHECK(plain.x == shifted0.x);

  const CameronMartinVector h = CameronMartinVector::fourier(2, g.steps, g.horizon);
  const PathBundle shifted = shift_simulate(m, g, drv, 1, Vec{0.0, 0.0}, h);
  Vec ht(2, 0.0);
  for (int i = 0; i < g.steps; ++i) {
    for (int k = 0; k < 2; ++k) ht[k] += h.at(i)[k] * g.dt();
    for (int k = 0; k < 2; ++k)
      CHECK(shifted.state(i + 1)[k] - plain.state(i + 1)[k] == doctest::Approx(ht[k]).epsilon(1e-12));
  }
}

TEST_CASE("jk cross-check: exact for nilpotent flows, first order for linear drift") {
  const BrownianDriver drv(505);
  // heisenberg: discrete J and K are exact mutual inverses
  const Model h = make_heisenberg();
  const PathBundle hb = simulate(h, TimeGrid{1.0, 256}, drv, 0, Vec{0.0, 0.0, 0.0});
  CHECK(sup_jk_error(hb) <= 1e-12);
  // circle: the projected noise is orthogonal to the sigma derivative
  const Model c = make_circle();
  const PathBundle cb = simulate(c, TimeGrid{1.0, 256}, drv, 0, Vec{0.0});
  CHECK(sup_jk_error(cb) <= 1e-12);
  // classical rotation: JK - I = O(dt), halving per refinement
  const Mat a = Mat::from_rows({{0.0, 1.0}, {-1.0, 0.0}});
  const Model cl = make_classical(a, Mat::identity(2));
  double prev = 1e300;
  for (int steps : {256, 512, 1024}) {
    std::vector<double> sup(64);
    for (int s = 0; s < 64; ++s)
      sup[s] = sup_jk_error(simulate(cl, TimeGrid{1.0, steps}, drv, s, Vec{0.0, 0.0}));
    std::sort(sup.begin(), sup.end());
    const double med = 0.5 * (sup[31] + sup[32]);
    CHECK(med < prev);
    prev = med;
  }
}

TEST_CASE("lipschitz flow bound for the classical model") {
  // sup_{s<=t} |J_t K_s Sigma|_op <= |Sigma| e^{K (t-s)} (1 + eps)
  const Mat a = Mat::from_rows({{0.0, 1.0}, {-1.0, 0.0}});
  const Mat sg = Mat::from_rows({{1.0, 0.5}, {0.0, 1.0}});
  const Model m = make_classical(a, sg);
  const double lip = operator_norm(a);
  const double snorm = operator_norm(sg);
  const TimeGrid g{1.0, 1024};
  const BrownianDriver drv(506);
  for (int s = 0; s < 4; ++s) {
    const PathBundle b = simulate(m, g, drv, s, Vec{0.1, -0.2});
    for (int t_idx : {256, 512, 1024})
      for (int s_idx : {0, 128, 256}) {
        if (s_idx > t_idx) continue;
        const Mat jk = b.jflow[t_idx] * (b.kflow[s_idx] * sg);
        const double bound = snorm * std::exp(lip * (g.time(t_idx) - g.time(s_idx)));
        CHECK(operator_norm(jk) <= bound * 1.05);
      }
  }
}

TEST_CASE("variation of constants against the direct conditional derivative") {
  const Model m = make_heisenberg();
  const TimeGrid g{1.0, 512};
  const BrownianDriver drv(507);
  const CameronMartinVector h = CameronMartinVector::fourier(2, g.steps, g.horizon);
  double num = 0.0, den = 0.0;
  for (int s = 0; s < 200; ++s) {
    const PathBundle b = simulate(m, g, drv, s, Vec{0.0, 0.0, 0.0}, &h);
    Vec acc(3, 0.0), tmp(3), sh(3);
    for (int i = 0; i < g.steps; ++i) {
      const auto hd = h.at(i);
      for (int a = 0; a < 3; ++a) {
        double v = 0.0;
        for (int k = 0; k < 2; ++k) v += b.sigma_at[i](a, k) * hd[k];
        sh[a] = v;
      }
      matvec(b.kflow[i], sh, tmp);
      for (int a = 0; a < 3; ++a) acc[a] += tmp[a] * g.dt();
    }
    const Vec vc = matvec(b.jflow[g.steps], acc);
    const auto direct = b.nabla(g.steps);
    for (int a = 0; a < 3; ++a) {
      num += (direct[a] - vc[a]) * (direct[a] - vc[a]);
      den += direct[a] * direct[a];
    }
  }
  CHECK(std::sqrt(num / den) <= 0.05);
}

TEST_CASE("dyson safeguard: clean steps are plain Euler") {
  const Model m = make_dyson(3, 1.0);
  const TimeGrid g{0.01, 4};  // well separated, tiny horizon
  const BrownianDriver drv(508);
  const PathBundle b = simulate(m, g, drv, 0, Vec{-1.0, 0.0, 1.0});
  CHECK(b.refined_steps == 0);
  // replay the first step by hand: tamed drift equals the raw drift here
  Vec drift(3);
  m.drift(Vec{-1.0, 0.0, 1.0}, drift);
  for (int a = 0; a < 3; ++a) {
    const double expect = b.state(0)[a] + drift[a] * g.dt() + b.incr(0)[a];
    CHECK(b.state(1)[a] == doctest::Approx(expect).epsilon(1e-15));
  }
}

TEST_CASE("dyson safeguard survives a nearly collided start") {
  const Model m = make_dyson(2, 1.0);
  const TimeGrid g{0.1, 16};
  const BrownianDriver drv(509);
  for (int s = 0; s < 50; ++s) {
    const PathBundle b = simulate(m, g, drv, s, Vec{0.0, 1e-6});
    for (int i = 0; i <= g.steps; ++i) CHECK(b.state(i)[1] - b.state(i)[0] > 0.0);
  }
}

TEST_CASE("dyson ordering is preserved across many paths") {
  const Model m = make_dyson(3, 1.0);
  const TimeGrid g{1.0, 512};
  const BrownianDriver drv(20260809ull);
  SimOptions opts;
  opts.with_flows = false;
  opts.with_projection = false;
  PathBundle b;
  for (int s = 0; s < 300; ++s) {
    simulate_into(b, m, g, drv, s, Vec{-1.0, 0.0, 1.0}, nullptr, opts);
    for (int i = 0; i <= g.steps; ++i) {
      CHECK(b.state(i)[0] < b.state(i)[1]);
      CHECK(b.state(i)[1] < b.state(i)[2]);
    }
  }
}

TEST_CASE("ornstein-uhlenbeck variance matches the closed form") {
  const Mat a = Mat::from_rows({{-1.0, 0.0}, {0.0, -1.0}});
  const Model m = make_classical(a, Mat::identity(2));
  const TimeGrid g{1.0, 512};
  const BrownianDriver drv(510);
  const long long n = 20000;
  std::vector<double> xs(n);
  SimOptions opts;
  opts.with_flows = false;
  opts.with_projection = false;
  for_streams(n, 0, [&](long long s) {
    PathBundle b;
    simulate_into(b, m, g, drv, static_cast<uint64_t>(s), Vec{0.0, 0.0}, nullptr, opts);
    xs[s] = b.state(g.steps)[0];
  });
  const auto infl = variance_influence(xs);
  const McResult var = summarize(infl);
  const double target = (1.0 - std::exp(-2.0)) / 2.0;  // 0.43233...
  CHECK(std::abs(var.mean - target) <= 3.0 * var.se + 1e-3);
}

TEST_CASE("the mirrored process shares the first two moments of the original") {
  // y = A x with A = diag(-1,-1,1) has the law of x; check means and second
  // moments at t = 1 within Monte Carlo error
  const Model m = make_heisenberg();
  const TimeGrid g{1.0, 64};
  const BrownianDriver drv(515);
  const long long n = 20000;
  std::vector<double> xs(3 * n), ys(3 * n), xs2(3 * n), ys2(3 * n);
  SimOptions opts;
  opts.with_flows = false;
  opts.with_projection = false;
  for_streams(n, 0, [&](long long s) {
    PathBundle b;
    simulate_into(b, m, g, drv, static_cast<uint64_t>(s), Vec{0.0, 0.0, 0.0}, nullptr, opts);
    const auto x1 = b.state(g.steps);
    const auto y1 = heisenberg_mirror(x1);
    for (int a = 0; a < 3; ++a) {
      xs[s * 3 + a] = x1[a];
      ys[s * 3 + a] = y1[a];
      xs2[s * 3 + a] = x1[a] * x1[a];
      ys2[s * 3 + a] = y1[a] * y1[a];
    }
  });
  std::vector<double> cx(n), cy(n);
  for (int a = 0; a < 3; ++a) {
    for (long long s = 0; s < n; ++s) {
      cx[s] = xs[s * 3 + a];
      cy[s] = ys[s * 3 + a];
    }
    const McResult mx = summarize(cx), my = summarize(cy);
    CHECK(std::abs(mx.mean - my.mean) <= 3.0 * std::sqrt(mx.se * mx.se + my.se * my.se) + 1e-12);
    for (long long s = 0; s < n; ++s) {
      cx[s] = xs2[s * 3 + a];
      cy[s] = ys2[s * 3 + a];
    }
    const McResult qx = summarize(cx), qy = summarize(cy);
    CHECK(std::abs(qx.mean - qy.mean) <= 3.0 * std::sqrt(qx.se * qx.se + qy.se * qy.se) + 1e-12);
  }
}

TEST_CASE("paths are bit-identical across repeated runs") {
  const Model m = make_heisenberg();
  const TimeGrid g{1.0, 64};
  const BrownianDriver drv(511);
  const PathBundle b1 = simulate(m, g, drv, 9, Vec{0.0, 0.0, 0.0});
  const PathBundle b2 = simulate(m, g, drv, 9, Vec{0.0, 0.0, 0.0});
  CHECK(b1.x == b2.x);
  CHECK(b1.db == b2.db);
  CHECK(b1.m == b2.m);
}

TEST_CASE("coupled refinement levels stay on the same Brownian path") {
  const BrownianDriver drv(512);
  const auto levels = coupled_increment_levels(drv, 4, 2, 1.0, {4, 8, 16});
  // consecutive-level consistency: fine pairs sum to the parent increment
  for (size_t li = 0; li + 1 < levels.size(); ++li) {
    const auto& coarse = levels[li];
    const auto& fine = levels[li + 1];
    for (size_t i = 0; i * 2 < fine.size() / 2; ++i)
      for (int k = 0; k < 2; ++k) {
        const double sum = fine[(2 * i) * 2 + k] + fine[(2 * i + 1) * 2 + k];
        CHECK(sum == doctest::Approx(coarse[i * 2 + k]).epsilon(1e-15));
      }
  }
  CHECK_THROWS_AS(coupled_increment_levels(drv, 0, 2, 1.0, {3, 6}), std::invalid_argument);
  CHECK_THROWS_AS(coupled_increment_levels(drv, 0, 2, 1.0, {8, 4}), std::invalid_argument);
}

TEST_CASE("blow-up raises instead of propagating non-finite states") {
  const Mat a = Mat::from_rows({{1e9, 0.0}, {0.0, 1e9}});
  const Model m = make_classical(a, Mat::identity(2));
  const TimeGrid g{1.0, 64};
  const BrownianDriver drv(513);
  CHECK_THROWS_AS(simulate(m, g, drv, 0, Vec{1.0, 1.0}), BlowUpError);
}

TEST_CASE("input validation") {
  const Model m = make_dyson(3, 1.0);
  const TimeGrid g{1.0, 8};
  const BrownianDriver drv(514);
  CHECK_THROWS_AS(simulate(m, g, drv, 0, Vec{1.0, 0.0, -1.0}), std::invalid_argument);
  CHECK_THROWS_AS(simulate(m, g, drv, 0, Vec{0.0, 0.0}), std::invalid_argument);
  const CameronMartinVector wrong = CameronMartinVector::zero(3, g.steps);
  CHECK_THROWS_AS(simulate(make_heisenberg(), g, drv, 0, Vec{0.0, 0.0, 0.0}, &wrong),
                  std::invalid_argument);
  const CameronMartinVector short_h = CameronMartinVector::zero(2, g.steps / 2);
  CHECK_THROWS_AS(simulate(make_heisenberg(), g, drv, 0, Vec{0.0, 0.0, 0.0}, &short_h),
                  std::invalid_argument);
}
