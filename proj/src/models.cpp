#include "degdiff/models.hpp"

#include <cmath>

namespace degdiff {

namespace {
constexpr double kCollisionTol = 1e-12;
}

Vec Model::default_x0() const {
  Vec x0(n, 0.0);
  if (drift_singular) {
    // strictly ordered start, spread over [-1, 1]
    for (int i = 0; i < n; ++i) x0[i] = n == 1 ? 0.0 : -1.0 + 2.0 * i / (n - 1);
  }
  return x0;
}

Model make_heisenberg() {
  Model m;
  m.name = "heisenberg";
  m.n = 3;
  m.d = 2;
  m.group_heisenberg = true;
  m.drift = [](std::span<const double>, std::span<double> out) {
    out[0] = out[1] = out[2] = 0.0;
  };
  m.sigma = [](std::span<const double> x, Mat& out) {
    out.resize(3, 2);
    out(0, 0) = 1.0;
    out(1, 1) = 1.0;
    out(2, 0) = -x[1] / 2.0;
    out(2, 1) = x[0] / 2.0;
  };
  m.drift_jac = [](std::span<const double>, Mat& out) { out.resize(3, 3); };
  m.sigma_dir = [](std::span<const double>, std::span<const double> v, Mat& out) {
    out.resize(3, 2);
    out(2, 0) = -v[1] / 2.0;
    out(2, 1) = v[0] / 2.0;
  };
  return m;
}

Model make_heisenberg_rotated(double theta) {
  Model m = make_heisenberg();
  m.name = "heisenberg-rot";
  const double c = std::cos(theta), s = std::sin(theta);
  Mat rot = Mat::from_rows({{c, -s}, {s, c}});
  auto base_sigma = m.sigma;
  auto base_dir = m.sigma_dir;
  m.sigma = [base_sigma, rot](std::span<const double> x, Mat& out) {
    Mat raw;
    base_sigma(x, raw);
    out = raw * rot;
  };
  m.sigma_dir = [base_dir, rot](std::span<const double> x, std::span<const double> v, Mat& out) {
    Mat raw;
    base_dir(x, v, raw);
    out = raw * rot;
  };
  return m;
}

Model make_dyson(int d, double gamma) {
  if (d < 2) throw std::invalid_argument("make_dyson: d must be >= 2");
  if (gamma <= 0.0) throw std::invalid_argument("make_dyson: gamma must be > 0");
  Model m;
  m.name = "dyson";
  m.n = d;
  m.d = d;
  m.drift_singular = true;
  m.sigma_constant = true;
  m.sigma_state_free = true;
  m.projection_constant = true;
  auto check = [d](std::span<const double> x) {
    for (int i = 0; i < d; ++i)
      for (int j = i + 1; j < d; ++j)
        if (std::abs(x[i] - x[j]) < kCollisionTol)
          throw SingularStateError("dyson drift evaluated at (near-)collision state");
  };
  m.drift = [d, gamma, check](std::span<const double> x, std::span<double> out) {
    check(x);
    for (int i = 0; i < d; ++i) {
      double s = 0.0;
      for (int j = 0; j < d; ++j)
        if (j != i) s += 1.0 / (x[i] - x[j]);
      out[i] = gamma * s;
    }
  };
  m.sigma = [d](std::span<const double>, Mat& out) {
    out.resize(d, d);
    for (int i = 0; i < d; ++i) out(i, i) = 1.0;
  };
  m.drift_jac = [d, gamma, check](std::span<const double> x, Mat& out) {
    check(x);
    out.resize(d, d);
    for (int i = 0; i < d; ++i) {
      double diag = 0.0;
      for (int j = 0; j < d; ++j) {
        if (j == i) continue;
        const double g = 1.0 / ((x[i] - x[j]) * (x[i] - x[j]));
        out(i, j) = gamma * g;
        diag -= g;
      }
      out(i, i) = gamma * diag;
    }
  };
  m.sigma_dir = [d](std::span<const double>, std::span<const double>, Mat& out) { out.resize(d, d); };
  return m;
}

Model make_classical(const Mat& a_drift, const Mat& big_sigma) {
  if (a_drift.rows() != a_drift.cols()) throw std::invalid_argument("make_classical: A must be square");
  if (big_sigma.rows() != a_drift.rows())
    throw std::invalid_argument("make_classical: Sigma rows must match state dimension");
  Model m;
  m.name = "classical";
  m.n = a_drift.rows();
  m.d = big_sigma.cols();
  m.projection_constant = true;
  m.sigma_constant = true;
  m.sigma_state_free = true;
  m.drift = [a_drift](std::span<const double> x, std::span<double> out) {
    matvec(a_drift, x, out);
  };
  m.sigma = [big_sigma](std::span<const double>, Mat& out) { out = big_sigma; };
  m.drift_jac = [a_drift](std::span<const double>, Mat& out) { out = a_drift; };
  const int n = m.n, d = m.d;
  m.sigma_dir = [n, d](std::span<const double>, std::span<const double>, Mat& out) { out.resize(n, d); };
  return m;
}

Model make_circle() {
  Model m;
  m.name = "circle";
  m.n = 1;
  m.d = 2;
  m.drift = [](std::span<const double>, std::span<double> out) { out[0] = 0.0; };
  m.sigma = [](std::span<const double> x, Mat& out) {
    out.resize(1, 2);
    out(0, 0) = std::cos(x[0]);
    out(0, 1) = std::sin(x[0]);
  };
  m.drift_jac = [](std::span<const double>, Mat& out) { out.resize(1, 1); };
  m.sigma_dir = [](std::span<const double> x, std::span<const double> v, Mat& out) {
    out.resize(1, 2);
    out(0, 0) = -std::sin(x[0]) * v[0];
    out(0, 1) = std::cos(x[0]) * v[0];
  };
  return m;
}

Model make_rankline() {
  Model m;
  m.name = "rankline";
  m.n = 1;
  m.d = 2;
  m.projection_constant = true;
  m.sigma_constant = true;
  m.sigma_state_free = true;
  m.drift = [](std::span<const double>, std::span<double> out) { out[0] = 0.0; };
  m.sigma = [](std::span<const double>, Mat& out) {
    out.resize(1, 2);
    out(0, 0) = 1.0;
  };
  m.drift_jac = [](std::span<const double>, Mat& out) { out.resize(1, 1); };
  m.sigma_dir = [](std::span<const double>, std::span<const double>, Mat& out) { out.resize(1, 2); };
  return m;
}

Model make_rankline_d1() {
  Model m = make_rankline();
  m.name = "rankline-d1";
  m.d = 1;
  m.sigma = [](std::span<const double>, Mat& out) {
    out.resize(1, 1);
    out(0, 0) = 1.0;
  };
  m.sigma_dir = [](std::span<const double>, std::span<const double>, Mat& out) { out.resize(1, 1); };
  return m;
}

std::array<double, 3> group_product(std::span<const double> p, std::span<const double> q) {
  return {p[0] + q[0], p[1] + q[1], p[2] + q[2] + 0.5 * (p[0] * q[1] - p[1] * q[0])};
}

std::array<double, 3> group_inverse(std::span<const double> p) { return {-p[0], -p[1], -p[2]}; }

std::array<double, 3> heisenberg_mirror(std::span<const double> p) { return {-p[0], -p[1], p[2]}; }

}  // namespace degdiff
