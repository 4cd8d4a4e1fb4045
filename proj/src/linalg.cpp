#include "degdiff/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace degdiff {

Mat Mat::identity(int n) {
  Mat m(n, n);
  for (int i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Mat Mat::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const int r = static_cast<int>(rows.size());
  const int c = r > 0 ? static_cast<int>(rows.begin()->size()) : 0;
  Mat m(r, c);
  int i = 0;
  for (const auto& row : rows) {
    if (static_cast<int>(row.size()) != c) throw std::invalid_argument("ragged rows");
    int j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

void Mat::set_zero() { std::fill(a_.begin(), a_.end(), 0.0); }

void Mat::resize(int rows, int cols) {
  rows_ = rows;
  cols_ = cols;
  a_.assign(static_cast<size_t>(rows) * cols, 0.0);
}

bool Mat::all_finite() const {
  for (double v : a_)
    if (!std::isfinite(v)) return false;
  return true;
}

Mat operator+(const Mat& a, const Mat& b) {
  Mat r(a.rows(), a.cols());
  for (size_t i = 0; i < r.data().size(); ++i) r.data()[i] = a.data()[i] + b.data()[i];
  return r;
}

Mat operator-(const Mat& a, const Mat& b) {
  Mat r(a.rows(), a.cols());
  for (size_t i = 0; i < r.data().size(); ++i) r.data()[i] = a.data()[i] - b.data()[i];
  return r;
}

Mat operator*(const Mat& a, const Mat& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul shape mismatch");
  Mat r(a.rows(), b.cols());
  for (int i = 0; i < a.rows(); ++i)
    for (int k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (int j = 0; j < b.cols(); ++j) r(i, j) += aik * b(k, j);
    }
  return r;
}

Mat operator*(double s, const Mat& a) {
  Mat r(a.rows(), a.cols());
  for (size_t i = 0; i < r.data().size(); ++i) r.data()[i] = s * a.data()[i];
  return r;
}

Mat transpose(const Mat& a) {
  Mat r(a.cols(), a.rows());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) r(j, i) = a(i, j);
  return r;
}

void matvec(const Mat& a, std::span<const double> x, std::span<double> out) {
  if (static_cast<int>(x.size()) != a.cols() || static_cast<int>(out.size()) != a.rows())
    throw std::invalid_argument("matvec shape mismatch");
  for (int i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (int j = 0; j < a.cols(); ++j) s += a(i, j) * x[j];
    out[i] = s;
  }
}

Vec matvec(const Mat& a, std::span<const double> x) {
  Vec out(a.rows());
  matvec(a, x, out);
  return out;
}

void matvec_acc(const Mat& a, std::span<const double> x, std::span<double> out) {
  for (int i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (int j = 0; j < a.cols(); ++j) s += a(i, j) * x[j];
    out[i] += s;
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

namespace {

void require_finite(const Mat& a, const char* what) {
  if (!a.all_finite()) throw std::invalid_argument(std::string(what) + ": non-finite entries");
}

}  // namespace

Svd svd(const Mat& a) {
  require_finite(a, "svd");
  const bool transposed = a.rows() < a.cols();
  Mat u = transposed ? transpose(a) : a;  // m x n, m >= n
  const int m = u.rows(), n = u.cols();
  Mat v = Mat::identity(n);

  // One-sided Jacobi: orthogonalize the columns of u.
  const double eps = std::numeric_limits<double>::epsilon();
  for (int sweep = 0; sweep < 60; ++sweep) {
    bool rotated = false;
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (int i = 0; i < m; ++i) {
          alpha += u(i, p) * u(i, p);
          beta += u(i, q) * u(i, q);
          gamma += u(i, p) * u(i, q);
        }
        if (std::abs(gamma) <= eps * std::sqrt(alpha * beta) || gamma == 0.0) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (int i = 0; i < m; ++i) {
          const double up = u(i, p), uq = u(i, q);
          u(i, p) = c * up - s * uq;
          u(i, q) = s * up + c * uq;
        }
        for (int i = 0; i < n; ++i) {
          const double vp = v(i, p), vq = v(i, q);
          v(i, p) = c * vp - s * vq;
          v(i, q) = s * vp + c * vq;
        }
      }
    }
    if (!rotated) break;
  }

  Vec s(n);
  for (int j = 0; j < n; ++j) {
    double nrm = 0.0;
    for (int i = 0; i < m; ++i) nrm += u(i, j) * u(i, j);
    s[j] = std::sqrt(nrm);
    if (s[j] > 0.0)
      for (int i = 0; i < m; ++i) u(i, j) /= s[j];
  }

  // Sort singular values descending.
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int i, int j) { return s[i] > s[j]; });
  Mat us(m, n), vs(n, n);
  Vec ss(n);
  for (int j = 0; j < n; ++j) {
    ss[j] = s[idx[j]];
    for (int i = 0; i < m; ++i) us(i, j) = u(i, idx[j]);
    for (int i = 0; i < n; ++i) vs(i, j) = v(i, idx[j]);
  }

  Svd out;
  out.s = std::move(ss);
  if (transposed) {
    out.u = std::move(vs);
    out.v = std::move(us);
  } else {
    out.u = std::move(us);
    out.v = std::move(vs);
  }
  return out;
}

SymEig sym_eig(const Mat& a) {
  const int n = a.rows();
  if (a.cols() != n) throw std::invalid_argument("sym_eig: matrix must be square");
  Mat m = a;
  Mat q = Mat::identity(n);
  for (int sweep = 0; sweep < 80; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n - 1; ++p)
      for (int r = p + 1; r < n; ++r) off += m(p, r) * m(p, r);
    if (off < 1e-30) break;
    for (int p = 0; p < n - 1; ++p) {
      for (int r = p + 1; r < n; ++r) {
        const double apq = m(p, r);
        if (apq == 0.0) continue;
        const double theta = (m(r, r) - m(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(1.0 + theta * theta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (int k = 0; k < n; ++k) {
          const double mkp = m(k, p), mkr = m(k, r);
          m(k, p) = c * mkp - s * mkr;
          m(k, r) = s * mkp + c * mkr;
        }
        for (int k = 0; k < n; ++k) {
          const double mpk = m(p, k), mrk = m(r, k);
          m(p, k) = c * mpk - s * mrk;
          m(r, k) = s * mpk + c * mrk;
        }
        for (int k = 0; k < n; ++k) {
          const double qkp = q(k, p), qkr = q(k, r);
          q(k, p) = c * qkp - s * qkr;
          q(k, r) = s * qkp + c * qkr;
        }
      }
    }
  }
  SymEig out;
  out.q = std::move(q);
  out.lam.resize(n);
  for (int i = 0; i < n; ++i) out.lam[i] = m(i, i);
  return out;
}

double frobenius_norm(const Mat& a) {
  double s = 0.0;
  for (double v : a.data()) s += v * v;
  return std::sqrt(s);
}

double operator_norm(const Mat& a) {
  if (a.rows() == 0 || a.cols() == 0) return 0.0;
  const Svd d = svd(a);
  return d.s.empty() ? 0.0 : d.s[0];
}

MatNorms norms(const Mat& a) {
  require_finite(a, "norms");
  return MatNorms{frobenius_norm(a), operator_norm(a)};
}

Mat pinv(const Mat& m, double tol_rel) {
  require_finite(m, "pinv");
  if (tol_rel <= 0.0) throw std::invalid_argument("pinv: tol_rel must be > 0");
  const Svd d = svd(m);
  const double smax = d.s.empty() ? 0.0 : d.s[0];
  const double cut = tol_rel * smax;
  Mat r(m.cols(), m.rows());
  for (size_t k = 0; k < d.s.size(); ++k) {
    if (d.s[k] <= cut || d.s[k] == 0.0) continue;
    const double inv = 1.0 / d.s[k];
    for (int i = 0; i < r.rows(); ++i)
      for (int j = 0; j < r.cols(); ++j) r(i, j) += inv * d.v(i, static_cast<int>(k)) * d.u(j, static_cast<int>(k));
  }
  return r;
}

Mat projection_range_adjoint(const Mat& sigma, double tol_rel) {
  require_finite(sigma, "projection_range_adjoint");
  const Mat st = transpose(sigma);
  const Mat a = sigma * st;  // n x n
  return st * (pinv(a, tol_rel) * sigma);
}

double condition_number(const Mat& a) {
  const Svd d = svd(a);
  if (d.s.empty()) return std::numeric_limits<double>::infinity();
  const double smin = d.s.back();
  if (smin <= 0.0) return std::numeric_limits<double>::infinity();
  return d.s[0] / smin;
}

Vec solve(Mat a, Vec b) {
  const int n = a.rows();
  if (a.cols() != n || static_cast<int>(b.size()) != n) throw std::invalid_argument("solve: shape mismatch");
  for (int k = 0; k < n; ++k) {
    int piv = k;
    for (int i = k + 1; i < n; ++i)
      if (std::abs(a(i, k)) > std::abs(a(piv, k))) piv = i;
    if (piv != k) {
      for (int j = 0; j < n; ++j) std::swap(a(k, j), a(piv, j));
      std::swap(b[k], b[piv]);
    }
    const double akk = a(k, k);
    if (std::abs(akk) < 1e-300) throw std::runtime_error("solve: singular matrix");
    for (int i = k + 1; i < n; ++i) {
      const double f = a(i, k) / akk;
      if (f == 0.0) continue;
      for (int j = k; j < n; ++j) a(i, j) -= f * a(k, j);
      b[i] -= f * b[k];
    }
  }
  Vec x(n);
  for (int i = n - 1; i >= 0; --i) {
    double s = b[i];
    for (int j = i + 1; j < n; ++j) s -= a(i, j) * x[j];
    x[i] = s / a(i, i);
  }
  return x;
}

}  // namespace degdiff
