#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace degdiff {

using Vec = std::vector<double>;

// Small dense row-major matrix. Everything in this project is <= ~12x12,
// so no attempt is made at large-scale performance.
class Mat {
 public:
  Mat() = default;
  Mat(int rows, int cols) : rows_(rows), cols_(cols), a_(static_cast<size_t>(rows) * cols, 0.0) {}

  static Mat identity(int n);
  static Mat from_rows(std::initializer_list<std::initializer_list<double>> rows);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  double& operator()(int r, int c) { return a_[static_cast<size_t>(r) * cols_ + c]; }
  double operator()(int r, int c) const { return a_[static_cast<size_t>(r) * cols_ + c]; }
  const std::vector<double>& data() const { return a_; }
  std::vector<double>& data() { return a_; }

  void set_zero();
  // Reshape and zero-fill, reusing capacity when possible.
  void resize(int rows, int cols);
  bool all_finite() const;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> a_;
};

Mat operator+(const Mat& a, const Mat& b);
Mat operator-(const Mat& a, const Mat& b);
Mat operator*(const Mat& a, const Mat& b);
Mat operator*(double s, const Mat& a);
Mat transpose(const Mat& a);

void matvec(const Mat& a, std::span<const double> x, std::span<double> out);
Vec matvec(const Mat& a, std::span<const double> x);
// out += a * x
void matvec_acc(const Mat& a, std::span<const double> x, std::span<double> out);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);

struct Svd {
  Mat u;   // m x r columns (r = min(m, n))
  Vec s;   // singular values, descending
  Mat v;   // n x r columns
};

// One-sided Jacobi; exact enough for the tiny matrices used here.
Svd svd(const Mat& a);

struct SymEig {
  Mat q;   // orthonormal eigenvectors in columns
  Vec lam; // eigenvalues
};

// Cyclic Jacobi eigendecomposition of a symmetric matrix.
SymEig sym_eig(const Mat& a);

double frobenius_norm(const Mat& a);
double operator_norm(const Mat& a);

struct MatNorms {
  double frobenius;
  double op;
};
MatNorms norms(const Mat& a);

// Moore-Penrose pseudo-inverse; singular values below tol_rel * s_max are
// treated as zero.
Mat pinv(const Mat& m, double tol_rel = 1e-10);

// P = sigma^T (sigma sigma^T)^+ sigma, the orthogonal projector of R^d onto
// the range of sigma^T for an n x d matrix sigma.
Mat projection_range_adjoint(const Mat& sigma, double tol_rel = 1e-10);

// Condition number s_max / s_min (infinity if s_min == 0).
double condition_number(const Mat& a);

// Solve a x = b for square a (partial pivoting). Throws on (near-)singular a.
Vec solve(Mat a, Vec b);

}  // namespace degdiff
