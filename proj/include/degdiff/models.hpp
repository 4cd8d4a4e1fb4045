#pragma once

#include <array>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>

#include "degdiff/linalg.hpp"

namespace degdiff {

class SingularStateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Coefficient bundle for one diffusion: drift b, diffusion sigma and their
// analytic state-derivatives. dsigma(x, v) is the directional derivative of
// sigma at x along v (linear in v).
struct Model {
  std::string name;
  int n = 0;  // state dimension
  int d = 0;  // noise dimension

  std::function<void(std::span<const double> x, std::span<double> out)> drift;
  std::function<void(std::span<const double> x, Mat& out)> sigma;        // n x d
  std::function<void(std::span<const double> x, Mat& out)> drift_jac;    // n x n
  std::function<void(std::span<const double> x, std::span<const double> v, Mat& out)> sigma_dir;  // n x d

  bool drift_singular = false;
  bool projection_constant = false;
  bool sigma_constant = false;
  bool sigma_state_free = false;  // dsigma == 0
  bool group_heisenberg = false;  // left/right semigroups via the group law

  Vec default_x0() const;
};

Model make_heisenberg();
Model make_dyson(int d, double gamma);
Model make_classical(const Mat& a_drift, const Mat& big_sigma);
Model make_circle();
Model make_rankline();
// d=1 refactorization of rankline: same a = sigma sigma^T = [1].
Model make_rankline_d1();
// Heisenberg with sigma replaced by sigma * R(theta); same a.
Model make_heisenberg_rotated(double theta);

// Heisenberg group operations on R^3.
std::array<double, 3> group_product(std::span<const double> p, std::span<const double> q);
std::array<double, 3> group_inverse(std::span<const double> p);
// The isometry A = diag(-1,-1,1); y_t = A x_t has the law of x_t.
std::array<double, 3> heisenberg_mirror(std::span<const double> p);

}  // namespace degdiff
