#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "degdiff/linalg.hpp"
#include "degdiff/models.hpp"
#include "degdiff/rng.hpp"

namespace degdiff {

class BlowUpError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class StepRejectionError : public std::runtime_error {
 public:
  StepRejectionError(int step, const std::string& msg) : std::runtime_error(msg), step(step) {}
  int step;
};

struct TimeGrid {
  double horizon = 1.0;
  int steps = 1;
  double dt() const { return horizon / steps; }
  double time(int i) const { return horizon * i / steps; }
};

// Direction h in the Cameron-Martin space, stored through its piecewise
// constant density hdot on the grid cells.
struct CameronMartinVector {
  int d = 0;
  std::vector<double> hdot;  // steps * d, row-major

  std::span<const double> at(int i) const { return {hdot.data() + static_cast<size_t>(i) * d, static_cast<size_t>(d)}; }
  double norm_sq(const TimeGrid& g) const;

  static CameronMartinVector zero(int d, int steps);
  static CameronMartinVector constant(std::span<const double> values, int steps);
  // Smooth default direction used by checks: hdot_k(t) = cos(2 pi t + k).
  static CameronMartinVector fourier(int d, int steps, double horizon);
  static CameronMartinVector gaussian(const BrownianDriver& drv, uint64_t stream, int d, int steps, double scale);
};

// One realized trajectory with everything the Malliavin layer needs:
// states, increments, projected martingale increments, flows J and K and,
// optionally, the conditional derivative along a supplied h.
struct PathBundle {
  TimeGrid grid;
  int n = 0;
  int d = 0;
  std::vector<double> x;        // (N+1) * n
  std::vector<double> db;       // N * d
  std::vector<double> m;        // N * d
  std::vector<Mat> sigma_at;    // N, each n x d
  std::vector<Mat> proj;        // N, each d x d
  std::vector<Mat> jflow;       // N+1, each n x n (J_0 = I)
  std::vector<Mat> kflow;       // N+1, each n x n (K_0 = I)
  // One-step flow propagators, J_{i+1} = prop[i] * J_i. Backward products of
  // these give J_tau J_t^{-1} without forming the (possibly huge) K_t.
  std::vector<Mat> prop;        // N, each n x n
  std::vector<double> nabla_h;  // (N+1) * n when simulated with h
  bool has_flows = false;
  bool has_nabla = false;
  int refined_steps = 0;  // grid steps that needed safeguard bisection

  std::span<const double> state(int i) const { return {x.data() + static_cast<size_t>(i) * n, static_cast<size_t>(n)}; }
  std::span<const double> incr(int i) const { return {db.data() + static_cast<size_t>(i) * d, static_cast<size_t>(d)}; }
  std::span<const double> m_incr(int i) const { return {m.data() + static_cast<size_t>(i) * d, static_cast<size_t>(d)}; }
  std::span<const double> nabla(int i) const {
    return {nabla_h.data() + static_cast<size_t>(i) * n, static_cast<size_t>(n)};
  }
};

struct SimOptions {
  bool with_flows = true;
  // Jacobian driven by the raw increments instead of the projected ones
  // (used for the inner runs of the vector semigroup); K is not computed.
  bool plain_jacobian = false;
  // Skip P and m when nothing downstream consumes them (states-only runs);
  // forced on whenever flows or a conditional-derivative direction need the
  // projected increments.
  bool with_projection = true;
  int max_halvings = 20;
  double pinv_tol = 1e-10;
};

// Euler-Maruyama with coupled flows. When `increments` is given it must hold
// steps*d values and replaces the driver draws (used by level-coupled sweeps).
void simulate_into(PathBundle& out, const Model& model, const TimeGrid& grid, const BrownianDriver& driver,
                   uint64_t stream, std::span<const double> x0, const CameronMartinVector* h = nullptr,
                   const SimOptions& opts = {}, const std::vector<double>* increments = nullptr);

PathBundle simulate(const Model& model, const TimeGrid& grid, const BrownianDriver& driver, uint64_t stream,
                    std::span<const double> x0, const CameronMartinVector* h = nullptr, const SimOptions& opts = {},
                    const std::vector<double>* increments = nullptr);

// Same recursion with dB_i replaced by dB_i + hdot_i * dt.
PathBundle shift_simulate(const Model& model, const TimeGrid& grid, const BrownianDriver& driver, uint64_t stream,
                          std::span<const double> x0, const CameronMartinVector& h, const SimOptions& opts = {});
void shift_simulate_into(PathBundle& out, const Model& model, const TimeGrid& grid, const BrownianDriver& driver,
                         uint64_t stream, std::span<const double> x0, const CameronMartinVector& h,
                         const SimOptions& opts = {});

// Brownian increments for each requested level (ascending powers of two),
// coupled across levels by bridge bisection of the coarsest level's path.
std::vector<std::vector<double>> coupled_increment_levels(const BrownianDriver& driver, uint64_t stream, int d,
                                                          double horizon, const std::vector<int>& levels);

bool is_power_of_two(int v);

}  // namespace degdiff
