#pragma once

#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "degdiff/expr.hpp"
#include "degdiff/linalg.hpp"
#include "degdiff/sde.hpp"

namespace degdiff {

// D-hat_t X_tau = J_tau K_t sigma(X_t) from the stored flows.
// t_idx indexes a grid cell (0..N-1), tau_idx a node (t_idx..N).
Mat dhat(const PathBundle& b, int t_idx, int tau_idx);

// Adapted divergence, Eq. form delta_nu(eta) = sum_i (P_i etadot_i, dB_i).
// etadot has one R^d row per grid cell and may only depend on the bundle up
// to its own cell (caller contract).
double div_adapted(const PathBundle& b, std::span<const double> etadot);

// E[rho(delta h) | F_1(X)] = exp(sum (P hdot, dB) - 1/2 sum |P hdot|^2 dt).
double conditional_wick(const PathBundle& b, const CameronMartinVector& h);

// Full Wick exponential rho(delta h) on this path.
double wick_exponential(const PathBundle& b, const CameronMartinVector& h);

struct ChaosResult {
  double i1 = 0.0;
  double i2 = 0.0;
};

// Iterated integrals against m at chaos orders 1 and 2.
// f1: one R^d value per grid cell; f2: constant d x d kernel on the simplex
// {i < j}, contracted as sum_{i<j} dm_i^T f2 dm_j.
ChaosResult chaos_integrals(const PathBundle& b, std::span<const double> f1, const Mat& f2);
// General order-2 kernel (O(N^2); test/diagnostic sizes only).
double chaos_order2_general(const PathBundle& b, const std::function<void(int, int, Mat&)>& f2);

// lhs = sum (udot, dB); rhs = sum (P udot, dB) for a deterministic udot
// (one R^d row per cell). The conditional identity between them is checked
// statistically downstream.
std::pair<double, double> cond_ito_integral_deterministic(const PathBundle& b, std::span<const double> udot);

// Cylindrical functional F = f(X at the listed nodes), flat arity m*n with
// x_{(k-1)*n + j} = coordinate j at the k-th listed node.
struct CylFunctional {
  Expr f;
  std::vector<int> node_indices;  // ascending, in [1, N]
};

CylFunctional make_cyl(const Expr& f, std::span<const int> node_indices, int n);

Vec cyl_point(const PathBundle& b, const CylFunctional& F);
double cyl_eval(const PathBundle& b, const CylFunctional& F);

// Per-cell conditional derivative density D-hat_{t_i} F in R^d via the chain
// rule through the flows. out has N*d entries.
void dhatF_series(const PathBundle& b, const CylFunctional& F, std::vector<double>& out);

// |P(X) nabla-hat F|_H^2 = sum_i |P_i v_i|^2 dt for a cell series v.
double projected_energy(const PathBundle& b, std::span<const double> series);
double unprojected_energy(const PathBundle& b, std::span<const double> series);

// nabla-hat_h F via the bundle's coupled conditional-derivative component.
double nabla_h_of(const PathBundle& b, const CylFunctional& F);

}  // namespace degdiff
