#include "degdiff/malliavin.hpp"

#include <cmath>
#include <stdexcept>

namespace degdiff {

Mat dhat(const PathBundle& b, int t_idx, int tau_idx) {
  if (t_idx > tau_idx) throw std::invalid_argument("dhat: t_index must be <= tau_index");
  if (t_idx < 0 || t_idx >= b.grid.steps || tau_idx > b.grid.steps)
    throw std::invalid_argument("dhat: index out of range");
  if (!b.has_flows) throw std::invalid_argument("dhat: bundle has no flows");
  return b.jflow[tau_idx] * (b.kflow[t_idx] * b.sigma_at[t_idx]);
}

double div_adapted(const PathBundle& b, std::span<const double> etadot) {
  const int N = b.grid.steps, d = b.d;
  if (static_cast<int>(etadot.size()) != N * d) throw std::invalid_argument("div_adapted: kernel size mismatch");
  double s = 0.0;
  for (int i = 0; i < N; ++i) {
    const Mat& p = b.proj[i];
    const auto dB = b.incr(i);
    const auto eta = etadot.subspan(static_cast<size_t>(i) * d, d);
    for (int k = 0; k < d; ++k) {
      double pk = 0.0;
      for (int l = 0; l < d; ++l) pk += p(k, l) * eta[l];
      s += pk * dB[k];
    }
  }
  return s;
}

double conditional_wick(const PathBundle& b, const CameronMartinVector& h) {
  const int N = b.grid.steps, d = b.d;
  if (h.d != d || static_cast<int>(h.hdot.size()) != N * d)
    throw std::invalid_argument("conditional_wick: h does not match the bundle");
  const double dt = b.grid.dt();
  double ito = 0.0, qv = 0.0;
  Vec ph(d);
  for (int i = 0; i < N; ++i) {
    const Mat& p = b.proj[i];
    const auto hd = h.at(i);
    const auto dB = b.incr(i);
    for (int k = 0; k < d; ++k) {
      double s = 0.0;
      for (int l = 0; l < d; ++l) s += p(k, l) * hd[l];
      ph[k] = s;
    }
    for (int k = 0; k < d; ++k) {
      ito += ph[k] * dB[k];
      qv += ph[k] * ph[k];
    }
  }
  return std::exp(ito - 0.5 * qv * dt);
}

double wick_exponential(const PathBundle& b, const CameronMartinVector& h) {
  const int N = b.grid.steps, d = b.d;
  const double dt = b.grid.dt();
  double ito = 0.0, qv = 0.0;
  for (int i = 0; i < N; ++i) {
    const auto hd = h.at(i);
    const auto dB = b.incr(i);
    for (int k = 0; k < d; ++k) {
      ito += hd[k] * dB[k];
      qv += hd[k] * hd[k];
    }
  }
  return std::exp(ito - 0.5 * qv * dt);
}

ChaosResult chaos_integrals(const PathBundle& b, std::span<const double> f1, const Mat& f2) {
  const int N = b.grid.steps, d = b.d;
  if (static_cast<int>(f1.size()) != N * d) throw std::invalid_argument("chaos_integrals: f1 size mismatch");
  if (f2.rows() != d || f2.cols() != d) throw std::invalid_argument("chaos_integrals: f2 must be d x d");
  ChaosResult r;
  Vec prefix(d, 0.0);
  for (int j = 0; j < N; ++j) {
    const auto dm = b.m_incr(j);
    for (int k = 0; k < d; ++k) r.i1 += f1[static_cast<size_t>(j) * d + k] * dm[k];
    double s = 0.0;
    for (int a = 0; a < d; ++a)
      for (int c = 0; c < d; ++c) s += prefix[a] * f2(a, c) * dm[c];
    r.i2 += s;
    for (int k = 0; k < d; ++k) prefix[k] += dm[k];
  }
  return r;
}

double chaos_order2_general(const PathBundle& b, const std::function<void(int, int, Mat&)>& f2) {
  const int N = b.grid.steps, d = b.d;
  Mat ker;
  double s = 0.0;
  for (int i = 0; i < N; ++i)
    for (int j = i + 1; j < N; ++j) {
      f2(i, j, ker);
      const auto mi = b.m_incr(i);
      const auto mj = b.m_incr(j);
      for (int a = 0; a < d; ++a)
        for (int c = 0; c < d; ++c) s += ker(a, c) * mi[a] * mj[c];
    }
  return s;
}

std::pair<double, double> cond_ito_integral_deterministic(const PathBundle& b, std::span<const double> udot) {
  const int N = b.grid.steps, d = b.d;
  if (static_cast<int>(udot.size()) != N * d)
    throw std::invalid_argument("cond_ito_integral_deterministic: udot size mismatch");
  double lhs = 0.0, rhs = 0.0;
  for (int i = 0; i < N; ++i) {
    const auto dB = b.incr(i);
    const auto dm = b.m_incr(i);
    for (int k = 0; k < d; ++k) {
      lhs += udot[static_cast<size_t>(i) * d + k] * dB[k];
      // (P u, dB) = (u, P dB) since P is symmetric
      rhs += udot[static_cast<size_t>(i) * d + k] * dm[k];
    }
  }
  return {lhs, rhs};
}

CylFunctional make_cyl(const Expr& f, std::span<const int> node_indices, int n) {
  if (f.arity() != static_cast<int>(node_indices.size()) * n)
    throw std::invalid_argument("make_cyl: arity must equal (#times) * n");
  for (size_t k = 0; k < node_indices.size(); ++k) {
    if (node_indices[k] < 1) throw std::invalid_argument("make_cyl: node indices must be >= 1");
    if (k > 0 && node_indices[k] <= node_indices[k - 1])
      throw std::invalid_argument("make_cyl: node indices must be ascending");
  }
  return CylFunctional{f, std::vector<int>(node_indices.begin(), node_indices.end())};
}

Vec cyl_point(const PathBundle& b, const CylFunctional& F) {
  const int n = b.n;
  Vec pt(F.node_indices.size() * n);
  for (size_t k = 0; k < F.node_indices.size(); ++k) {
    const auto st = b.state(F.node_indices[k]);
    for (int j = 0; j < n; ++j) pt[k * n + j] = st[j];
  }
  return pt;
}

double cyl_eval(const PathBundle& b, const CylFunctional& F) { return F.f.eval(cyl_point(b, F)); }

void dhatF_series(const PathBundle& b, const CylFunctional& F, std::vector<double>& out) {
  const int N = b.grid.steps, n = b.n, d = b.d;
  if (!b.has_flows) throw std::invalid_argument("dhatF_series: bundle has no flows");
  out.assign(static_cast<size_t>(N) * d, 0.0);
  const Vec pt = cyl_point(b, F);
  const Vec g = F.f.grad(pt);

  // w_i = sum_{node_k >= i+1} (J_{node_k} J_{t_i}^{-1})^T g_k, accumulated
  // backwards through the one-step propagators. Equivalent to K_i^T J_tau^T
  // but stays finite when K alone would overflow (stiff squeezed drifts).
  Vec w(n, 0.0), tmp(n);
  int kidx = static_cast<int>(F.node_indices.size()) - 1;
  for (int i = N - 1; i >= 0; --i) {
    while (kidx >= 0 && F.node_indices[kidx] == i + 1) {
      for (int a = 0; a < n; ++a) w[a] += g[static_cast<size_t>(kidx) * n + a];
      --kidx;
    }
    // w <- E_i^T w
    const Mat& e = b.prop[i];
    for (int a = 0; a < n; ++a) {
      double s = 0.0;
      for (int c = 0; c < n; ++c) s += e(c, a) * w[c];
      tmp[a] = s;
    }
    w = tmp;
    const Mat& sg = b.sigma_at[i];
    for (int k = 0; k < d; ++k) {
      double s = 0.0;
      for (int a = 0; a < n; ++a) s += sg(a, k) * w[a];
      out[static_cast<size_t>(i) * d + k] = s;
    }
  }
}

double projected_energy(const PathBundle& b, std::span<const double> series) {
  const int N = b.grid.steps, d = b.d;
  if (static_cast<int>(series.size()) != N * d) throw std::invalid_argument("projected_energy: size mismatch");
  const double dt = b.grid.dt();
  double s = 0.0;
  for (int i = 0; i < N; ++i) {
    const Mat& p = b.proj[i];
    const auto v = series.subspan(static_cast<size_t>(i) * d, d);
    for (int k = 0; k < d; ++k) {
      double pk = 0.0;
      for (int l = 0; l < d; ++l) pk += p(k, l) * v[l];
      s += pk * pk;
    }
  }
  return s * dt;
}

double unprojected_energy(const PathBundle& b, std::span<const double> series) {
  const int N = b.grid.steps, d = b.d;
  const double dt = b.grid.dt();
  double s = 0.0;
  for (int i = 0; i < N; ++i)
    for (int k = 0; k < d; ++k) {
      const double v = series[static_cast<size_t>(i) * d + k];
      s += v * v;
    }
  return s * dt;
}

double nabla_h_of(const PathBundle& b, const CylFunctional& F) {
  if (!b.has_nabla) throw std::invalid_argument("nabla_h_of: bundle has no conditional-derivative component");
  const int n = b.n;
  const Vec pt = cyl_point(b, F);
  const Vec g = F.f.grad(pt);
  double s = 0.0;
  for (size_t k = 0; k < F.node_indices.size(); ++k) {
    const auto nb = b.nabla(F.node_indices[k]);
    for (int j = 0; j < n; ++j) s += g[k * n + j] * nb[j];
  }
  return s;
}

}  // namespace degdiff
