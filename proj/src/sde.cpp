#include "degdiff/sde.hpp"

#include <cmath>
#include <cstring>

namespace degdiff {

double CameronMartinVector::norm_sq(const TimeGrid& g) const {
  double s = 0.0;
  for (double v : hdot) s += v * v;
  return s * g.dt();
}

CameronMartinVector CameronMartinVector::zero(int d, int steps) {
  return CameronMartinVector{d, std::vector<double>(static_cast<size_t>(steps) * d, 0.0)};
}

CameronMartinVector CameronMartinVector::constant(std::span<const double> values, int steps) {
  CameronMartinVector h;
  h.d = static_cast<int>(values.size());
  h.hdot.resize(static_cast<size_t>(steps) * h.d);
  for (int i = 0; i < steps; ++i)
    for (int k = 0; k < h.d; ++k) h.hdot[static_cast<size_t>(i) * h.d + k] = values[k];
  return h;
}

CameronMartinVector CameronMartinVector::fourier(int d, int steps, double horizon) {
  CameronMartinVector h;
  h.d = d;
  h.hdot.resize(static_cast<size_t>(steps) * d);
  const double dt = horizon / steps;
  for (int i = 0; i < steps; ++i) {
    const double t = i * dt;
    for (int k = 0; k < d; ++k)
      h.hdot[static_cast<size_t>(i) * d + k] = std::cos(2.0 * 3.14159265358979323846 * t / horizon + k);
  }
  return h;
}

CameronMartinVector CameronMartinVector::gaussian(const BrownianDriver& drv, uint64_t stream, int d, int steps,
                                                  double scale) {
  CameronMartinVector h;
  h.d = d;
  h.hdot.resize(static_cast<size_t>(steps) * d);
  for (int i = 0; i < steps; ++i)
    for (int k = 0; k < d; ++k)
      h.hdot[static_cast<size_t>(i) * d + k] = scale * drv.normal(stream, slot_direction(i, k, d));
  return h;
}

bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

namespace {

struct FlowWorkspace {
  Mat db_jac;               // n x n
  Mat dsig_dir;             // n x d, scratch for sigma_dir calls
  std::vector<Mat> basis_dirs;  // n of n x d: dsigma(x, e_b)
  Mat cproj;                // n x d scratch
  Vec col, newcol, tmp_n;
  Mat jnew, knew, m1, m2, step_e;
};

inline bool ordered_with_gap(std::span<const double> x, double tol) {
  for (size_t i = 0; i + 1 < x.size(); ++i)
    if (!(x[i + 1] - x[i] > tol)) return false;
  return true;
}

inline double min_gap(std::span<const double> x) {
  double g = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i + 1 < x.size(); ++i) g = std::min(g, x[i + 1] - x[i]);
  return g;
}

// State advanced through one (sub)step; flows follow the same partition.
struct StepState {
  Vec x;
  Mat j, k;
  Mat e;  // propagator accumulated over the current grid step
  Vec nab;
};

class Integrator {
 public:
  Integrator(const Model& model, const TimeGrid& grid, const BrownianDriver& driver, uint64_t stream,
             const SimOptions& opts, bool shifted, const CameronMartinVector* h)
      : model_(model), grid_(grid), driver_(driver), stream_(stream), opts_(opts), shifted_(shifted), h_(h) {}

  void run(PathBundle& b, std::span<const double> x0, const std::vector<double>* increments) {
    const int n = model_.n, d = model_.d;
    const int N = grid_.steps;
    if (static_cast<int>(x0.size()) != n) throw std::invalid_argument("simulate: x0 dimension != n");
    if (h_ && h_->d != d) throw std::invalid_argument("simulate: h noise dimension != d");
    if (h_ && static_cast<int>(h_->hdot.size()) != N * d)
      throw std::invalid_argument("simulate: h grid does not match");
    if (increments && static_cast<int>(increments->size()) != N * d)
      throw std::invalid_argument("simulate: increments size mismatch");
    if (model_.drift_singular && !ordered_with_gap(x0, 1e-12))
      throw std::invalid_argument("simulate: x0 must be strictly ordered for a singular drift");

    b.grid = grid_;
    b.n = n;
    b.d = d;
    b.x.assign(static_cast<size_t>(N + 1) * n, 0.0);
    b.db.assign(static_cast<size_t>(N) * d, 0.0);
    b.m.assign(static_cast<size_t>(N) * d, 0.0);
    b.sigma_at.resize(N);
    b.proj.resize(N);
    const bool flows = opts_.with_flows;
    b.has_flows = flows && !opts_.plain_jacobian;
    b.jflow.resize(flows ? N + 1 : 0);
    b.kflow.resize(b.has_flows ? N + 1 : 0);
    b.prop.resize(flows ? N : 0);
    const bool nabla = h_ != nullptr && !shifted_;
    b.has_nabla = nabla;
    b.nabla_h.assign(nabla ? static_cast<size_t>(N + 1) * n : 0, 0.0);
    b.refined_steps = 0;

    std::copy(x0.begin(), x0.end(), b.x.begin());
    if (flows) {
      b.jflow[0] = Mat::identity(n);
      if (b.has_flows) b.kflow[0] = Mat::identity(n);
    }

    StepState st;
    st.x.assign(x0.begin(), x0.end());
    if (flows) {
      st.j = Mat::identity(n);
      if (b.has_flows) st.k = Mat::identity(n);
    }
    if (nabla) st.nab.assign(n, 0.0);

    ws_.basis_dirs.resize(model_.sigma_state_free ? 0 : n);
    ws_.tmp_n.resize(n);
    ws_.col.resize(n);
    ws_.newcol.resize(n);

    const double dt = grid_.dt();
    const double sq_dt = std::sqrt(dt);
    Vec dB(d), dm(d, 0.0), hstep(d, 0.0);

    const bool need_proj = opts_.with_projection || b.has_flows || nabla;
    if (model_.sigma_constant) {
      model_.sigma(st.x, sigma_cache_);
      if (need_proj) proj_cache_ = projection_range_adjoint(sigma_cache_, opts_.pinv_tol);
    }

    for (int i = 0; i < N; ++i) {
      // increments
      for (int k = 0; k < d; ++k) {
        double v = increments ? (*increments)[static_cast<size_t>(i) * d + k]
                              : sq_dt * driver_.normal(stream_, slot_path(i, k, d));
        if (shifted_) v += h_->hdot[static_cast<size_t>(i) * d + k] * dt;
        dB[k] = v;
        b.db[static_cast<size_t>(i) * d + k] = v;
      }
      if (h_ && !shifted_) {
        for (int k = 0; k < d; ++k) hstep[k] = h_->hdot[static_cast<size_t>(i) * d + k];
      }

      // coefficients at the left node
      Mat& sig = b.sigma_at[i];
      Mat& prj = b.proj[i];
      if (model_.sigma_constant) {
        sig = sigma_cache_;
        if (need_proj) prj = proj_cache_;
      } else {
        model_.sigma(st.x, sig);
        if (need_proj) prj = projection_range_adjoint(sig, opts_.pinv_tol);
      }
      if (need_proj) {
        for (int k = 0; k < d; ++k) {
          double s = 0.0;
          for (int l = 0; l < d; ++l) s += prj(k, l) * dB[l];
          dm[k] = s;
          b.m[static_cast<size_t>(i) * d + k] = s;
        }
      }

      if (flows) st.e = Mat::identity(n);
      if (model_.drift_singular) {
        advance_singular(st, b, i, dt, dB, nabla ? hstep : Vec{}, flows, nabla);
      } else {
        advance_plain(st, b, dt, dB, dm, sig, prj, nabla ? hstep : Vec{}, flows, nabla);
      }

      for (int a = 0; a < n; ++a) {
        const double v = st.x[a];
        if (!std::isfinite(v)) throw BlowUpError("simulate: non-finite state at step " + std::to_string(i));
        b.x[static_cast<size_t>(i + 1) * n + a] = v;
      }
      if (flows) {
        b.jflow[i + 1] = st.j;
        if (b.has_flows) b.kflow[i + 1] = st.k;
        b.prop[i] = st.e;
      }
      if (nabla)
        for (int a = 0; a < n; ++a) b.nabla_h[static_cast<size_t>(i + 1) * n + a] = st.nab[a];
    }
  }

 private:
  // One Euler step for Lipschitz models; flows use the projected increment
  // (or the raw one for the plain Jacobian mode).
  void advance_plain(StepState& st, PathBundle& b, double dt, const Vec& dB, const Vec& dm, const Mat& sig,
                     const Mat& prj, const Vec& hstep, bool flows, bool nabla) {
    const int n = model_.n, d = model_.d;
    const Vec& noise = opts_.plain_jacobian ? dB : dm;

    if (flows || nabla) model_.drift_jac(st.x, ws_.db_jac);

    if (flows) {
      build_propagator(st.x, noise, dt, ws_.step_e);
      ws_.jnew = ws_.step_e * st.j;
      st.j = ws_.jnew;
      ws_.jnew = ws_.step_e * st.e;
      st.e = ws_.jnew;
      if (b.has_flows) update_inverse(st.k, st.x, dm, prj, dt);
    }
    if (nabla) {
      // cond_thm recursion: dsigma(x, nab) dm + db nab dt + sigma hdot dt
      ws_.newcol = st.nab;
      if (!model_.sigma_state_free) {
        model_.sigma_dir(st.x, st.nab, ws_.dsig_dir);
        for (int a = 0; a < n; ++a) {
          double s = 0.0;
          for (int k = 0; k < d; ++k) s += ws_.dsig_dir(a, k) * dm[k];
          ws_.newcol[a] += s;
        }
      }
      for (int a = 0; a < n; ++a) {
        double s = 0.0;
        for (int c = 0; c < n; ++c) s += ws_.db_jac(a, c) * st.nab[c];
        double sh = 0.0;
        for (int k = 0; k < d; ++k) sh += sig(a, k) * hstep[k];
        ws_.newcol[a] += dt * s + dt * sh;
      }
      st.nab = ws_.newcol;
    }

    // state update last: coefficients above are evaluated at the left node
    model_.drift(st.x, ws_.tmp_n);
    for (int a = 0; a < n; ++a) {
      double s = 0.0;
      for (int k = 0; k < d; ++k) s += sig(a, k) * dB[k];
      st.x[a] += ws_.tmp_n[a] * dt + s;
    }
  }

  // E = I + sum_k dsigma^k(x) noise_k + db dt, so that J' = E J.
  void build_propagator(const Vec& x, const Vec& noise, double dt, Mat& e) {
    const int n = model_.n, d = model_.d;
    e.resize(n, n);
    for (int a = 0; a < n; ++a) e(a, a) = 1.0;
    if (!model_.sigma_state_free) {
      for (int b2 = 0; b2 < n; ++b2) {
        std::fill(ws_.col.begin(), ws_.col.end(), 0.0);
        ws_.col[b2] = 1.0;
        model_.sigma_dir(x, ws_.col, ws_.dsig_dir);
        for (int a = 0; a < n; ++a) {
          double s = 0.0;
          for (int k = 0; k < d; ++k) s += ws_.dsig_dir(a, k) * noise[k];
          e(a, b2) += s;
        }
      }
    }
    for (int a = 0; a < n; ++a)
      for (int c = 0; c < n; ++c) e(a, c) += dt * ws_.db_jac(a, c);
  }

  // K-eqn: dK = -K dsig^k dm^k + K (sum_{k,l} dsig^k dsig^l P_kl - db) dt
  void update_inverse(Mat& k, const Vec& x, const Vec& dm, const Mat& prj, double dt) {
    const int n = model_.n, d = model_.d;
    if (model_.sigma_state_free) {
      // K' = K - dt K db
      ws_.knew = k;
      for (int a = 0; a < n; ++a)
        for (int b2 = 0; b2 < n; ++b2) {
          double s = 0.0;
          for (int c = 0; c < n; ++c) s += k(a, c) * ws_.db_jac(c, b2);
          ws_.knew(a, b2) -= dt * s;
        }
      k = ws_.knew;
      return;
    }
    // basis_dirs[b] = dsigma(x, e_b); column matrices A_k(a,b) = basis_dirs[b](a,k)
    for (int b2 = 0; b2 < n; ++b2) {
      std::fill(ws_.col.begin(), ws_.col.end(), 0.0);
      ws_.col[b2] = 1.0;
      model_.sigma_dir(x, ws_.col, ws_.basis_dirs[b2]);
    }
    // m1 = sum_k A_k dm^k   (column b = basis_dirs[b] * dm)
    ws_.m1.resize(n, n);
    for (int b2 = 0; b2 < n; ++b2)
      for (int a = 0; a < n; ++a) {
        double s = 0.0;
        for (int kk = 0; kk < d; ++kk) s += ws_.basis_dirs[b2](a, kk) * dm[kk];
        ws_.m1(a, b2) = s;
      }
    // m2 = sum_{k,l} A_k A_l P_kl;  m2(a,b) = sum_c sum_k B_c(a,k) (B_b P)(c,k)
    ws_.m2.resize(n, n);
    for (int b2 = 0; b2 < n; ++b2) {
      ws_.cproj.resize(n, d);
      for (int c = 0; c < n; ++c)
        for (int kk = 0; kk < d; ++kk) {
          double s = 0.0;
          for (int l = 0; l < d; ++l) s += ws_.basis_dirs[b2](c, l) * prj(kk, l);
          ws_.cproj(c, kk) = s;
        }
      for (int a = 0; a < n; ++a) {
        double s = 0.0;
        for (int c = 0; c < n; ++c)
          for (int kk = 0; kk < d; ++kk) s += ws_.basis_dirs[c](a, kk) * ws_.cproj(c, kk);
        ws_.m2(a, b2) = s;
      }
    }
    // K' = K - K m1 + dt K (m2 - db)
    ws_.knew = k;
    for (int a = 0; a < n; ++a)
      for (int b2 = 0; b2 < n; ++b2) {
        double s1 = 0.0, s2 = 0.0;
        for (int c = 0; c < n; ++c) {
          s1 += k(a, c) * ws_.m1(c, b2);
          s2 += k(a, c) * (ws_.m2(c, b2) - ws_.db_jac(c, b2));
        }
        ws_.knew(a, b2) += -s1 + dt * s2;
      }
    k = ws_.knew;
  }

  // Dyson step: drift taming plus bisection retries on ordering violations.
  void advance_singular(StepState& st, PathBundle& b, int i, double dt, const Vec& dB, const Vec& hstep, bool flows,
                        bool nabla) {
    const int depth0 = 0;
    const bool refined = !try_substep(st, b, i, dt, dB, hstep, flows, nabla, depth0, 1);
    if (refined) b.refined_steps += 1;
  }

  // Returns true when the step went through whole; throws on exhaustion.
  // `node` is the heap index of this (sub)interval within the grid step.
  bool try_substep(StepState& st, PathBundle& b, int i, double dt, const Vec& dB, const Vec& hstep, bool flows,
                   bool nabla, int depth, int node) {
    const int n = model_.n, d = model_.d;
    model_.drift(st.x, ws_.tmp_n);
    double bn = 0.0;
    for (int a = 0; a < n; ++a) bn += ws_.tmp_n[a] * ws_.tmp_n[a];
    bn = std::sqrt(bn);
    const double gap = min_gap(st.x);
    double scale = 1.0;
    if (bn * dt > gap / 2.0 && bn > 0.0) scale = (gap / 2.0) / (bn * dt);

    Vec xnew(n);
    for (int a = 0; a < n; ++a) xnew[a] = st.x[a] + scale * ws_.tmp_n[a] * dt + dB[a] + hstep_contrib(hstep, a) * dt;

    if (ordered_with_gap(xnew, 1e-12)) {
      if (flows || nabla) model_.drift_jac(st.x, ws_.db_jac);
      if (flows) {
        // sigma == I and dsigma == 0 for singular-drift models
        update_flows_drift_only(st, dt, b.has_flows);
      }
      if (nabla) {
        for (int a = 0; a < n; ++a) {
          double s = 0.0;
          for (int c = 0; c < n; ++c) s += ws_.db_jac(a, c) * st.nab[c];
          ws_.newcol[a] = st.nab[a] + dt * s + dt * hstep_contrib(hstep, a);
        }
        st.nab = ws_.newcol;
      }
      st.x = xnew;
      return depth == 0;
    }

    if (depth >= opts_.max_halvings) {
      // Terminal fallback: one implicit (resolvent) substep. Solving
      // y - dt b(y) = x + dB is the optimality condition of a strictly
      // convex log-barrier problem, so y stays inside the ordered chamber.
      implicit_substep(st, b, i, dt, dB, hstep, flows, nabla);
      return false;
    }

    // Brownian bridge: split dB into two halves sharing the endpoint.
    Vec left(d), right(d);
    const double sd = std::sqrt(dt) / 2.0;
    for (int k = 0; k < d; ++k) {
      const double xi = sd * driver_.normal(stream_, slot_substep(i, node, k, d));
      left[k] = dB[k] / 2.0 + xi;
      right[k] = dB[k] - left[k];
    }
    try_substep(st, b, i, dt / 2.0, left, hstep, flows, nabla, depth + 1, 2 * node);
    try_substep(st, b, i, dt / 2.0, right, hstep, flows, nabla, depth + 1, 2 * node + 1);
    return false;
  }

  void implicit_substep(StepState& st, PathBundle& b, int i, double dt, const Vec& dB, const Vec& hstep, bool flows,
                        bool nabla) {
    const int n = model_.n;
    Vec rhs(n), y(st.x), resid(n), delta(n), cand(n);
    for (int a = 0; a < n; ++a) rhs[a] = st.x[a] + dB[a] + hstep_contrib(hstep, a) * dt;

    auto residual_norm = [&](const Vec& v, Vec& out) {
      model_.drift(v, ws_.tmp_n);
      double fn = 0.0;
      for (int a = 0; a < n; ++a) {
        out[a] = v[a] - rhs[a] - dt * ws_.tmp_n[a];
        fn += out[a] * out[a];
      }
      return std::sqrt(fn);
    };

    const double tol = 1e-12 * (1.0 + norm2(rhs));
    double fn = residual_norm(y, resid);
    bool converged = fn <= tol;
    for (int iter = 0; iter < 200 && !converged; ++iter) {
      model_.drift_jac(y, ws_.db_jac);
      Mat hess = Mat::identity(n);
      for (int a = 0; a < n; ++a)
        for (int c = 0; c < n; ++c) hess(a, c) -= dt * ws_.db_jac(a, c);
      for (int a = 0; a < n; ++a) delta[a] = -resid[a];
      delta = solve(hess, delta);
      double tstep = 1.0;
      bool moved = false;
      Vec cres(n);
      for (int bt = 0; bt < 80; ++bt) {
        for (int a = 0; a < n; ++a) cand[a] = y[a] + tstep * delta[a];
        if (ordered_with_gap(cand, 2e-12)) {
          const double cfn = residual_norm(cand, cres);
          if (cfn <= (1.0 - 0.25 * tstep) * fn || cfn <= tol) {
            y = cand;
            resid = cres;
            fn = cfn;
            moved = true;
            break;
          }
        }
        tstep /= 2.0;
      }
      if (!moved) break;
      converged = fn <= tol;
    }
    if (!converged && fn > 1e-8 * (1.0 + norm2(rhs)))
      throw StepRejectionError(i, "dyson safeguard exhausted at step " + std::to_string(i));

    if (flows || nabla) model_.drift_jac(st.x, ws_.db_jac);
    if (flows) update_flows_drift_only(st, dt, b.has_flows);
    if (nabla) {
      for (int a = 0; a < n; ++a) {
        double s = 0.0;
        for (int c = 0; c < n; ++c) s += ws_.db_jac(a, c) * st.nab[c];
        ws_.newcol[a] = st.nab[a] + dt * s + dt * hstep_contrib(hstep, a);
      }
      st.nab = ws_.newcol;
    }
    st.x = y;
  }

  static double hstep_contrib(const Vec& hstep, int a) { return hstep.empty() ? 0.0 : hstep[a]; }

  void update_jacobian_drift_only(Mat& j, double dt) {
    const int n = model_.n;
    ws_.jnew = j;
    for (int a = 0; a < n; ++a)
      for (int c = 0; c < n; ++c) {
        double s = 0.0;
        for (int cc = 0; cc < n; ++cc) s += ws_.db_jac(a, cc) * j(cc, c);
        ws_.jnew(a, c) += dt * s;
      }
    j = ws_.jnew;
  }

  void update_inverse_drift_only(Mat& k, double dt) {
    const int n = model_.n;
    ws_.knew = k;
    for (int a = 0; a < n; ++a)
      for (int b2 = 0; b2 < n; ++b2) {
        double s = 0.0;
        for (int c = 0; c < n; ++c) s += k(a, c) * ws_.db_jac(c, b2);
        ws_.knew(a, b2) -= dt * s;
      }
    k = ws_.knew;
  }

  // Drift-only flow updates for singular-drift models. The repulsive drift
  // Jacobian is symmetric negative-semidefinite but stiff near squeezed gaps
  // (|db| dt >> 1); there the Euler recursion is unstable, so the update
  // switches to the exact frozen-coefficient exponential exp(db dt).
  void update_flows_drift_only(StepState& st, double dt, bool has_k) {
    const int n = model_.n;
    if (frobenius_norm(ws_.db_jac) * dt <= 0.5) {
      update_jacobian_drift_only(st.j, dt);
      update_jacobian_drift_only(st.e, dt);
      if (has_k) update_inverse_drift_only(st.k, dt);
      return;
    }
    const SymEig eig = sym_eig(ws_.db_jac);
    auto apply = [&](Mat& target, bool from_left, double sign) {
      // from_left: target <- Q e^{sign lam dt} Q^T target; else target Q e Q^T
      Mat e(n, n);
      for (int a = 0; a < n; ++a)
        for (int c = 0; c < n; ++c) {
          double s = 0.0;
          for (int l = 0; l < n; ++l) s += eig.q(a, l) * std::exp(sign * eig.lam[l] * dt) * eig.q(c, l);
          e(a, c) = s;
        }
      target = from_left ? e * target : target * e;
    };
    apply(st.j, true, +1.0);
    apply(st.e, true, +1.0);
    if (has_k) apply(st.k, false, -1.0);
  }

  const Model& model_;
  const TimeGrid& grid_;
  const BrownianDriver& driver_;
  uint64_t stream_;
  const SimOptions& opts_;
  bool shifted_;
  const CameronMartinVector* h_;
  FlowWorkspace ws_;
  Mat sigma_cache_, proj_cache_;
};

}  // namespace

void simulate_into(PathBundle& out, const Model& model, const TimeGrid& grid, const BrownianDriver& driver,
                   uint64_t stream, std::span<const double> x0, const CameronMartinVector* h, const SimOptions& opts,
                   const std::vector<double>* increments) {
  Integrator integ(model, grid, driver, stream, opts, /*shifted=*/false, h);
  integ.run(out, x0, increments);
}

PathBundle simulate(const Model& model, const TimeGrid& grid, const BrownianDriver& driver, uint64_t stream,
                    std::span<const double> x0, const CameronMartinVector* h, const SimOptions& opts,
                    const std::vector<double>* increments) {
  PathBundle b;
  simulate_into(b, model, grid, driver, stream, x0, h, opts, increments);
  return b;
}

void shift_simulate_into(PathBundle& out, const Model& model, const TimeGrid& grid, const BrownianDriver& driver,
                         uint64_t stream, std::span<const double> x0, const CameronMartinVector& h,
                         const SimOptions& opts) {
  Integrator integ(model, grid, driver, stream, opts, /*shifted=*/true, &h);
  integ.run(out, x0, nullptr);
}

PathBundle shift_simulate(const Model& model, const TimeGrid& grid, const BrownianDriver& driver, uint64_t stream,
                          std::span<const double> x0, const CameronMartinVector& h, const SimOptions& opts) {
  PathBundle b;
  shift_simulate_into(b, model, grid, driver, stream, x0, h, opts);
  return b;
}

std::vector<std::vector<double>> coupled_increment_levels(const BrownianDriver& driver, uint64_t stream, int d,
                                                          double horizon, const std::vector<int>& levels) {
  if (levels.empty()) throw std::invalid_argument("coupled_increment_levels: empty level list");
  for (size_t i = 0; i < levels.size(); ++i) {
    if (!is_power_of_two(levels[i])) throw std::invalid_argument("levels must be powers of two");
    if (i > 0 && levels[i] <= levels[i - 1]) throw std::invalid_argument("levels must be ascending");
  }
  std::vector<std::vector<double>> out;
  out.reserve(levels.size());

  const int coarse = levels.front();
  std::vector<double> cur(static_cast<size_t>(coarse) * d);
  const double sq0 = std::sqrt(horizon / coarse);
  for (int i = 0; i < coarse; ++i)
    for (int k = 0; k < d; ++k) cur[static_cast<size_t>(i) * d + k] = sq0 * driver.normal(stream, slot_path(i, k, d));

  int cells = coarse;
  size_t next_idx = 0;
  if (levels[0] == cells) {
    out.push_back(cur);
    next_idx = 1;
  }
  while (next_idx < levels.size()) {
    // one bisection: cells -> 2*cells
    const double dt = horizon / cells;
    const double sd = std::sqrt(dt) / 2.0;
    std::vector<double> fine(static_cast<size_t>(2 * cells) * d);
    const int level_tag = [&] {
      int lg = 0;
      for (int v = 2 * cells; v > 1; v >>= 1) ++lg;
      return lg;
    }();
    for (int i = 0; i < cells; ++i)
      for (int k = 0; k < d; ++k) {
        const double total = cur[static_cast<size_t>(i) * d + k];
        const double xi = sd * driver.normal(stream, slot_bridge(level_tag, i, k, d));
        fine[static_cast<size_t>(2 * i) * d + k] = total / 2.0 + xi;
        fine[static_cast<size_t>(2 * i + 1) * d + k] = total / 2.0 - xi;
      }
    cur = std::move(fine);
    cells *= 2;
    if (cells == levels[next_idx]) {
      out.push_back(cur);
      ++next_idx;
    }
  }
  return out;
}

}  // namespace degdiff
