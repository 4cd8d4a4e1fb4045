#include "degdiff/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <thread>

namespace degdiff {

McResult summarize(std::span<const double> samples) {
  if (samples.size() < 1) throw std::invalid_argument("summarize: empty sample set");
  long long bad = 0;
  double mean = 0.0;
  long long n = 0;
  for (double v : samples) {
    if (!std::isfinite(v)) {
      ++bad;
      continue;
    }
    ++n;
    mean += (v - mean) / n;
  }
  if (bad > 0 && bad * 1000 > static_cast<long long>(samples.size()))
    throw std::runtime_error("summarize: more than 0.1% non-finite samples");
  if (n == 0) throw std::runtime_error("summarize: no finite samples");
  double ss = 0.0;
  for (double v : samples) {
    if (!std::isfinite(v)) continue;
    ss += (v - mean) * (v - mean);
  }
  McResult r;
  r.mean = mean;
  r.n = n;
  r.se = n > 1 ? std::sqrt(ss / (n - 1)) / std::sqrt(static_cast<double>(n)) : 0.0;
  return r;
}

int resolve_workers(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

void for_streams(long long n, int workers, const std::function<void(long long)>& fn) {
  workers = std::min<long long>(resolve_workers(workers), std::max<long long>(1, n));
  if (workers <= 1 || n <= 1) {
    for (long long s = 0; s < n; ++s) fn(s);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::pair<long long, std::exception_ptr>> errors(workers, {-1, nullptr});
  for (int w = 0; w < workers; ++w) {
    const long long lo = n * w / workers;
    const long long hi = n * (w + 1) / workers;
    pool.emplace_back([&, lo, hi, w] {
      for (long long s = lo; s < hi; ++s) {
        try {
          fn(s);
        } catch (...) {
          errors[w] = {s, std::current_exception()};
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  // rethrow the failure with the smallest stream index for determinism
  std::exception_ptr first = nullptr;
  long long first_stream = -1;
  for (const auto& [s, e] : errors)
    if (e && (first_stream < 0 || s < first_stream)) {
      first_stream = s;
      first = e;
    }
  if (first) std::rethrow_exception(first);
}

std::vector<double> variance_influence(std::span<const double> f) {
  const McResult m = summarize(f);
  std::vector<double> out(f.size());
  for (size_t i = 0; i < f.size(); ++i) {
    const double dv = f[i] - m.mean;
    out[i] = dv * dv;
  }
  return out;
}

std::vector<double> entropy_influence(std::span<const double> f, double clip) {
  double m2 = 0.0;
  long long n = 0;
  std::vector<double> b(f.size());
  for (size_t i = 0; i < f.size(); ++i) {
    const double fc = std::max(std::abs(f[i]), clip);
    b[i] = fc * fc;
    ++n;
    m2 += (b[i] - m2) / n;
  }
  const double lm = std::log(m2);
  std::vector<double> out(f.size());
  for (size_t i = 0; i < f.size(); ++i) {
    const double a = b[i] * std::log(b[i]);
    out[i] = a - (lm + 1.0) * (b[i] - m2) - m2 * lm;
  }
  return out;
}

std::string verdict_of(double lhs_mean, double rhs_mean, double combined_se) {
  const double slack = rhs_mean - lhs_mean;
  if (slack < -3.0 * combined_se) return "violated";
  if (std::abs(slack) <= 3.0 * combined_se && ((lhs_mean > 0.0 && rhs_mean > 0.0) || slack == 0.0))
    return "holds-at-equality";
  if (slack < 0.0) return "violated-within-noise";
  return "holds";
}

InequalityReport coupled_report(const std::string& name, std::span<const double> lhs_samples,
                                std::span<const double> rhs_samples) {
  if (lhs_samples.size() != rhs_samples.size())
    throw std::invalid_argument("coupled_report: sample counts differ");
  InequalityReport r;
  r.name = name;
  r.lhs = summarize(lhs_samples);
  r.rhs = summarize(rhs_samples);
  std::vector<double> diff(lhs_samples.size());
  for (size_t i = 0; i < diff.size(); ++i) diff[i] = rhs_samples[i] - lhs_samples[i];
  const McResult dm = summarize(diff);
  r.slack = r.rhs.mean - r.lhs.mean;
  r.combined_se = dm.se;
  r.verdict = verdict_of(r.lhs.mean, r.rhs.mean, r.combined_se);
  return r;
}

InequalityReport uncoupled_report(const std::string& name, const McResult& lhs, const McResult& rhs) {
  InequalityReport r;
  r.name = name;
  r.lhs = lhs;
  r.rhs = rhs;
  r.slack = rhs.mean - lhs.mean;
  r.combined_se = std::sqrt(lhs.se * lhs.se + rhs.se * rhs.se);
  r.verdict = verdict_of(lhs.mean, rhs.mean, r.combined_se);
  return r;
}

// ---- polynomial regression ----

namespace {

void gen_exponents(int nvars, int degree, std::vector<int>& cur, int pos, int left,
                   std::vector<std::vector<int>>& out) {
  if (pos == nvars) {
    out.push_back(cur);
    return;
  }
  for (int e = 0; e <= left; ++e) {
    cur[pos] = e;
    gen_exponents(nvars, degree, cur, pos + 1, left - e, out);
  }
  cur[pos] = 0;
}

std::vector<std::vector<int>> monomials(int nvars, int degree) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur(nvars, 0);
  gen_exponents(nvars, degree, cur, 0, degree, out);
  // graded order: total degree, then lexicographic (stable and deterministic)
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    int sa = 0, sb = 0;
    for (int v : a) sa += v;
    for (int v : b) sb += v;
    if (sa != sb) return sa < sb;
    return a < b;
  });
  return out;
}

Mat invert(Mat g, bool* ridged) {
  const int p = g.rows();
  // Gaussian elimination against the identity, with a ridge fallback.
  for (int attempt = 0; attempt < 2; ++attempt) {
    Mat a = g;
    Mat inv = Mat::identity(p);
    bool ok = true;
    for (int k = 0; k < p && ok; ++k) {
      int piv = k;
      for (int i = k + 1; i < p; ++i)
        if (std::abs(a(i, k)) > std::abs(a(piv, k))) piv = i;
      if (std::abs(a(piv, k)) < 1e-12) {
        ok = false;
        break;
      }
      if (piv != k)
        for (int j = 0; j < p; ++j) {
          std::swap(a(k, j), a(piv, j));
          std::swap(inv(k, j), inv(piv, j));
        }
      const double pivval = a(k, k);
      for (int j = 0; j < p; ++j) {
        a(k, j) /= pivval;
        inv(k, j) /= pivval;
      }
      for (int i = 0; i < p; ++i) {
        if (i == k) continue;
        const double f = a(i, k);
        if (f == 0.0) continue;
        for (int j = 0; j < p; ++j) {
          a(i, j) -= f * a(k, j);
          inv(i, j) -= f * inv(k, j);
        }
      }
    }
    if (ok) return inv;
    // ridge and retry
    double tr = 0.0;
    for (int i = 0; i < p; ++i) tr += g(i, i);
    const double ridge = 1e-10 * (tr > 0 ? tr / p : 1.0);
    for (int i = 0; i < p; ++i) g(i, i) += ridge;
    *ridged = true;
  }
  throw std::runtime_error("regression: normal equations singular even after ridge");
}

}  // namespace

void PolyFit::eval_basis(std::span<const double> x, std::span<double> out) const {
  for (size_t j = 0; j < exps.size(); ++j) {
    double v = 1.0;
    for (int i = 0; i < nvars; ++i) {
      const int e = exps[j][i];
      for (int r = 0; r < e; ++r) v *= x[i];
    }
    out[j] = v * col_scale[j];
  }
}

double PolyFit::predict(std::span<const double> coef, std::span<const double> x) const {
  std::vector<double> phi(exps.size());
  eval_basis(x, phi);
  double s = 0.0;
  for (size_t j = 0; j < phi.size(); ++j) s += coef[j] * phi[j];
  return s;
}

double PolyFit::prediction_variance(std::span<const double> x, double sigma2) const {
  std::vector<double> phi(exps.size());
  eval_basis(x, phi);
  const int p = static_cast<int>(phi.size());
  double s = 0.0;
  for (int a = 0; a < p; ++a) {
    double row = 0.0;
    for (int b = 0; b < p; ++b) row += gram_inv(a, b) * phi[b];
    s += phi[a] * row;
  }
  return std::max(0.0, sigma2 * s);
}

double PolyFit::prediction_variance_with(std::span<const double> x, const Mat& coef_cov) const {
  std::vector<double> phi(exps.size());
  eval_basis(x, phi);
  const int p = static_cast<int>(phi.size());
  double s = 0.0;
  for (int a = 0; a < p; ++a) {
    double row = 0.0;
    for (int b = 0; b < p; ++b) row += coef_cov(a, b) * phi[b];
    s += phi[a] * row;
  }
  return std::max(0.0, s);
}

PolyFit design_poly(const std::vector<double>& xs, long long nsamples, int nvars, int degree) {
  PolyFit fit;
  fit.nvars = nvars;
  fit.degree = degree;
  fit.exps = monomials(nvars, degree);
  const int p = static_cast<int>(fit.exps.size());
  if (nsamples < 10LL * p)
    throw std::invalid_argument("regression needs at least 10x basis-size samples (" + std::to_string(10LL * p) +
                                "), got " + std::to_string(nsamples));
  fit.nsamples = nsamples;

  // unit-RMS column scaling for conditioning
  fit.col_scale.assign(p, 1.0);
  std::vector<double> ms(p, 0.0);
  std::vector<double> phi(p);
  for (long long s = 0; s < nsamples; ++s) {
    const std::span<const double> x(xs.data() + static_cast<size_t>(s) * nvars, static_cast<size_t>(nvars));
    fit.eval_basis(x, phi);
    for (int j = 0; j < p; ++j) ms[j] += phi[j] * phi[j];
  }
  for (int j = 0; j < p; ++j) {
    const double rms = std::sqrt(ms[j] / nsamples);
    fit.col_scale[j] = rms > 0.0 ? 1.0 / rms : 1.0;
  }

  Mat gram(p, p);
  for (long long s = 0; s < nsamples; ++s) {
    const std::span<const double> x(xs.data() + static_cast<size_t>(s) * nvars, static_cast<size_t>(nvars));
    fit.eval_basis(x, phi);
    for (int a = 0; a < p; ++a)
      for (int b = a; b < p; ++b) gram(a, b) += phi[a] * phi[b];
  }
  for (int a = 0; a < p; ++a)
    for (int b = 0; b < a; ++b) gram(a, b) = gram(b, a);

  fit.ridged = false;
  fit.gram = gram;
  fit.gram_inv = invert(gram, &fit.ridged);
  return fit;
}

FitResult solve_target(const PolyFit& fit, const std::vector<double>& xs, const std::vector<double>& y) {
  const int p = static_cast<int>(fit.size());
  const long long n = fit.nsamples;
  if (static_cast<long long>(y.size()) != n) throw std::invalid_argument("solve_target: target size mismatch");
  std::vector<double> phi(p);
  Vec c(p, 0.0);
  for (long long s = 0; s < n; ++s) {
    const std::span<const double> x(xs.data() + static_cast<size_t>(s) * fit.nvars,
                                    static_cast<size_t>(fit.nvars));
    fit.eval_basis(x, phi);
    for (int j = 0; j < p; ++j) c[j] += phi[j] * y[s];
  }
  FitResult res;
  res.coef.assign(p, 0.0);
  for (int a = 0; a < p; ++a) {
    double s = 0.0;
    for (int b = 0; b < p; ++b) s += fit.gram_inv(a, b) * c[b];
    res.coef[a] = s;
  }
  double rss = 0.0;
  Mat meat(p, p);
  for (long long s = 0; s < n; ++s) {
    const std::span<const double> x(xs.data() + static_cast<size_t>(s) * fit.nvars,
                                    static_cast<size_t>(fit.nvars));
    fit.eval_basis(x, phi);
    double pred = 0.0;
    for (int j = 0; j < p; ++j) pred += res.coef[j] * phi[j];
    const double r = y[s] - pred;
    rss += r * r;
    for (int a = 0; a < p; ++a)
      for (int b = a; b < p; ++b) meat(a, b) += phi[a] * phi[b] * r * r;
  }
  for (int a = 0; a < p; ++a)
    for (int b = 0; b < a; ++b) meat(a, b) = meat(b, a);
  res.sigma2 = n > p ? rss / (n - p) : 0.0;
  res.coef_cov = fit.gram_inv * (meat * fit.gram_inv);
  return res;
}

// ---- semigroups ----

namespace {

// Terminal point of one inner path; group models run from the origin.
void inner_terminal(const Model& model, const TimeGrid& grid, const BrownianDriver& driver, uint64_t stream,
                    std::span<const double> start, PathBundle& scratch, Vec& out) {
  SimOptions opts;
  opts.with_flows = false;
  opts.with_projection = false;
  simulate_into(scratch, model, grid, driver, stream, start, nullptr, opts);
  const auto st = scratch.state(grid.steps);
  out.assign(st.begin(), st.end());
}

}  // namespace

McResult q_semigroup(const Model& model, double t, const Expr& f, std::span<const double> p, SemigroupSide side,
                     const SemigroupContext& ctx) {
  if (f.arity() != model.n) throw std::invalid_argument("q_semigroup: f arity must equal state dimension");
  if (t < 0.0) throw std::invalid_argument("q_semigroup: t must be >= 0");
  if (t == 0.0) {
    const double v = f.eval(p);
    return McResult{v, 0.0, 1};
  }
  if (side == SemigroupSide::right && !model.group_heisenberg)
    throw std::invalid_argument("q_semigroup: right semigroup requires the group model");

  const TimeGrid grid{t, std::max(1, ctx.inner_steps)};
  std::vector<double> samples(ctx.n_inner);
  PathBundle scratch;
  Vec term;
  const Vec origin(model.n, 0.0);
  for (int k = 0; k < ctx.n_inner; ++k) {
    const uint64_t stream = derive_stream(ctx.outer_stream, ctx.tag, static_cast<uint64_t>(k));
    if (model.group_heisenberg) {
      inner_terminal(model, grid, *ctx.driver, stream, origin, scratch, term);
      if (side == SemigroupSide::left) {
        const auto z = group_product(p, term);
        samples[k] = f.eval(z);
      } else {
        const auto y = heisenberg_mirror(term);
        const auto z = group_product(y, p);
        samples[k] = f.eval(z);
      }
    } else {
      inner_terminal(model, grid, *ctx.driver, stream, p, scratch, term);
      samples[k] = f.eval(term);
    }
  }
  return summarize(samples);
}

Vec grad_q_fd(const Model& model, double t, const Expr& f, std::span<const double> p, double delta,
              const SemigroupContext& ctx) {
  const int n = model.n;
  Vec grad(n, 0.0);
  if (t == 0.0) return f.grad(p);

  const TimeGrid grid{t, std::max(1, ctx.inner_steps)};
  PathBundle scratch;
  Vec term;
  Vec bumped(n);
  const Vec origin(n, 0.0);

  if (model.group_heisenberg) {
    for (int k = 0; k < ctx.n_inner; ++k) {
      const uint64_t stream = derive_stream(ctx.outer_stream, ctx.tag, static_cast<uint64_t>(k));
      inner_terminal(model, grid, *ctx.driver, stream, origin, scratch, term);
      for (int j = 0; j < n; ++j) {
        std::copy(p.begin(), p.end(), bumped.begin());
        bumped[j] = p[j] + delta;
        const double up = f.eval(group_product(bumped, term));
        bumped[j] = p[j] - delta;
        const double dn = f.eval(group_product(bumped, term));
        grad[j] += (up - dn) / (2.0 * delta);
      }
    }
  } else {
    // same inner streams for every bump: common random numbers
    for (int k = 0; k < ctx.n_inner; ++k) {
      const uint64_t stream = derive_stream(ctx.outer_stream, ctx.tag, static_cast<uint64_t>(k));
      for (int j = 0; j < n; ++j) {
        std::copy(p.begin(), p.end(), bumped.begin());
        bumped[j] = p[j] + delta;
        inner_terminal(model, grid, *ctx.driver, stream, bumped, scratch, term);
        const double up = f.eval(term);
        bumped[j] = p[j] - delta;
        inner_terminal(model, grid, *ctx.driver, stream, bumped, scratch, term);
        const double dn = f.eval(term);
        grad[j] += (up - dn) / (2.0 * delta);
      }
    }
  }
  for (int j = 0; j < n; ++j) grad[j] /= ctx.n_inner;
  return grad;
}

VectorMc m_semigroup(const Model& model, double t, const Expr& f, std::span<const double> xi,
                     const SemigroupContext& ctx) {
  const int n = model.n;
  if (f.arity() != n) throw std::invalid_argument("m_semigroup: f arity must equal state dimension");
  VectorMc out;
  if (t == 0.0) {
    out.mean = f.grad(xi);
    out.se.assign(n, 0.0);
    out.n = 1;
    return out;
  }
  const TimeGrid grid{t, std::max(1, ctx.inner_steps)};
  SimOptions opts;
  opts.with_flows = true;
  opts.plain_jacobian = true;  // M_t is defined through the raw flow derivative
  opts.with_projection = false;
  std::vector<double> acc(static_cast<size_t>(ctx.n_inner) * n);
  PathBundle scratch;
  for (int k = 0; k < ctx.n_inner; ++k) {
    const uint64_t stream = derive_stream(ctx.outer_stream, ctx.tag, static_cast<uint64_t>(k));
    simulate_into(scratch, model, grid, *ctx.driver, stream, xi, nullptr, opts);
    const Vec g = f.grad(scratch.state(grid.steps));
    const Mat& j = scratch.jflow[grid.steps];
    for (int a = 0; a < n; ++a) {
      double s = 0.0;
      for (int c = 0; c < n; ++c) s += j(c, a) * g[c];
      acc[static_cast<size_t>(k) * n + a] = s;
    }
  }
  out.mean.assign(n, 0.0);
  out.se.assign(n, 0.0);
  out.n = ctx.n_inner;
  std::vector<double> comp(ctx.n_inner);
  for (int a = 0; a < n; ++a) {
    for (int k = 0; k < ctx.n_inner; ++k) comp[k] = acc[static_cast<size_t>(k) * n + a];
    const McResult m = summarize(comp);
    out.mean[a] = m.mean;
    out.se[a] = m.se;
  }
  return out;
}

}  // namespace degdiff
