#include "degdiff/cli_io.hpp"

#include <cstdio>
#include <ostream>

#include "degdiff/sde.hpp"

namespace degdiff {

namespace {

void put_num(std::ostream& os, double v) {
  char buf[40];
  snprintf(buf, sizeof(buf), "%.17g", v);
  os << buf;
}

}  // namespace

void write_path_csv(std::ostream& os, const RunConfig& cfg) {
  const Model model = make_model(cfg);
  const TimeGrid grid{cfg.T, cfg.steps};
  const BrownianDriver driver(cfg.seed);
  const Vec x0 = resolve_x0(cfg, model);

  os << "t";
  for (int a = 0; a < model.n; ++a) os << ",x_" << (a + 1);
  for (int k = 0; k < model.d; ++k) os << ",dB_" << (k + 1);
  os << "\n";

  SimOptions opts;
  opts.with_flows = false;
  opts.with_projection = false;
  PathBundle b;
  for (long long s = 0; s < cfg.paths; ++s) {
    simulate_into(b, model, grid, driver, static_cast<uint64_t>(s), x0, nullptr, opts);
    for (int i = 0; i <= grid.steps; ++i) {
      put_num(os, grid.time(i));
      const auto st = b.state(i);
      for (int a = 0; a < model.n; ++a) {
        os << ',';
        put_num(os, st[a]);
      }
      for (int k = 0; k < model.d; ++k) {
        os << ',';
        put_num(os, i < grid.steps ? b.incr(i)[k] : 0.0);
      }
      os << "\n";
    }
  }
}

void write_sweep_csv(std::ostream& os, const RunConfig& cfg) {
  const auto rows = run_sweep(cfg);
  const char* value_key = cfg.check == "jk-inverse" ? "median_sup_jk_minus_i" : "relative_l2_distance";
  os << "steps,dt," << value_key << "\n";
  for (const auto& r : rows) {
    os << r.steps << ',';
    put_num(os, cfg.T / r.steps);
    os << ',';
    put_num(os, r.value);
    os << "\n";
  }
}

}  // namespace degdiff
