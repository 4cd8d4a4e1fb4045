#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>

#include <CLI11.hpp>

#include "degdiff/checks.hpp"
#include "degdiff/cli_io.hpp"
#include "degdiff/config.hpp"

namespace {

using degdiff::RunConfig;

struct RawFlags {
  std::string config;
  std::string model, f, g, times, out, levels, t, h, u, f1, kind, factorizations;
  std::string T, steps, paths, inner, seed, degree, workers, f2c;
  std::string d, gamma, a_mat, sigma_mat, x0;
};

void add_common(CLI::App* sub, RawFlags& raw) {
  sub->add_option("--config", raw.config, "config file (key = value lines, or a params .json)");
  sub->add_option("--model", raw.model, "heisenberg | dyson | classical | circle | rankline");
  sub->add_option("--T", raw.T, "time horizon");
  sub->add_option("--steps", raw.steps, "grid steps");
  sub->add_option("--paths", raw.paths, "outer Monte Carlo paths");
  sub->add_option("--inner", raw.inner, "inner (nested) Monte Carlo samples");
  sub->add_option("--seed", raw.seed, "base seed (default: DEGDIFF_SEED env or built-in)");
  sub->add_option("--f", raw.f, "test function, e.g. \"x1^2 + sin(x2)\"");
  sub->add_option("--g", raw.g, "second test function (ibp)");
  sub->add_option("--times", raw.times, "comma-separated cylinder times");
  sub->add_option("--degree", raw.degree, "regression polynomial degree");
  sub->add_option("--out", raw.out, "output file (default stdout)");
  sub->add_option("--workers", raw.workers, "worker threads (0 = available parallelism)");
  sub->add_option("--levels", raw.levels, "comma-separated step counts (powers of two)");
  sub->add_option("--t", raw.t, "conditioning time (intertwine, key1)");
  sub->add_option("--hdot", raw.h, "constant Cameron-Martin density, comma-separated");
  sub->add_option("--u", raw.u, "constant direction for cond-exp");
  sub->add_option("--f1", raw.f1, "order-1 chaos kernel value");
  sub->add_option("--f2c", raw.f2c, "order-2 chaos kernel constant");
  sub->add_option("--kind", raw.kind, "factorization-sweep target: mod-poincare | state-lsi");
  sub->add_option("--factorizations", raw.factorizations, "rot:<angle>|m:<matrix> list");
  sub->add_option("--d", raw.d, "dyson particle count");
  sub->add_option("--gamma", raw.gamma, "dyson repulsion strength");
  sub->add_option("--A", raw.a_mat, "classical drift matrix, rows ; separated");
  sub->add_option("--Sigma", raw.sigma_mat, "classical diffusion matrix");
  sub->add_option("--x0", raw.x0, "initial state, comma-separated");
}

RunConfig build_config(const RawFlags& raw) {
  RunConfig cfg;
  if (const char* env = std::getenv("DEGDIFF_SEED")) {
    try {
      cfg.seed = std::stoull(env);
    } catch (...) {
      throw degdiff::ConfigError("DEGDIFF_SEED is not an integer");
    }
  }
  if (!raw.config.empty()) degdiff::apply_config_file(cfg, raw.config);
  auto apply = [&cfg](const std::string& section, const char* key, const std::string& v) {
    if (!v.empty()) degdiff::apply_config_key(cfg, section, key, v);
  };
  apply("", "model", raw.model);
  apply("", "T", raw.T);
  apply("", "steps", raw.steps);
  apply("", "paths", raw.paths);
  apply("", "inner", raw.inner);
  apply("", "seed", raw.seed);
  apply("", "f", raw.f);
  apply("", "g", raw.g);
  apply("", "times", raw.times);
  apply("", "degree", raw.degree);
  apply("", "out", raw.out);
  apply("", "workers", raw.workers);
  apply("", "levels", raw.levels);
  apply("", "t", raw.t);
  apply("", "h", raw.h);
  apply("", "u", raw.u);
  apply("", "f1", raw.f1);
  apply("", "f2c", raw.f2c);
  apply("", "kind", raw.kind);
  apply("", "factorizations", raw.factorizations);
  apply("model", "d", raw.d);
  apply("model", "gamma", raw.gamma);
  apply("model", "A", raw.a_mat);
  apply("model", "Sigma", raw.sigma_mat);
  apply("model", "x0", raw.x0);
  return cfg;
}

int with_output(const RunConfig& cfg, const std::function<void(std::ostream&)>& emit) {
  if (cfg.out.empty()) {
    emit(std::cout);
    return 0;
  }
  std::ofstream f(cfg.out, std::ios::binary);
  if (!f) {
    std::cerr << "error: cannot open output file '" << cfg.out << "'\n";
    return 1;
  }
  emit(f);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"degdiff: degenerate diffusion simulation and functional-inequality checks"};
  app.require_subcommand(1);
  app.footer(
      "Cylindrical test functions over m times use flat variables: x_{(i-1)*n+j}\n"
      "is state coordinate j at the i-th listed time.\n"
      "Expression grammar: expr := term (('+'|'-') term)*; term := factor (('*'|'/')\n"
      "factor)*; factor := '-' factor | atom ('^' integer)?; atom := number | var |\n"
      "func '(' expr ')' | '(' expr ')'; var := 'x' integer (1-based); func := exp |\n"
      "log | sin | cos | sqrt | abs.");

  RawFlags raw;
  std::string check_name;

  CLI::App* sim = app.add_subcommand("simulate", "write a path dump CSV (t, states, increments)");
  add_common(sim, raw);

  CLI::App* chk = app.add_subcommand("check", "run a named identity/inequality check, emit a JSON report");
  chk->add_option("name", check_name, "check name (see registry below)")->required();
  add_common(chk, raw);

  CLI::App* swp = app.add_subcommand("sweep", "couple Brownian levels and emit an error-vs-dt CSV");
  swp->add_option("name", check_name, "jk-inverse | calcul1")->required();
  add_common(swp, raw);

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg = build_config(raw);
    if (sim->parsed()) {
      return with_output(cfg, [&](std::ostream& os) { degdiff::write_path_csv(os, cfg); });
    }
    if (swp->parsed()) {
      cfg.check = check_name;
      return with_output(cfg, [&](std::ostream& os) { degdiff::write_sweep_csv(os, cfg); });
    }
    cfg.check = check_name;
    const degdiff::ojson report = degdiff::run_check(cfg);
    const std::string text = report.dump(2) + "\n";
    std::cout << text;
    if (!cfg.out.empty()) {
      std::ofstream f(cfg.out, std::ios::binary);
      if (!f) {
        std::cerr << "error: cannot open output file '" << cfg.out << "'\n";
        return 1;
      }
      f << text;
    }
    return degdiff::report_passed(report) ? 0 : 2;
  } catch (const degdiff::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
