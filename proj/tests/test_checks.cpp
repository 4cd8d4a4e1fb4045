#include <doctest.h>

#include <stdexcept>

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "degdiff/checks.hpp"

using namespace degdiff;

namespace {

RunConfig fast_cfg(const std::string& check) {
  RunConfig cfg;
  cfg.check = check;
  cfg.paths = 1500;
  cfg.steps = 64;
  cfg.inner = 512;
  cfg.seed = 909;
  return cfg;
}

ojson masked(ojson j) {
  j.erase("runtime_ms");
  return j;
}

}  // namespace

TEST_CASE("the registry lists every documented check") {
  const auto& reg = check_registry();
  CHECK(reg.size() == 17);
  for (const char* name :
       {"jk-inverse", "calcul1", "clark-ocone", "cond-exp", "wick", "chaos", "ibp", "poincare-path",
        "logsob-path", "mod-poincare", "state-lsi", "factorization-sweep", "intertwine", "mart-lemma",
        "heisenberg-suite", "dyson-suite", "lipschitz-shift"})
    CHECK(std::find(reg.begin(), reg.end(), name) != reg.end());

  RunConfig cfg = fast_cfg("no-such-check");
  CHECK_THROWS_AS(run_check(cfg), ConfigError);
  try {
    run_check(cfg);
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("jk-inverse") != std::string::npos);  // message lists the registry
  }
}

TEST_CASE("config parsing: files, sections, matrices, validation") {
  RunConfig cfg;
  const char* path = "degdiff_test_config.tmp";
  {
    std::ofstream f(path);
    f << "# comment line\n"
      << "model = dyson\n"
      << "steps = 128   # trailing comment\n"
      << "times = 0.25,0.5\n"
      << "[model]\n"
      << "d = 4\n"
      << "gamma = 0.75\n"
      << "x0 = -1.5,-0.5,0.5,1.5\n";
  }
  apply_config_file(cfg, path);
  std::remove(path);
  CHECK(cfg.model == "dyson");
  CHECK(cfg.steps == 128);
  CHECK(cfg.d == 4);
  CHECK(cfg.gamma == 0.75);
  CHECK(cfg.times == std::vector<double>{0.25, 0.5});

  const Mat m = parse_matrix("0,1;-1,0");
  CHECK(m(0, 1) == 1.0);
  CHECK(m(1, 0) == -1.0);
  CHECK(parse_matrix(format_matrix(m))(1, 0) == -1.0);
  CHECK_THROWS_AS(parse_matrix("1,2;3"), ConfigError);
  CHECK_THROWS_AS(apply_config_key(cfg, "", "bogus", "1"), ConfigError);
  CHECK_THROWS_AS(apply_config_key(cfg, "", "steps", "-4"), ConfigError);

  // dyson validation names the offending field
  RunConfig bad;
  bad.model = "dyson";
  bad.x0 = {1.0, 0.0, -1.0};
  const Model dy = make_model(bad);
  try {
    resolve_x0(bad, dy);
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("x0") != std::string::npos);
  }
}

TEST_CASE("reports echo a config that reproduces the run") {
  RunConfig cfg = fast_cfg("poincare-path");
  cfg.f = "x1";
  cfg.x0 = {0.0, 0.0, 0.0};  // exercises the model_params echo
  const ojson first = run_check(cfg);

  const char* path = "degdiff_params.tmp.json";
  {
    std::ofstream f(path);
    f << first.dump();
  }
  RunConfig replay;
  apply_config_file(replay, path);
  std::remove(path);
  replay.check = "poincare-path";
  const ojson second = run_check(replay);
  CHECK(masked(first) == masked(second));
}

TEST_CASE("checks refuse non-smooth test functions") {
  RunConfig cfg = fast_cfg("poincare-path");
  cfg.f = "abs(x1)";
  CHECK_THROWS_AS(run_check(cfg), ConfigError);
  cfg.check = "heisenberg-suite";
  CHECK_THROWS_AS(run_check(cfg), ConfigError);
}

TEST_CASE("times must sit on grid nodes") {
  RunConfig cfg = fast_cfg("poincare-path");
  cfg.f = "x1";
  cfg.times = {0.333};
  CHECK_THROWS_AS(run_check(cfg), ConfigError);
}

TEST_CASE("poincare equality and strict slack on the heisenberg model") {
  RunConfig cfg = fast_cfg("poincare-path");
  cfg.paths = 4000;
  cfg.f = "x1";
  const ojson eq = run_check(cfg);
  CHECK(eq["verdict"] == "holds-at-equality");
  CHECK(eq["rhs"]["mean"].get<double>() == doctest::Approx(1.0).epsilon(1e-9));

  cfg.f = "x3";
  const ojson strict = run_check(cfg);
  CHECK(strict["verdict"] == "holds");
  CHECK(report_passed(strict));
}

TEST_CASE("logsob-path reports candidate constants for classical models") {
  RunConfig cfg = fast_cfg("logsob-path");
  cfg.model = "classical";
  cfg.a_drift = parse_matrix("0,1;-1,0");
  cfg.big_sigma = parse_matrix("1,0;0,1");
  cfg.x0 = {0.0, 0.0};
  cfg.f = "x1 + 2";
  cfg.paths = 3000;
  const ojson r = run_check(cfg);
  CHECK(r.contains("candidate_constants"));
  const double c1 = r["candidate_constants"]["flow_bound_constant"].get<double>();
  const double c2 = r["candidate_constants"]["chain_rule_constant"].get<double>();
  CHECK(c1 == doctest::Approx(2.0 * std::exp(1.0)));
  CHECK(c2 == doctest::Approx(2.0 * std::exp(2.0)));
  CHECK(report_passed(r));
}

TEST_CASE("state inequalities exclude ill-conditioned paths and report the Gamma form") {
  RunConfig cfg = fast_cfg("mod-poincare");
  cfg.model = "classical";
  cfg.a_drift = parse_matrix("0,0;0,0");
  cfg.big_sigma = parse_matrix("1,0;0,1");
  cfg.x0 = {0.0, 0.0};
  cfg.f = "x1";
  cfg.paths = 2500;
  const ojson r = run_check(cfg);
  CHECK(r["excluded_paths"].get<long long>() == 0);
  CHECK(r["rhs"]["mean"].get<double>() == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(r["verdict"] == "holds-at-equality");
  CHECK(r.contains("gamma_regression_rhs_mean"));
}

TEST_CASE("constant functions sit at equality with zero energy") {
  RunConfig cfg = fast_cfg("poincare-path");
  cfg.f = "2";
  const ojson r = run_check(cfg);
  CHECK(r["lhs"]["mean"].get<double>() == doctest::Approx(0.0));
  CHECK(r["rhs"]["mean"].get<double>() == doctest::Approx(0.0));
  CHECK(r["verdict"] == "holds-at-equality");

  cfg.check = "logsob-path";
  const ojson r2 = run_check(cfg);
  CHECK(r2["rhs"]["mean"].get<double>() == doctest::Approx(0.0));
  CHECK(report_passed(r2));
}

TEST_CASE("factorization sweeps validate the shared diffusion square") {
  RunConfig cfg = fast_cfg("factorization-sweep");
  cfg.model = "rankline";
  cfg.x0 = {0.0};
  cfg.f = "x1";
  cfg.paths = 2000;
  const ojson r = run_check(cfg);
  CHECK(r["per_factorization"].size() == 2);
  // both factorizations represent the same law; the rhs estimates agree
  const double r1 = r["per_factorization"][0]["rhs"]["mean"].get<double>();
  const double r2 = r["per_factorization"][1]["rhs"]["mean"].get<double>();
  CHECK(r1 == doctest::Approx(r2).epsilon(1e-9));
  CHECK(report_passed(r));

  cfg.factorizations = "m:2,0";  // wrong a = sigma sigma^T
  CHECK_THROWS_AS(run_check(cfg), ConfigError);
}

TEST_CASE("single factorization reduces to the plain state inequality") {
  RunConfig cfg = fast_cfg("factorization-sweep");
  cfg.model = "rankline";
  cfg.x0 = {0.0};
  cfg.f = "x1";
  cfg.paths = 2000;
  cfg.factorizations = "m:1,0";
  const ojson sweep = run_check(cfg);
  RunConfig plain = cfg;
  plain.check = "mod-poincare";
  plain.model = "classical";
  plain.a_drift = Mat(1, 1);
  plain.big_sigma = parse_matrix("1,0");
  const ojson direct = run_check(plain);
  CHECK(sweep["rhs"]["mean"].get<double>() ==
        doctest::Approx(direct["rhs"]["mean"].get<double>()).epsilon(1e-12));
}

TEST_CASE("wick, chaos, cond-exp and ibp hold on the filtering model") {
  for (const char* name : {"wick", "chaos", "cond-exp"}) {
    RunConfig cfg = fast_cfg(name);
    cfg.model = "rankline";
    cfg.x0 = {0.0};
    cfg.paths = 3000;
    const ojson r = run_check(cfg);
    CHECK_MESSAGE(report_passed(r), name, ": ", r.dump());
  }
  RunConfig cfg = fast_cfg("ibp");
  cfg.model = "circle";
  cfg.x0 = {0.0};
  cfg.f = "x1^2";
  cfg.g = "sin(x1)";
  cfg.paths = 4000;
  const ojson r = run_check(cfg);
  CHECK_MESSAGE(report_passed(r), r.dump());
}

TEST_CASE("intertwine residual is at the noise floor for the martingale coordinate") {
  RunConfig cfg = fast_cfg("intertwine");
  cfg.f = "x1";
  cfg.paths = 2500;
  cfg.inner = 256;
  cfg.steps = 64;
  cfg.t_mid = 0.5;
  const ojson r = run_check(cfg);
  CHECK(r["relative_l2_residual"].get<double>() <= 0.01);
  CHECK(report_passed(r));
}

TEST_CASE("vector-semigroup martingale has no drift for the flat coordinate") {
  RunConfig cfg = fast_cfg("mart-lemma");
  cfg.f = "x1";
  cfg.paths = 64;
  cfg.inner = 256;
  const ojson r = run_check(cfg);
  // V_t is exactly (1, 0, 0) for this function: zero drift, zero residuals
  CHECK(r["verdict"] == "holds");
  CHECK(r["worst_drift_over_stderr"].get<double>() <= 1e-6);
  for (const auto& row : r["regression_residuals"])
    CHECK(row["relative_residual"].get<double>() <= 1e-9);

  RunConfig bad = fast_cfg("factorization-sweep");
  bad.model = "rankline";
  bad.f = "x1";
  bad.kind = "nope";
  CHECK_THROWS_AS(run_check(bad), ConfigError);
}

TEST_CASE("sweep rows expose the error-vs-dt tables") {
  RunConfig cfg = fast_cfg("calcul1");
  cfg.levels = {32, 64};
  cfg.paths = 200;
  const auto rows = run_sweep(cfg);
  CHECK(rows.size() == 2);
  CHECK(rows[0].steps == 32);
  CHECK(rows[1].steps == 64);
  CHECK(rows[1].value < rows[0].value);

  cfg.check = "poincare-path";
  CHECK_THROWS_AS(run_sweep(cfg), ConfigError);
  cfg.check = "calcul1";
  cfg.levels = {48, 96};
  CHECK_THROWS_AS(run_sweep(cfg), ConfigError);
}
