#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "degdiff/config.hpp"
#include "degdiff/estimators.hpp"

namespace degdiff {

using ojson = nlohmann::ordered_json;

// All registered check names, in registry order.
const std::vector<std::string>& check_registry();

// Dispatch by cfg.check; the returned report carries the params echo, seed
// and runtime_ms and serializes with stable key order.
ojson run_check(const RunConfig& cfg);

// true when every verdict in the report is holds / holds-at-equality.
bool report_passed(const ojson& report);

// error-vs-dt tables for the sweepable checks (jk-inverse, calcul1)
struct SweepRow {
  int steps;
  double value;
};
std::vector<SweepRow> run_sweep(const RunConfig& cfg);

ojson check_jk_inverse(const RunConfig& cfg);
ojson check_calcul1(const RunConfig& cfg);
ojson check_clark_ocone(const RunConfig& cfg);
ojson check_cond_exp(const RunConfig& cfg);
ojson check_wick(const RunConfig& cfg);
ojson check_chaos(const RunConfig& cfg);
ojson check_ibp(const RunConfig& cfg);
ojson check_poincare_path(const RunConfig& cfg);
ojson check_logsob_path(const RunConfig& cfg);
ojson check_state_inequality(const RunConfig& cfg, const std::string& kind);
ojson check_factorization_sweep(const RunConfig& cfg);
ojson check_intertwine(const RunConfig& cfg);
ojson check_mart_lemma(const RunConfig& cfg);
ojson check_heisenberg_suite(const RunConfig& cfg);
ojson check_dyson_suite(const RunConfig& cfg);
ojson check_lipschitz_shift(const RunConfig& cfg);

ojson mc_json(const McResult& m);
ojson report_json(const InequalityReport& r);

}  // namespace degdiff
