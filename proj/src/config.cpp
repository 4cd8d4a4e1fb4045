#include "degdiff/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace degdiff {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return x;
  } catch (...) {
    throw ConfigError("config: field '" + key + "' is not a number: '" + v + "'");
  }
}

long long to_ll(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const long long x = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return x;
  } catch (...) {
    throw ConfigError("config: field '" + key + "' is not an integer: '" + v + "'");
  }
}

void require_positive(const std::string& key, double v) {
  if (!(v > 0)) throw ConfigError("config: field '" + key + "' must be positive");
}

}  // namespace

std::vector<double> parse_vector(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    if (tok.empty()) throw ConfigError("config: empty entry in vector '" + text + "'");
    out.push_back(to_double("vector", tok));
  }
  if (out.empty()) throw ConfigError("config: empty vector");
  return out;
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  for (double v : parse_vector(text)) {
    const int i = static_cast<int>(v);
    if (static_cast<double>(i) != v) throw ConfigError("config: expected integer list, got '" + text + "'");
    out.push_back(i);
  }
  return out;
}

Mat parse_matrix(const std::string& text) {
  std::vector<std::vector<double>> rows;
  std::stringstream ss(text);
  std::string row;
  while (std::getline(ss, row, ';')) rows.push_back(parse_vector(row));
  const size_t cols = rows.front().size();
  for (const auto& r : rows)
    if (r.size() != cols) throw ConfigError("config: ragged matrix '" + text + "'");
  Mat m(static_cast<int>(rows.size()), static_cast<int>(cols));
  for (size_t i = 0; i < rows.size(); ++i)
    for (size_t j = 0; j < cols; ++j) m(static_cast<int>(i), static_cast<int>(j)) = rows[i][j];
  return m;
}

std::string format_matrix(const Mat& m) {
  std::string out;
  char buf[40];
  for (int i = 0; i < m.rows(); ++i) {
    if (i) out += ';';
    for (int j = 0; j < m.cols(); ++j) {
      if (j) out += ',';
      snprintf(buf, sizeof(buf), "%.17g", m(i, j));
      out += buf;
    }
  }
  return out;
}

void apply_config_key(RunConfig& cfg, const std::string& section, const std::string& key, const std::string& value) {
  if (section == "model") {
    if (key == "d") {
      cfg.d = static_cast<int>(to_ll(key, value));
    } else if (key == "gamma") {
      cfg.gamma = to_double(key, value);
    } else if (key == "A") {
      cfg.a_drift = parse_matrix(value);
    } else if (key == "Sigma") {
      cfg.big_sigma = parse_matrix(value);
    } else if (key == "x0") {
      cfg.x0 = parse_vector(value);
    } else {
      throw ConfigError("config: unknown [model] key '" + key + "'");
    }
    return;
  }
  if (key == "model") cfg.model = value;
  else if (key == "check") cfg.check = value;
  else if (key == "T") { cfg.T = to_double(key, value); require_positive(key, cfg.T); }
  else if (key == "steps") { cfg.steps = static_cast<int>(to_ll(key, value)); require_positive(key, cfg.steps); }
  else if (key == "paths") { cfg.paths = to_ll(key, value); require_positive(key, static_cast<double>(cfg.paths)); }
  else if (key == "inner") { cfg.inner = static_cast<int>(to_ll(key, value)); require_positive(key, cfg.inner); }
  else if (key == "seed") cfg.seed = static_cast<uint64_t>(to_ll(key, value));
  else if (key == "f") cfg.f = value;
  else if (key == "g") cfg.g = value;
  else if (key == "times") cfg.times = parse_vector(value);
  else if (key == "degree") { cfg.degree = static_cast<int>(to_ll(key, value)); require_positive(key, cfg.degree); }
  else if (key == "out") cfg.out = value;
  else if (key == "workers") cfg.workers = static_cast<int>(to_ll(key, value));
  else if (key == "levels") cfg.levels = parse_int_list(value);
  else if (key == "t") cfg.t_mid = to_double(key, value);
  else if (key == "h") cfg.h_const = parse_vector(value);
  else if (key == "u") cfg.u_const = parse_vector(value);
  else if (key == "f1") cfg.f1_const = parse_vector(value);
  else if (key == "f2c") cfg.f2c = to_double(key, value);
  else if (key == "factorizations") cfg.factorizations = value;
  else if (key == "kind") cfg.kind = value;
  else throw ConfigError("config: unknown key '" + key + "'");
}

namespace {

std::string json_to_config_string(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_number_float()) {
    char buf[40];
    snprintf(buf, sizeof(buf), "%.17g", v.get<double>());
    return buf;
  }
  if (v.is_array()) {
    std::string acc;
    for (const auto& e : v) {
      if (!acc.empty()) acc += ',';
      acc += json_to_config_string(e);
    }
    return acc;
  }
  return v.dump();
}

void apply_json_params(RunConfig& cfg, const nlohmann::json& j) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string key = it.key();
    if (key == "model_params") {
      for (auto mit = it->begin(); mit != it->end(); ++mit)
        apply_config_key(cfg, "model", mit.key(), json_to_config_string(*mit));
      continue;
    }
    apply_config_key(cfg, "", key, json_to_config_string(*it));
  }
}

}  // namespace

void apply_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  if (path.size() > 5 && path.substr(path.size() - 5) == ".json") {
    nlohmann::json j;
    try {
      in >> j;
    } catch (const std::exception& e) {
      throw ConfigError("config: bad JSON in '" + path + "': " + e.what());
    }
    // accept either a bare params object or a full report with "params"
    if (j.contains("params")) {
      if (j.contains("seed") && j["seed"].is_number()) cfg.seed = j["seed"].get<uint64_t>();
      apply_json_params(cfg, j["params"]);
    } else {
      apply_json_params(cfg, j);
    }
    return;
  }
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') {
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: line " + std::to_string(lineno) + " is not 'key = value'");
    apply_config_key(cfg, section, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

Model make_model(const RunConfig& cfg) {
  if (cfg.model == "heisenberg") return make_heisenberg();
  if (cfg.model == "dyson") return make_dyson(cfg.d, cfg.gamma);
  if (cfg.model == "circle") return make_circle();
  if (cfg.model == "rankline") return make_rankline();
  if (cfg.model == "classical") {
    if (!cfg.a_drift || !cfg.big_sigma)
      throw ConfigError("config: classical model needs [model] A and Sigma matrices");
    return make_classical(*cfg.a_drift, *cfg.big_sigma);
  }
  throw ConfigError("config: unknown model '" + cfg.model + "' (heisenberg | dyson | classical | circle | rankline)");
}

std::vector<double> resolve_x0(const RunConfig& cfg, const Model& model) {
  if (cfg.x0.empty()) return model.default_x0();
  if (static_cast<int>(cfg.x0.size()) != model.n)
    throw ConfigError("config: x0 has dimension " + std::to_string(cfg.x0.size()) + ", model needs " +
                      std::to_string(model.n));
  if (model.drift_singular) {
    for (size_t i = 0; i + 1 < cfg.x0.size(); ++i)
      if (!(cfg.x0[i] < cfg.x0[i + 1]))
        throw ConfigError("config: x0 must be strictly increasing for the dyson model");
  }
  return cfg.x0;
}

}  // namespace degdiff
