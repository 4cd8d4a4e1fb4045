#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "degdiff/linalg.hpp"
#include "degdiff/models.hpp"

namespace degdiff {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Effective run parameters. Precedence: defaults < DEGDIFF_SEED env <
// config file < command-line flags.
struct RunConfig {
  std::string check;

  std::string model = "heisenberg";
  double T = 1.0;
  int steps = 256;
  long long paths = 4096;
  int inner = 4096;
  uint64_t seed = 20260809ull;
  std::string f;
  std::string g;
  std::vector<double> times;
  int degree = 3;
  std::string out;
  int workers = 0;  // 0: available parallelism
  std::vector<int> levels;

  // model parameters ([model] section of the config file)
  int d = 3;            // dyson particle count
  double gamma = 1.0;   // dyson repulsion strength
  std::optional<Mat> a_drift;   // classical drift matrix
  std::optional<Mat> big_sigma; // classical diffusion matrix
  std::vector<double> x0;       // empty: model default

  // check-specific knobs
  double t_mid = 0.5;               // conditioning time (intertwine, key1)
  std::vector<double> h_const;      // constant Cameron-Martin density
  std::vector<double> u_const;      // cond-exp direction
  std::vector<double> f1_const;     // chaos order-1 kernel value
  double f2c = 1.0;                 // chaos order-2 kernel constant
  std::string factorizations;       // "rot:<angle>|m:<matrix>|..."
  std::string kind = "mod-poincare";  // factorization-sweep target
};

// Flat "key = value" file with '#' comments; "[model]" section keys map to
// the model parameters. A ".json" file is read as the params echo object.
void apply_config_file(RunConfig& cfg, const std::string& path);
// Applies one key (as it appears in files or the params echo).
void apply_config_key(RunConfig& cfg, const std::string& section, const std::string& key, const std::string& value);

Mat parse_matrix(const std::string& text);          // "0,1;-1,0"
std::vector<double> parse_vector(const std::string& text);
std::vector<int> parse_int_list(const std::string& text);
std::string format_matrix(const Mat& m);

Model make_model(const RunConfig& cfg);
std::vector<double> resolve_x0(const RunConfig& cfg, const Model& model);

}  // namespace degdiff
