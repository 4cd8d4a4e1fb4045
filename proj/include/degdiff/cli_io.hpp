#pragma once

#include <iosfwd>

#include "degdiff/checks.hpp"
#include "degdiff/config.hpp"

namespace degdiff {

// One CSV row per grid node: t, x_1..x_n, dB_1..dB_d (header mandatory).
// The final node has no following increment; its dB cells are 0. Multiple
// paths are concatenated in stream order under the single header.
void write_path_csv(std::ostream& os, const RunConfig& cfg);

// error-vs-dt table for the sweepable checks: steps, dt, value.
void write_sweep_csv(std::ostream& os, const RunConfig& cfg);

}  // namespace degdiff
