#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "tim/model.h"

namespace tim {

// Exit codes of run_cli.
inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitUsage = 2;

// Named model variants accepted by `train --model`:
//   tim, tim_base (no RoPE, no DTE), tim_r (no RoPE), tim_d (no DTE),
//   mlp (context only), mlp_int (context + averaged interaction features).
ModelConfig apply_variant(ModelConfig config, const std::string& variant);

// Runs one command line (args excludes the program name). Regular output goes
// to `out`; diagnostics go to `err` as a single "error: ..." line.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tim
