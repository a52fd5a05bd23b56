#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace tea {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Modules with a built-in invariant suite.
const std::vector<std::string>& check_modules();

/// Runs the invariant and gradient suite of `module` ("all" runs every one).
std::vector<CheckResult> run_checks(const std::string& module, std::uint64_t seed = 0);

}  // namespace tea
