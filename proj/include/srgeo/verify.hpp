#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "srgeo/structure.hpp"

namespace srgeo {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;  // measured quantities, deterministic formatting
};

struct VerifyReport {
  std::string model;
  std::uint64_t seed = 0;
  std::vector<CheckResult> checks;

  bool all_pass() const;
};

// Runs every invariant check that applies to the model. Deterministic for a
// fixed (model, seed); row names are stable identifiers.
VerifyReport run_verify(const Structure& S, std::uint64_t seed);

}  // namespace srgeo
