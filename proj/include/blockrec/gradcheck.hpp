#pragma once

#include <string>
#include <vector>

namespace blockrec {

// Central-finite-difference verification of every differentiable
// operation plus one full encoder -> decoder -> combined-loss pass, on
// fixed seeds. The numeric differentiation is independent of the tape's
// backward path.
struct GradCheckResult {
  std::string name;
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

std::vector<GradCheckResult> run_gradient_checks();

bool all_pass(const std::vector<GradCheckResult>& results);

}  // namespace blockrec
