#pragma once

#include <string>
#include <vector>

#include "ocnopt/ode.hpp"
#include "ocnopt/optimizer.hpp"
#include "ocnopt/oracle.hpp"

namespace ocnopt {

enum class VerifyLevel { Fast, Full };

/// One equivalence claim checked against an independent reference.
/// `exceeds` claims pass when the measured error is ABOVE the threshold:
/// used by negative controls that prove a deliberately broken recursion is
/// caught by the same comparisons.
struct ClaimResult {
  std::string name;
  double max_err = 0.0;
  double tol = 0.0;
  bool exceeds = false;
  bool pass = false;
  double ms = 0.0;
};

struct VerifyReport {
  std::vector<ClaimResult> claims;
  bool all_pass = false;
  double total_ms = 0.0;
};

/// Runs the claims table. Fast keeps every claim small enough for the whole
/// table to finish in well under a minute; Full widens seed counts.
VerifyReport run_verification(VerifyLevel level);

std::string verify_report_text(const VerifyReport& report);

}  // namespace ocnopt
