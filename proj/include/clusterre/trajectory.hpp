#pragma once

#include <vector>

namespace clusterre {

// One knot of a filter trajectory. At claim knots the left limit is the
// filter just before the claim and the right limit just after; elsewhere the
// two coincide.
struct FilterPoint {
  double t = 0.0;
  double pi_left = 0.0;    // pi_{t-}(lambda)
  double pi_right = 0.0;   // pi_t(lambda)
  double pi2_left = 0.0;   // pi_{t-}(lambda^2)
  double pi2_right = 0.0;  // pi_t(lambda^2)
  double ess = 0.0;        // effective sample size after the step
  bool claim = false;
  double mark = 0.0;       // claim size at claim knots
  double log_norm = 0.0;   // log sigma_t(1)
  double y_dominating = 0.0;
};

using FilterTrajectory = std::vector<FilterPoint>;

// Information available to a predictable strategy at time t: left limits.
struct FilterSummary {
  double t = 0.0;
  double pi_lambda = 0.0;
  double pi_lambda2 = 0.0;
};

}  // namespace clusterre
