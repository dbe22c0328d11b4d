#pragma once

#include <cmath>
#include <vector>

namespace rems::testing {

// Attacker catch-up probability from Poisson weights built by recurrence and
// the catch-up walk as an absorbing Markov chain, solved by value iteration
// on a bounded deficit range.
inline double markov_catch_up(double q, unsigned z) {
  if (z == 0) return 1.0;
  const double p = 1 - q, lambda = z * q / p;
  const unsigned top = 400;
  std::vector<double> h(top + 1, 0.0);
  h[0] = 1.0;
  for (int it = 0; it < 20000; ++it)
    for (unsigned d = 1; d < top; ++d) h[d] = q * h[d - 1] + p * h[d + 1];
  double weight = std::exp(-lambda), below = 0, total = 0;
  for (unsigned k = 0; k < z; ++k) {
    below += weight;
    total += weight * h[z - k];
    weight *= lambda / (k + 1);
  }
  return total + 1 - below;
}

}  // namespace rems::testing
