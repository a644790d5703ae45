#pragma once

// Product-form posterior approximation: coordinate means u solve the
// fixed point u_i = tilt-mean at (s_i + w_i, d_i) with local fields
// s = A u; coordinate variances are the tilt variances at the solution.

#include <string>

#include "veb/design.hpp"
#include "veb/priors.hpp"

namespace veb {

struct MeanFieldSolution {
  Vec u;     // coordinate means
  Vec tau2;  // coordinate variances, >= 0
  Vec s;     // local fields A u at the solution
  int iterations = 0;
  double residual = 0.0;  // sup_i |u_i - tilt-mean(s_i + w_i, d_i)|
  bool geometric_decay = false;  // residual trace shrank monotonically
};

struct FixedPointOptions {
  double damping = 0.5;  // Picard step u <- (1-l) u + l update
  double tol = 1e-10;    // sup-norm fixed-point residual
  int max_iter = 10000;
  bool adaptive = true;  // halve damping when the residual grows
  Vec init;              // starting point; empty means naive_init
};

// Zero-field start: u_i = tilt-mean at (w_i, d_i).
Vec naive_init(const TransformedData& td, const PriorFamily& f,
               const Vec& theta);

// Damped synchronous Picard iteration from naive_init. Throws
// numerical_error with the trailing residuals when max_iter is reached
// (expected only outside the contraction regime).
MeanFieldSolution solve_fixed_point(const TransformedData& td,
                                    const PriorFamily& f, const Vec& theta,
                                    const FixedPointOptions& opts = {});

// Plug-in variance of the projection q'u: sum q_i^2 tau_i^2. Requires
// |q| = 1 to 1e-12; throws contract_error otherwise.
double upsilon_hat(const MeanFieldSolution& sol, const Vec& q);

// CSV rows (i, u_i, tau2_i, s_i).
void export_solution(const MeanFieldSolution& sol, const std::string& path);

}  // namespace veb
