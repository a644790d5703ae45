#pragma once

// Small box-constrained maximizers for the 1- and 2-dimensional parameter
// problems: projected BFGS with Armijo backtracking along the projection
// arc, a golden-section fallback for k=1, and deterministic multi-start.

#include <cstdint>
#include <functional>
#include <vector>

#include "veb/priors.hpp"

namespace veb {

struct BoxSpec {
  std::vector<Interval> box;
  bool ordered = false;  // k=2 only: feasible set restricted to x0 <= x1
};

struct OptResult {
  Vec x;
  double fval = 0.0;  // objective (maximization convention)
  int iters = 0;
  bool converged = false;
};

// Project onto the box; with ordered=true, first onto the half-space
// x0 <= x1 (midpoint rule), then clamp. The composition lands in the
// feasible set because the box bounds for both coordinates coincide.
Vec project_box(const Vec& x, const BoxSpec& spec);

// Maximize f over the box from x0. grad may be empty; finite differences
// are used then. Convergence: sup-norm of the projected gradient step
// below tol.
OptResult maximize_box(const std::function<double(const Vec&)>& f,
                       const std::function<Vec(const Vec&)>& grad,
                       const Vec& x0, const BoxSpec& spec, int max_iter = 500,
                       double tol = 1e-8);

// Golden-section maximization on [lo, hi]; returns the argmax.
double golden_section(const std::function<double(double)>& f, double lo,
                      double hi, double tol = 1e-10);

// count start points: box center plus a fixed-seed Latin-hypercube spread,
// all projected into the feasible set. Deterministic for a given (spec,
// count, seed).
std::vector<Vec> multi_start_points(const BoxSpec& spec, int count,
                                    std::uint64_t seed = 0x5eb5eb);

}  // namespace veb
