#pragma once

// Hyperparameter estimators: the variational objective and its maximizer,
// the method-of-moments solver on the least-squares coefficients, and the
// plug-in debiasing correction.

#include <cstdint>
#include <functional>
#include <string>
#include <utility>

#include "veb/design.hpp"
#include "veb/priors.hpp"

namespace veb {

enum class Method { vEB, MoM, Debiased, ExactMML };

std::string method_name(Method m);

struct EstimateReport {
  Method method = Method::vEB;
  Vec theta_hat;
  double objective_value = std::numeric_limits<double>::quiet_NaN();
  int iterations = 0;
  bool converged = false;
  double wall_time = 0.0;  // seconds
  bool clamped = false;    // reported point was projected to the box boundary
};

struct FitOptions {
  int multi_start = 5;
  int max_iter = 500;
  double tol = 1e-8;  // sup-norm of the projected gradient step
  std::uint64_t start_seed = 0x5eb5eb;
};

// (1/p) sum_i log normalizer of the (w_i, d_i) tilt at theta.
double veb_objective(const TransformedData& td, const PriorFamily& f,
                     const Vec& theta);

// Exact gradient, (1/p) sum_i tilted score mean. Throws boundary_error on
// the pi in {0,1} faces where the pointwise score is undefined; the fitter
// uses the gradient's continuous extension internally instead.
Vec veb_objective_grad(const TransformedData& td, const PriorFamily& f,
                       const Vec& theta);

// Multi-start projected quasi-Newton over the family's box (ordered
// constraint for the two-component location family), golden-section
// fallback when k=1 and no start converged.
EstimateReport fit_veb(const TransformedData& td, const PriorFamily& f,
                       const FitOptions& opts = {});

// Moment equations on the least-squares coefficients (X'X)^{-1}X'y, solved
// in closed form and clamped componentwise to the box; clamped=true when a
// clamp was active or the system had no real solution.
EstimateReport fit_mom(const RegressionInstance& inst, const PriorFamily& f);

// Supplies (V, kappa) at a given theta; injected so debiasing does not
// depend on the asymptotics module.
using VkProvider = std::function<std::pair<Mat, Vec>(const Vec&)>;

// theta - (p/n) V(theta)^{-1} kappa(theta), clamped to the box.
EstimateReport debias(const Vec& theta_hat, const PriorFamily& f, int n,
                      int p, const VkProvider& vk);

}  // namespace veb
