#pragma once

// Deterministic limit quantities of the estimator: prior Fisher information
// I, the information-loss matrix V, the bias vector kappa, the posterior
// mean sensitivity J, and the average conditional variance upsilon. All are
// expectations over the pair (B, W) with B from the prior and W | B normal
// with mean d0 B and variance d0; the conditional law of B given W = t is
// the (t, d0) tilt, so inner moments reuse the tilt engine and the outer
// W layer is a finite Gaussian mixture (quadrature) or Monte Carlo.

#include <cstdint>
#include <utility>

#include "veb/priors.hpp"

namespace veb {

enum class OuterScheme { PriorQuadrature, MonteCarlo };

struct AsymptoticOptions {
  OuterScheme outer = OuterScheme::PriorQuadrature;  // Cauchy forces MC
  long mc_samples = 1000000;
  std::uint64_t mc_seed = 0;
  int w_nodes = 64;  // Gauss-Hermite size of the W layer
};

struct AsymptoticBundle {
  Mat I;              // prior Fisher information, k x k
  Mat V;              // I minus expected conditional score variance
  Vec kappa;          // (1/2) E[B^2] E[h''(W)]
  Vec J;              // E over W of d/dtheta of the tilted mean
  double upsilon = 0.0;  // E[Var(B | W)]
  double d0 = 1.0;
  OuterScheme outer = OuterScheme::PriorQuadrature;
  int w_nodes = 64;
  double error_estimate = 0.0;  // refinement gap / MC standard error, plus
                                // the two-form V disagreement
  bool kappa_defined = true;    // false when E[B^2] diverges
};

// Var of the score under the prior itself.
Mat fisher_prior(const PriorFamily& f);

// h(t) = tilted score mean at (t, d0); h'' from the analytic covariance
// expansion E[B^2 g] - 2E[B]E[Bg] + 2E[B]^2 E[g] - E[B^2]E[g].
std::pair<Vec, Vec> h_and_derivs(const PriorFamily& f, double t, double d0);

Mat v_matrix(const PriorFamily& f, double d0,
             const AsymptoticOptions& opts = {});
Vec kappa(const PriorFamily& f, double d0, const AsymptoticOptions& opts = {});
Vec jacobian_J(const PriorFamily& f, double d0,
               const AsymptoticOptions& opts = {});
double upsilon(const PriorFamily& f, double d0,
               const AsymptoticOptions& opts = {});

AsymptoticBundle compute_bundle(const PriorFamily& f, double d0,
                                const AsymptoticOptions& opts = {});

// Best approximation of a data law generated by mu_star within fit_family:
// maximizes the expected tilt log normalizer under the W marginal of
// mu_star. ambiguous flags multi-start maximizers that tie in objective but
// disagree in location by more than 1e-3.
struct KlProjection {
  Vec theta_star;
  double objective = 0.0;
  bool ambiguous = false;
};
KlProjection kl_projection(const PriorFamily& fit_family,
                           const PriorFamily& mu_star, double d0,
                           const AsymptoticOptions& opts = {});

// Scaling classification by delta_hat = p^{3/2}/n: below 0.1 the sqrt(p)
// error is centered normal, up to 10 normal with an asymptotic bias, above
// that no sqrt(p) limit is claimed.
enum class Regime { Normal, BiasedNormal, Degenerate };

struct RegimePrediction {
  Regime regime = Regime::Normal;
  double delta_hat = 0.0;
  Vec centering;       // delta_hat * V^{-1} kappa (bundle overload)
  Mat limit_variance;  // V^{-1}
  bool has_numeric = false;
};

RegimePrediction predict_regime(int n, int p);
RegimePrediction predict_regime(int n, int p, const AsymptoticBundle& bundle);

}  // namespace veb
