#pragma once

#include <Eigen/Dense>

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "veb/errors.hpp"
#include "veb/rng.hpp"

namespace veb {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class Family {
  GaussianMean,    // N(theta, 1)
  Bernoulli,       // atoms {0, 1}, P(1) = pi
  SpikeSlab,       // pi * delta_0 + (1 - pi) * N(0, tau^2)
  LocationGMM,     // 0.5 * N(theta1, 1) + 0.5 * N(theta2, 0.25), theta1 <= theta2
  CauchyLocation,  // Cauchy(theta, 1); heavy-tailed, experimental
  SymmetricGMM,    // 0.5 * N(theta, 1) + 0.5 * N(-theta, 1), theta >= 0
};

enum class SupportKind { FiniteAtoms, Lebesgue, AtomPlusLebesgue };

struct Interval {
  double lo, hi;
};

// A parametric prior mu_theta together with its compact parameter box.
struct PriorFamily {
  Family family;
  Vec theta;
  std::vector<Interval> theta_box;

  static PriorFamily gaussian_mean(double theta);
  static PriorFamily bernoulli(double pi);
  static PriorFamily spike_slab(double pi, double tau);
  static PriorFamily location_gmm(double theta1, double theta2);
  static PriorFamily cauchy_location(double theta);
  static PriorFamily symmetric_gmm(double theta);
  static PriorFamily make(Family f, const Vec& theta);

  int k() const { return static_cast<int>(theta.size()); }
  SupportKind support() const;
  std::vector<double> atoms() const;  // FiniteAtoms support only
  PriorFamily with_theta(const Vec& t) const;
  std::string family_name() const;
  // Throws config_error unless theta sits inside the box (and respects the
  // ordering constraint for LocationGMM).
  void validate() const;
};

Family family_from_name(const std::string& name);

// Linear-quadratic tilt e^{t b - d b^2 / 2} applied to mu_theta.
struct TiltParams {
  double t = 0.0;
  double d = 0.0;
};

enum class MomentScheme { ClosedForm, Quadrature, AtomMixture };

struct TiltedMoments {
  double log_normalizer;
  double mean;      // psi'(t)
  double variance;  // psi''(t)
  MomentScheme scheme;
};

// The tilted measure decomposed into exactly integrable parts: point atoms
// plus Gaussian components (conjugate families), or a normalized quadrature
// grid (Cauchy). Component weights sum to 1.
struct TiltMixture {
  struct AtomComp {
    double w, b;
  };
  struct GaussComp {
    double w, mean, var;
  };
  int n_atoms = 0;
  int n_gauss = 0;
  std::array<AtomComp, 2> atom{};
  std::array<GaussComp, 2> gauss{};
  std::vector<double> grid_b, grid_w;  // CauchyLocation only
  double log_normalizer = 0.0;

  double mean() const;
  double variance() const;
};

TiltMixture tilt_decompose(const PriorFamily& f, const TiltParams& tp);

// Log-density of mu_theta against the family's base measure: counting measure
// on atoms, Lebesgue otherwise; for SpikeSlab the base measure is
// delta_0 + Lebesgue and the evaluator at b = 0 reports the total local mass
// pi + (1 - pi) * slab(0). Returns -inf for zero-mass atoms; throws
// domain_error off the support.
double log_prior_lik(const PriorFamily& f, double b);

// Analytic d/dtheta and d^2/dtheta^2 of the log-likelihood. For SpikeSlab at
// b = 0 exactly these are the atom-component scores (the measure-correct
// choice; Bartlett identities hold), not derivatives of the b = 0 evaluator
// above. Throws boundary_error where the derivative is undefined
// (pi in {0, 1}).
Vec grad_loglik(const PriorFamily& f, double b);
Mat hess_loglik(const PriorFamily& f, double b);

// log of integral e^{t b - d b^2 / 2} dmu_theta(b).
double tilt_log_normalizer(const PriorFamily& f, const TiltParams& tp);

TiltedMoments tilt_moments(const PriorFamily& f, const TiltParams& tp);

// E[h(B)] under the tilted measure; atoms summed exactly, Gaussian components
// via recentered Gauss-Hermite, Cauchy via its grid. The vector form maps b to
// an m-vector. A refinement check (half the node count) guards quadrature
// families; disagreement beyond 1e-7 relative throws numerical_error.
double tilt_expect(const PriorFamily& f, const TiltParams& tp,
                   const std::function<double(double)>& h);
Vec tilt_expect(const PriorFamily& f, const TiltParams& tp,
                const std::function<void(double, Vec&)>& h, int m);

// Mean of the score under the tilted measure = exact theta-gradient of
// tilt_log_normalizer, evaluated without generic quadrature for the
// conjugate families (mixture-component identity). On the pi boundary,
// where the pointwise score is undefined, this returns the gradient's
// continuous extension so projected box optimizers can evaluate it there.
Vec tilt_score_mean(const PriorFamily& f, const TiltParams& tp);

// Exact draw from the tilted measure.
double sample_tilted(const PriorFamily& f, const TiltParams& tp, Philox& rng);

// i.i.d. draws from mu_theta itself.
Vec sample_prior(const PriorFamily& f, int n, Philox& rng);

}  // namespace veb
