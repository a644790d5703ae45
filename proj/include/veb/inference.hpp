#pragma once

// Projection statistics q'beta and their credible intervals: the plug-in
// interval centered at the variational mean with variance sum q_i^2 tau_i^2,
// and the widened variant adding the hyperparameter-uncertainty term
// gamma^2 J' V^{-1} J.

#include <string>

#include "veb/asymptotics.hpp"
#include "veb/meanfield.hpp"
#include "veb/priors.hpp"

namespace veb {

enum class QLabel { Avg, Contrast, Custom };

std::string q_label_name(QLabel label);

struct ProjectionSpec {
  Vec q;               // unit norm
  double gamma = 0.0;  // limit of sum(q)/sqrt(p); supplied analytically
  QLabel label = QLabel::Custom;
};

// Avg: all-ones/sqrt(p), gamma 1. Contrast: half +, half -, gamma 0
// (p must be even; config_error otherwise).
ProjectionSpec make_q(QLabel label, int p);

// Custom projection; q must have unit norm (contract_error) and |gamma|
// at most 1 (config_error). The overload without gamma uses sum(q)/sqrt(p).
ProjectionSpec make_custom_q(const Vec& q, double gamma);
ProjectionSpec make_custom_q(const Vec& q);

enum class CiKind { Oracle, EB, AdjustedEB };

std::string ci_kind_name(CiKind kind);

struct CredibleInterval {
  double center = 0.0;
  double half_width = 0.0;
  double alpha = 0.1;
  CiKind kind = CiKind::EB;
  double lo() const { return center - half_width; }
  double hi() const { return center + half_width; }
  double width() const { return 2.0 * half_width; }
  bool contains(double x) const { return lo() <= x && x <= hi(); }
};

// Standard normal quantile at probability prob.
double normal_upper_quantile(double prob);

// [q'u +- c sqrt(sum q_i^2 tau_i^2)] with c the 1 - alpha/2 normal
// quantile.
CredibleInterval ci_eb(const MeanFieldSolution& sol,
                       const ProjectionSpec& spec, double alpha);

// Same formula evaluated at a solution computed under the true
// hyperparameter; tagged Oracle.
CredibleInterval ci_oracle(const MeanFieldSolution& sol_at_truth,
                           const ProjectionSpec& spec, double alpha);

// Adds gamma^2 J(theta_hat)' V(theta_hat)^{-1} J(theta_hat) under the
// root. Singular V -> numerical_error. gamma = 0 reduces to ci_eb exactly.
CredibleInterval ci_adjusted(const MeanFieldSolution& sol,
                             const ProjectionSpec& spec, double alpha,
                             const AsymptoticBundle& asy);

// Fraction of draws inside the interval. Empty draws -> contract_error.
double coverage_eval(const CredibleInterval& interval, const Vec& draws);

}  // namespace veb
