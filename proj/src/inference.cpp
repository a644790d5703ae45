#include "veb/inference.hpp"

#include <Eigen/Cholesky>
#include <boost/math/distributions/normal.hpp>
#include <cmath>

namespace veb {

std::string q_label_name(QLabel label) {
  switch (label) {
    case QLabel::Avg:
      return "avg";
    case QLabel::Contrast:
      return "con";
    case QLabel::Custom:
      return "custom";
  }
  return "?";
}

std::string ci_kind_name(CiKind kind) {
  switch (kind) {
    case CiKind::Oracle:
      return "Oracle";
    case CiKind::EB:
      return "EB";
    case CiKind::AdjustedEB:
      return "AdjustedEB";
  }
  return "?";
}

ProjectionSpec make_q(QLabel label, int p) {
  if (p < 1) throw config_error("projection requires p >= 1");
  ProjectionSpec spec;
  spec.label = label;
  const double s = 1.0 / std::sqrt(static_cast<double>(p));
  switch (label) {
    case QLabel::Avg:
      spec.q = Vec::Constant(p, s);
      spec.gamma = 1.0;
      return spec;
    case QLabel::Contrast:
      if (p % 2 != 0)
        throw config_error("contrast projection requires even p");
      spec.q = Vec::Constant(p, s);
      spec.q.tail(p / 2).setConstant(-s);
      spec.gamma = 0.0;
      return spec;
    case QLabel::Custom:
      throw config_error("custom projections go through make_custom_q");
  }
  throw config_error("unknown projection label");
}

ProjectionSpec make_custom_q(const Vec& q, double gamma) {
  if (std::abs(q.norm() - 1.0) > 1e-12)
    throw contract_error("projection vector must have unit norm");
  if (std::abs(gamma) > 1.0 + 1e-12)
    throw config_error("|gamma| must be at most 1");
  return {q, gamma, QLabel::Custom};
}

ProjectionSpec make_custom_q(const Vec& q) {
  return make_custom_q(q, q.sum() / std::sqrt(static_cast<double>(q.size())));
}

double normal_upper_quantile(double prob) {
  boost::math::normal_distribution<double> dist;
  return boost::math::quantile(dist, prob);
}

namespace {

CredibleInterval make_interval(const MeanFieldSolution& sol,
                               const ProjectionSpec& spec, double alpha,
                               double extra_var, CiKind kind) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw config_error("alpha must lie in (0,1)");
  CredibleInterval ci;
  ci.alpha = alpha;
  ci.kind = kind;
  ci.center = spec.q.dot(sol.u);
  double v = upsilon_hat(sol, spec.q) + extra_var;
  ci.half_width = normal_upper_quantile(1.0 - alpha / 2.0) * std::sqrt(v);
  return ci;
}

}  // namespace

CredibleInterval ci_eb(const MeanFieldSolution& sol,
                       const ProjectionSpec& spec, double alpha) {
  return make_interval(sol, spec, alpha, 0.0, CiKind::EB);
}

CredibleInterval ci_oracle(const MeanFieldSolution& sol_at_truth,
                           const ProjectionSpec& spec, double alpha) {
  return make_interval(sol_at_truth, spec, alpha, 0.0, CiKind::Oracle);
}

CredibleInterval ci_adjusted(const MeanFieldSolution& sol,
                             const ProjectionSpec& spec, double alpha,
                             const AsymptoticBundle& asy) {
  double extra = 0.0;
  if (spec.gamma != 0.0) {
    Eigen::LLT<Mat> llt(asy.V);
    if (llt.info() != Eigen::Success)
      throw numerical_error("adjusted interval: V is not positive definite");
    extra = spec.gamma * spec.gamma * asy.J.dot(llt.solve(asy.J));
  }
  return make_interval(sol, spec, alpha, extra, CiKind::AdjustedEB);
}

double coverage_eval(const CredibleInterval& interval, const Vec& draws) {
  if (draws.size() == 0)
    throw contract_error("coverage evaluation needs at least one draw");
  double hits = 0.0;
  for (Eigen::Index i = 0; i < draws.size(); ++i)
    if (interval.contains(draws(i))) hits += 1.0;
  return hits / draws.size();
}

}  // namespace veb
