#include "veb/estimators.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <chrono>
#include <cmath>

#include "veb/optimize.hpp"

namespace veb {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

bool pi_on_boundary(const PriorFamily& f) {
  if (f.family != Family::Bernoulli && f.family != Family::SpikeSlab)
    return false;
  return f.theta(0) <= 0.0 || f.theta(0) >= 1.0;
}

bool touches_box(const Vec& x, const std::vector<Interval>& box) {
  for (Eigen::Index i = 0; i < x.size(); ++i)
    if (x(i) <= box[i].lo || x(i) >= box[i].hi) return true;
  return false;
}

}  // namespace

std::string method_name(Method m) {
  switch (m) {
    case Method::vEB:
      return "vEB";
    case Method::MoM:
      return "MoM";
    case Method::Debiased:
      return "Debiased";
    case Method::ExactMML:
      return "ExactMML";
  }
  return "?";
}

double veb_objective(const TransformedData& td, const PriorFamily& f,
                     const Vec& theta) {
  PriorFamily fam = f.with_theta(theta);
  const int p = td.p();
  double acc = 0.0;
  for (int i = 0; i < p; ++i)
    acc += tilt_log_normalizer(fam, {td.w(i), td.d(i)});
  return acc / p;
}

Vec veb_objective_grad(const TransformedData& td, const PriorFamily& f,
                       const Vec& theta) {
  PriorFamily fam = f.with_theta(theta);
  if (pi_on_boundary(fam))
    throw boundary_error(
        "objective gradient undefined at pi in {0,1}; use projected steps");
  const int p = td.p();
  Vec acc = Vec::Zero(fam.k());
  for (int i = 0; i < p; ++i)
    acc += tilt_score_mean(fam, {td.w(i), td.d(i)});
  return acc / p;
}

EstimateReport fit_veb(const TransformedData& td, const PriorFamily& f,
                       const FitOptions& opts) {
  auto t0 = Clock::now();
  BoxSpec spec{f.theta_box, f.family == Family::LocationGMM};
  auto obj = [&](const Vec& x) { return veb_objective(td, f, x); };
  // Continuous extension of the gradient: finite on the pi boundary faces.
  auto grad = [&](const Vec& x) {
    PriorFamily fam = f.with_theta(x);
    Vec acc = Vec::Zero(fam.k());
    for (int i = 0; i < td.p(); ++i)
      acc += tilt_score_mean(fam, {td.w(i), td.d(i)});
    return Vec(acc / td.p());
  };

  EstimateReport rep;
  rep.method = Method::vEB;
  bool have = false;
  int total_iters = 0;
  for (const Vec& x0 : multi_start_points(spec, opts.multi_start,
                                          opts.start_seed)) {
    OptResult r = maximize_box(obj, grad, x0, spec, opts.max_iter, opts.tol);
    total_iters += r.iters;
    if (!have || r.fval > rep.objective_value ||
        (r.fval == rep.objective_value && r.converged && !rep.converged)) {
      rep.theta_hat = r.x;
      rep.objective_value = r.fval;
      rep.converged = r.converged;
      have = true;
    }
  }
  if (!rep.converged && f.k() == 1) {
    double x = golden_section([&](double t) { return obj(Vec::Constant(1, t)); },
                              spec.box[0].lo, spec.box[0].hi, 1e-10);
    double fx = obj(Vec::Constant(1, x));
    if (fx >= rep.objective_value) {
      rep.theta_hat = Vec::Constant(1, x);
      rep.objective_value = fx;
      rep.converged = true;
    }
  }
  rep.iterations = total_iters;
  rep.clamped = touches_box(rep.theta_hat, f.theta_box);
  rep.wall_time = seconds_since(t0);
  return rep;
}

EstimateReport fit_mom(const RegressionInstance& inst, const PriorFamily& f) {
  auto t0 = Clock::now();
  Mat G = inst.X.transpose() * inst.X;
  Eigen::LLT<Mat> llt(G);
  if (llt.info() != Eigen::Success)
    throw numerical_error("X'X is singular; least-squares moments undefined");
  Vec beta = llt.solve(inst.X.transpose() * inst.y);
  const int p = inst.p;
  double m1 = beta.mean();
  double m2 = beta.squaredNorm() / p;
  double m4 = beta.array().pow(4).sum() / p;

  EstimateReport rep;
  rep.method = Method::MoM;
  rep.converged = true;
  Vec raw(f.k());
  switch (f.family) {
    case Family::Bernoulli:
      raw(0) = m1;
      break;
    case Family::SpikeSlab: {
      if (m2 <= 0.0 || m4 <= 0.0) {
        raw << 1.0, 0.0;  // no signal: all mass at the spike
        rep.clamped = true;
        break;
      }
      double tau2 = m4 / (3.0 * m2);
      raw << 1.0 - m2 / tau2, std::sqrt(tau2);
      break;
    }
    case Family::LocationGMM: {
      double disc = m2 - m1 * m1 - 0.625;
      if (disc < 0.0) {
        raw << m1, m1;  // equal-location fallback matching the first moment
        rep.clamped = true;
      } else {
        double r = std::sqrt(disc);
        raw << m1 - r, m1 + r;
      }
      break;
    }
    default:
      throw config_error("moment estimator not defined for " +
                         f.family_name());
  }
  rep.theta_hat = raw;
  for (int a = 0; a < f.k(); ++a) {
    double c = std::clamp(raw(a), f.theta_box[a].lo, f.theta_box[a].hi);
    if (c != raw(a)) rep.clamped = true;
    rep.theta_hat(a) = c;
  }
  rep.wall_time = seconds_since(t0);
  return rep;
}

EstimateReport debias(const Vec& theta_hat, const PriorFamily& f, int n,
                      int p, const VkProvider& vk) {
  auto t0 = Clock::now();
  auto [V, kappa] = vk(theta_hat);
  Eigen::FullPivLU<Mat> lu(V);
  if (!lu.isInvertible())
    throw numerical_error("debias: curvature matrix is singular");
  Vec raw = theta_hat - (static_cast<double>(p) / n) * lu.solve(kappa);
  EstimateReport rep;
  rep.method = Method::Debiased;
  rep.converged = true;
  rep.theta_hat = raw;
  for (int a = 0; a < f.k(); ++a) {
    double c = std::clamp(raw(a), f.theta_box[a].lo, f.theta_box[a].hi);
    if (c != raw(a)) rep.clamped = true;
    rep.theta_hat(a) = c;
  }
  if (f.family == Family::LocationGMM && rep.theta_hat(0) > rep.theta_hat(1)) {
    double mid = 0.5 * (rep.theta_hat(0) + rep.theta_hat(1));
    rep.theta_hat(0) = rep.theta_hat(1) = mid;
    rep.clamped = true;
  }
  rep.wall_time = seconds_since(t0);
  return rep;
}

}  // namespace veb
