#include "veb/meanfield.hpp"

#include <cmath>
#include <deque>
#include <fstream>
#include <sstream>

namespace veb {

Vec naive_init(const TransformedData& td, const PriorFamily& f,
               const Vec& theta) {
  PriorFamily fam = f.with_theta(theta);
  const int p = td.p();
  Vec u(p);
  for (int i = 0; i < p; ++i)
    u(i) = tilt_moments(fam, {td.w(i), td.d(i)}).mean;
  return u;
}

MeanFieldSolution solve_fixed_point(const TransformedData& td,
                                    const PriorFamily& f, const Vec& theta,
                                    const FixedPointOptions& opts) {
  PriorFamily fam = f.with_theta(theta);
  const int p = td.p();
  MeanFieldSolution sol;
  if (opts.init.size() == 0) {
    sol.u = naive_init(td, fam, theta);
  } else {
    if (opts.init.size() != p)
      throw config_error("fixed-point init has wrong dimension");
    sol.u = opts.init;
  }
  double lambda = opts.damping;
  double prev_res = std::numeric_limits<double>::infinity();
  std::deque<double> trace;
  sol.geometric_decay = true;
  Vec update(p);
  for (int iter = 1; iter <= opts.max_iter; ++iter) {
    sol.iterations = iter;
    Vec field = td.A * sol.u;
    double res = 0.0;
    for (int i = 0; i < p; ++i) {
      update(i) = tilt_moments(fam, {field(i) + td.w(i), td.d(i)}).mean;
      res = std::max(res, std::abs(update(i) - sol.u(i)));
    }
    sol.residual = res;
    trace.push_back(res);
    if (trace.size() > 8) trace.pop_front();
    if (res <= opts.tol) {
      sol.u = update;
      break;
    }
    if (opts.adaptive && res > prev_res) {
      lambda *= 0.5;  // never re-increased: overshoot means weak contraction
      sol.geometric_decay = false;
    }
    prev_res = res;
    sol.u = (1.0 - lambda) * sol.u + lambda * update;
  }
  if (sol.residual > opts.tol) {
    std::ostringstream msg;
    msg << "mean-field iteration did not converge; trailing residuals:";
    for (double r : trace) msg << ' ' << r;
    throw numerical_error(msg.str());
  }
  sol.s = td.A * sol.u;
  sol.tau2.resize(p);
  for (int i = 0; i < p; ++i) {
    TiltedMoments m = tilt_moments(fam, {sol.s(i) + td.w(i), td.d(i)});
    sol.u(i) = m.mean;
    sol.tau2(i) = m.variance;
  }
  return sol;
}

double upsilon_hat(const MeanFieldSolution& sol, const Vec& q) {
  if (std::abs(q.norm() - 1.0) > 1e-12)
    throw contract_error("projection vector must have unit norm");
  return q.cwiseProduct(q).dot(sol.tau2);
}

void export_solution(const MeanFieldSolution& sol, const std::string& path) {
  std::ofstream out(path);
  out.precision(17);
  out << "i,u,tau2,s\n";
  for (Eigen::Index i = 0; i < sol.u.size(); ++i)
    out << i << ',' << sol.u(i) << ',' << sol.tau2(i) << ',' << sol.s(i)
        << '\n';
}

}  // namespace veb
