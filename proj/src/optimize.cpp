#include "veb/optimize.hpp"

#include <algorithm>
#include <cmath>

#include "veb/rng.hpp"

namespace veb {

Vec project_box(const Vec& x, const BoxSpec& spec) {
  Vec z = x;
  if (spec.ordered && z.size() == 2 && z(0) > z(1)) {
    double mid = 0.5 * (z(0) + z(1));
    z(0) = z(1) = mid;
  }
  for (Eigen::Index i = 0; i < z.size(); ++i)
    z(i) = std::clamp(z(i), spec.box[i].lo, spec.box[i].hi);
  return z;
}

namespace {

// Central differences, one-sided next to a box face (f may be undefined
// outside the box).
Vec fd_grad(const std::function<double(const Vec&)>& f, const Vec& x,
            const BoxSpec& spec) {
  Vec g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    double h = 1e-6 * std::max(1.0, std::abs(x(i)));
    double lo = std::max(x(i) - h, spec.box[i].lo);
    double hi = std::min(x(i) + h, spec.box[i].hi);
    Vec xp = x, xm = x;
    xp(i) = hi;
    xm(i) = lo;
    g(i) = hi > lo ? (f(xp) - f(xm)) / (hi - lo) : 0.0;
  }
  return g;
}

}  // namespace

OptResult maximize_box(const std::function<double(const Vec&)>& f,
                       const std::function<Vec(const Vec&)>& grad,
                       const Vec& x0, const BoxSpec& spec, int max_iter,
                       double tol) {
  const int k = static_cast<int>(x0.size());
  auto g_of = [&](const Vec& x) -> Vec {
    return grad ? Vec(-grad(x)) : Vec(-fd_grad(f, x, spec));
  };
  OptResult res;
  Vec x = project_box(x0, spec);
  double fx = -f(x);
  Vec gx = g_of(x);
  Mat H = Mat::Identity(k, k);
  const double c1 = 1e-4;
  for (int iter = 0; iter < max_iter; ++iter) {
    res.iters = iter;
    if ((x - project_box(x - gx, spec)).cwiseAbs().maxCoeff() <= tol) {
      res.converged = true;
      break;
    }
    Vec dir = -(H * gx);
    bool steepest = false;
    if (dir.dot(gx) > -1e-14 * dir.norm() * gx.norm()) {
      dir = -gx;  // curvature model unusable this step
      H.setIdentity();
      steepest = true;
    }
    double t = 1.0;
    Vec xn;
    double fn = fx;
    bool accepted = false;
    while (t >= 1e-16) {
      xn = project_box(x + t * dir, spec);
      if ((xn - x).cwiseAbs().maxCoeff() == 0.0) break;
      fn = -f(xn);
      if (fn <= fx + c1 * gx.dot(xn - x)) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      if (steepest) break;  // no feasible decrease even along -grad
      H.setIdentity();
      continue;
    }
    Vec gn = g_of(xn);
    Vec s = xn - x, yk = gn - gx;
    double sy = s.dot(yk);
    if (sy > 1e-12) {
      Mat V = Mat::Identity(k, k) - (s * yk.transpose()) / sy;
      H = V * H * V.transpose() + (s * s.transpose()) / sy;
    }
    x = xn;
    fx = fn;
    gx = gn;
  }
  res.x = x;
  res.fval = -fx;
  return res;
}

double golden_section(const std::function<double(double)>& f, double lo,
                      double hi, double tol) {
  const double invphi = 0.6180339887498948482;
  double a = lo, b = hi;
  double c = b - invphi * (b - a), d = a + invphi * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - invphi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + invphi * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

std::vector<Vec> multi_start_points(const BoxSpec& spec, int count,
                                    std::uint64_t seed) {
  const int k = static_cast<int>(spec.box.size());
  std::vector<Vec> pts;
  if (count <= 0) return pts;
  Vec center(k);
  for (int i = 0; i < k; ++i)
    center(i) = 0.5 * (spec.box[i].lo + spec.box[i].hi);
  pts.push_back(project_box(center, spec));
  const int m = count - 1;
  if (m == 0) return pts;
  Philox rng(seed, stream_id(StreamPurpose::Scratch, 0, 0));
  std::vector<std::vector<int>> perm(k, std::vector<int>(m));
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < m; ++j) perm[i][j] = j;
    for (int j = m - 1; j > 0; --j) {
      int r = static_cast<int>(rng.u01() * (j + 1));
      std::swap(perm[i][j], perm[i][std::min(r, j)]);
    }
  }
  for (int j = 0; j < m; ++j) {
    Vec x(k);
    for (int i = 0; i < k; ++i) {
      double u = (perm[i][j] + rng.u01()) / m;
      x(i) = spec.box[i].lo + u * (spec.box[i].hi - spec.box[i].lo);
    }
    pts.push_back(project_box(x, spec));
  }
  return pts;
}

}  // namespace veb
