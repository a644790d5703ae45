#include "veb/quadrature.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <map>
#include <mutex>

#include "veb/errors.hpp"

namespace veb {

namespace {

constexpr double kPi = 3.141592653589793238462643383279503;

HermiteRule build_hermite(int n) {
  // Golub-Welsch on the Jacobi matrix of the (physicists') Hermite
  // recurrence: zero diagonal, off-diagonal sqrt(k / 2).
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    double b = std::sqrt(k / 2.0);
    jac(k, k - 1) = b;
    jac(k - 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jac);
  if (es.info() != Eigen::Success)
    throw numerical_error("Gauss-Hermite eigendecomposition failed");
  HermiteRule rule;
  rule.x.resize(n);
  rule.w.resize(n);
  const double sqrt_pi = std::sqrt(kPi);
  for (int i = 0; i < n; ++i) {
    rule.x[i] = es.eigenvalues()(i);
    double v0 = es.eigenvectors()(0, i);
    rule.w[i] = sqrt_pi * v0 * v0;
  }
  return rule;
}

}  // namespace

const HermiteRule& gauss_hermite(int n) {
  static std::mutex mu;
  static std::map<int, HermiteRule> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, build_hermite(n)).first;
  return it->second;
}

double gauss_expect(double mean, double var,
                    const std::function<double(double)>& h, int n) {
  if (var < 0) throw numerical_error("gauss_expect: negative variance");
  if (var == 0) return h(mean);
  const HermiteRule& rule = gauss_hermite(n);
  const double scale = std::sqrt(2.0 * var);
  const double inv_sqrt_pi = 1.0 / std::sqrt(kPi);
  double acc = 0.0;
  for (int i = 0; i < n; ++i)
    acc += rule.w[i] * h(mean + scale * rule.x[i]);
  return acc * inv_sqrt_pi;
}

TanhSinhRule tanh_sinh(double a, double b, int n) {
  if (!(b > a)) throw numerical_error("tanh_sinh: empty interval");
  const double t_max = 3.2;
  const double h = 2.0 * t_max / n;
  const double c = 0.5 * (a + b);
  const double r = 0.5 * (b - a);
  TanhSinhRule rule;
  rule.x.resize(n);
  rule.w.resize(n);
  for (int j = 0; j < n; ++j) {
    double t = -t_max + (j + 0.5) * h;
    double s = 0.5 * kPi * std::sinh(t);
    double x = std::tanh(s);
    double ch = std::cosh(s);
    double w = h * 0.5 * kPi * std::cosh(t) / (ch * ch);
    rule.x[j] = c + r * x;
    rule.w[j] = r * w;
  }
  return rule;
}

}  // namespace veb
