#pragma once

#include <functional>
#include <vector>

namespace veb {

// Gauss-Hermite rule of order n for the weight e^{-x^2} on the real line.
// Nodes/weights are computed once per order (Golub-Welsch) and cached.
struct HermiteRule {
  std::vector<double> x, w;
};
const HermiteRule& gauss_hermite(int n);

// E[h(Z)] for Z ~ N(mean, var) by the recentered/rescaled Gauss-Hermite rule.
double gauss_expect(double mean, double var,
                    const std::function<double(double)>& h, int n = 64);

// Tanh-sinh (double exponential) rule on [a, b]. Weights sum to b - a up to
// the rule's discretization error; intended for smooth integrands.
struct TanhSinhRule {
  std::vector<double> x, w;
};
TanhSinhRule tanh_sinh(double a, double b, int n = 128);

}  // namespace veb
