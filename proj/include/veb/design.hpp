#pragma once

// Synthetic regression instances and the transformed sufficient statistics
// (w, d, A) the estimators consume. Entries of X scale like 1/sqrt(n) so
// X'X concentrates near the identity for n >> p.

#include <string>

#include "veb/errors.hpp"
#include "veb/priors.hpp"
#include "veb/rng.hpp"

namespace veb {

enum class DesignDist { Gaussian, Rademacher };

struct RegressionInstance {
  Mat X;          // n x p, i.i.d. entries from P/sqrt(n), P mean 0 var 1
  Vec y;          // n, y = X beta_star + sigma * eps
  Vec beta_star;  // p, i.i.d. draws from the prior
  double sigma2 = 1.0;
  int n = 0, p = 0;
};

struct TransformedData {
  Vec w;   // X'y / sigma^2
  Vec d;   // diag(X'X) / sigma^2, all positive
  Mat A;   // -offdiag(X'X) / sigma^2, symmetric, exactly zero diagonal
  double d0 = 1.0;  // 1 / sigma^2
  int n = 0;
  double y_norm2 = 0.0;  // |y|^2, kept for exact marginal-likelihood work
  int p() const { return static_cast<int>(w.size()); }
};

// n >= p >= 1 required. Entries i.i.d. P/sqrt(n).
Mat gen_design(int n, int p, DesignDist dist, Philox& rng);

// beta_star ~ prior, y = X beta_star + sigma eps with fresh X.
RegressionInstance gen_instance(const PriorFamily& f, int n, int p,
                                double sigma2, DesignDist dist, Philox& rng);

// Same, reusing a fixed design matrix (fresh beta_star and noise only).
RegressionInstance gen_instance(const PriorFamily& f, const Mat& X,
                                double sigma2, Philox& rng);

// Exact linear algebra: w = X'y/s2, d = diag(X'X)/s2, A = -offdiag(X'X)/s2.
TransformedData transform(const RegressionInstance& inst);
TransformedData transform(const Mat& X, const Vec& y, double sigma2);

// Residual mean square y'(I - X(X'X)^{-1}X')y / (n - p). Requires n > p and
// X'X invertible; throws numerical_error otherwise.
double estimate_sigma2(const RegressionInstance& inst);

// Columnar CSV bundle (X.csv, y.csv, beta.csv, meta.json) for cross-checks.
void export_instance(const RegressionInstance& inst, const std::string& dir);

}  // namespace veb
