#include "veb/design.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

namespace veb {

Mat gen_design(int n, int p, DesignDist dist, Philox& rng) {
  if (n < p || p < 1) throw config_error("gen_design requires n >= p >= 1");
  Mat X(n, p);
  const double s = 1.0 / std::sqrt(static_cast<double>(n));
  if (dist == DesignDist::Gaussian) {
    for (int j = 0; j < p; ++j)
      for (int i = 0; i < n; ++i) X(i, j) = s * rng.normal();
  } else {
    for (int j = 0; j < p; ++j)
      for (int i = 0; i < n; ++i) X(i, j) = rng.u01() < 0.5 ? -s : s;
  }
  return X;
}

RegressionInstance gen_instance(const PriorFamily& f, int n, int p,
                                double sigma2, DesignDist dist, Philox& rng) {
  Mat X = gen_design(n, p, dist, rng);
  return gen_instance(f, X, sigma2, rng);
}

RegressionInstance gen_instance(const PriorFamily& f, const Mat& X,
                                double sigma2, Philox& rng) {
  if (!(sigma2 > 0.0)) throw config_error("gen_instance requires sigma2 > 0");
  RegressionInstance inst;
  inst.n = static_cast<int>(X.rows());
  inst.p = static_cast<int>(X.cols());
  inst.X = X;
  inst.sigma2 = sigma2;
  inst.beta_star = sample_prior(f, inst.p, rng);
  const double sigma = std::sqrt(sigma2);
  inst.y = X * inst.beta_star;
  for (int i = 0; i < inst.n; ++i) inst.y(i) += sigma * rng.normal();
  return inst;
}

TransformedData transform(const Mat& X, const Vec& y, double sigma2) {
  if (!(sigma2 > 0.0)) throw config_error("transform requires sigma2 > 0");
  TransformedData td;
  td.n = static_cast<int>(X.rows());
  td.d0 = 1.0 / sigma2;
  td.y_norm2 = y.squaredNorm();
  td.w = X.transpose() * y / sigma2;
  Mat G = X.transpose() * X / sigma2;
  td.d = G.diagonal();
  td.A = -G;
  td.A.diagonal().setZero();
  return td;
}

TransformedData transform(const RegressionInstance& inst) {
  return transform(inst.X, inst.y, inst.sigma2);
}

double estimate_sigma2(const RegressionInstance& inst) {
  if (inst.n <= inst.p)
    throw numerical_error("variance estimator requires n > p");
  Mat G = inst.X.transpose() * inst.X;
  Eigen::LLT<Mat> llt(G);
  if (llt.info() != Eigen::Success)
    throw numerical_error("X'X is singular; variance estimator undefined");
  Vec xty = inst.X.transpose() * inst.y;
  double fit = xty.dot(llt.solve(xty));
  double rss = inst.y.squaredNorm() - fit;
  return std::max(0.0, rss) / (inst.n - inst.p);
}

void export_instance(const RegressionInstance& inst, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto write_mat = [&](const std::string& name, const Mat& m) {
    std::ofstream out(fs::path(dir) / name);
    out.precision(17);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        if (j) out << ',';
        out << m(i, j);
      }
      out << '\n';
    }
  };
  write_mat("X.csv", inst.X);
  write_mat("y.csv", inst.y);
  write_mat("beta.csv", inst.beta_star);
  nlohmann::json meta{{"n", inst.n}, {"p", inst.p}, {"sigma2", inst.sigma2}};
  std::ofstream(fs::path(dir) / "meta.json") << meta.dump(2) << '\n';
}

}  // namespace veb
