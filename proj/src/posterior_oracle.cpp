#include "veb/posterior_oracle.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>

#include "veb/quadrature.hpp"
#include "veb/rng.hpp"

namespace veb {

namespace {

constexpr double kPi = 3.141592653589793238462643383279503;
constexpr double kLog2Pi = 1.837877066409345483560659472811;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Inverse-CDF sampler for the heavy-tailed family's conditional, reusing
// node positions across nearby tilts (weights always recomputed): the
// envelope center moves with t, so positions are rebuilt only when t
// drifts by more than 0.1.
class CauchyGridSampler {
 public:
  CauchyGridSampler(double theta, double d) : theta_(theta), d_(d) {
    if (!(d > 0.0))
      throw numerical_error("conditional sampling requires d > 0");
  }

  double draw(double t, Philox& rng) {
    if (!built_ || std::abs(t - t_built_) > 0.1) rebuild(t);
    // Fresh weights at the exact tilt.
    double peak = kNegInf;
    for (size_t j = 0; j < x_.size(); ++j) {
      double b = x_[j];
      double u = b - theta_;
      logf_[j] = t * b - 0.5 * d_ * b * b - std::log1p(u * u);
      peak = std::max(peak, logf_[j]);
    }
    double sum = 0.0;
    for (size_t j = 0; j < x_.size(); ++j) {
      w_[j] = base_w_[j] * std::exp(logf_[j] - peak);
      sum += w_[j];
    }
    double wmax = 0.0;
    for (double& wj : w_) {
      wj /= sum;
      wmax = std::max(wmax, wj);
    }
    if (wmax > 0.999) {
      // Near-degenerate grid: exact rejection from the Gaussian envelope.
      for (int attempt = 0; attempt < 10000; ++attempt) {
        double b = t / d_ + rng.normal() / std::sqrt(d_);
        double u = b - theta_;
        if (rng.u01() < 1.0 / (1.0 + u * u)) return b;
      }
      throw numerical_error("conditional rejection sampler stalled");
    }
    double u = rng.u01();
    double cum = 0.0;
    const size_t n = x_.size();
    for (size_t j = 0; j < n; ++j) {
      double next = cum + w_[j];
      if (u <= next || j + 1 == n) {
        double lo = j == 0 ? x_[0] : 0.5 * (x_[j - 1] + x_[j]);
        double hi = j + 1 == n ? x_[n - 1] : 0.5 * (x_[j] + x_[j + 1]);
        double frac = w_[j] > 0 ? (u - cum) / w_[j] : 0.5;
        return lo + std::clamp(frac, 0.0, 1.0) * (hi - lo);
      }
      cum = next;
    }
    return x_.back();
  }

 private:
  void rebuild(double t) {
    double c = t / d_;
    double r = 7.5 / std::sqrt(d_);
    TanhSinhRule rule = tanh_sinh(c - r, c + r, 128);
    x_ = rule.x;
    base_w_ = rule.w;
    logf_.assign(x_.size(), 0.0);
    w_.assign(x_.size(), 0.0);
    t_built_ = t;
    built_ = true;
  }

  double theta_, d_;
  bool built_ = false;
  double t_built_ = 0.0;
  std::vector<double> x_, base_w_, logf_, w_;
};

// Batch-means effective sample size of one scalar series.
double batch_means_ess(const Vec& series) {
  const int M = static_cast<int>(series.size());
  if (M < 4) return M;
  double mean = series.mean();
  double s2 = (series.array() - mean).square().sum() / (M - 1);
  if (s2 <= 0.0) return M;
  int K = static_cast<int>(std::sqrt(static_cast<double>(M)));
  int bsz = M / K;
  Vec bm(K);
  for (int k = 0; k < K; ++k)
    bm(k) = series.segment(k * bsz, bsz).mean();
  double mb = bm.mean();
  double s2_bm = (bm.array() - mb).square().sum() / (K - 1);
  double tau = bsz * s2_bm / s2;  // integrated autocorrelation time
  return M / std::max(tau, 1.0);
}

// Data part of the state log weight and the set-bit count for every state
// of the two-point support, by single-bit-flip enumeration.
struct StateTable {
  std::vector<double> L;   // w'b - (1/2) b'(D - A) b restricted to {0,1}^p
  std::vector<std::uint8_t> c;
  int p = 0;
};

StateTable enumerate_states(const TransformedData& td) {
  const int p = td.p();
  if (p > 20)
    throw scale_error("exact enumeration limited to p <= 20 states");
  StateTable tab;
  tab.p = p;
  const std::size_t N = std::size_t{1} << p;
  tab.L.resize(N);
  tab.c.resize(N);
  Vec m = Vec::Zero(p);
  std::vector<char> beta(p, 0);
  double D = 0.0;
  int cnt = 0;
  tab.L[0] = 0.0;
  tab.c[0] = 0;
  for (std::size_t k = 1; k < N; ++k) {
    int j = std::countr_zero(k);  // bit flipped between consecutive codes
    double delta = td.w(j) - 0.5 * td.d(j) + m(j);
    if (!beta[j]) {
      D += delta;
      m += td.A.col(j);
      beta[j] = 1;
      ++cnt;
    } else {
      D -= delta;
      m -= td.A.col(j);
      beta[j] = 0;
      --cnt;
    }
    tab.L[k] = D;
    tab.c[k] = static_cast<std::uint8_t>(cnt);
  }
  return tab;
}

// log sum over states of exp(L + c log(pi) + (p - c) log(1 - pi)),
// guarding the 0 * (-inf) products at the endpoints.
double states_logsumexp(const StateTable& tab, double pi) {
  const double lp = pi > 0.0 ? std::log(pi) : kNegInf;
  const double l1p = pi < 1.0 ? std::log1p(-pi) : kNegInf;
  double peak = kNegInf;
  const std::size_t N = tab.L.size();
  std::vector<double> logw(N);
  for (std::size_t k = 0; k < N; ++k) {
    int c = tab.c[k];
    double v = tab.L[k];
    v += c > 0 ? c * lp : 0.0;
    v += c < tab.p ? (tab.p - c) * l1p : 0.0;
    logw[k] = v;
    peak = std::max(peak, v);
  }
  if (peak == kNegInf)
    throw numerical_error("marginal likelihood has no supported state");
  double sum = 0.0;
  for (std::size_t k = 0; k < N; ++k) sum += std::exp(logw[k] - peak);
  return peak + std::log(sum);
}

void require_two_point(const PriorFamily& f) {
  if (f.family != Family::Bernoulli)
    throw config_error(
        "exact enumeration requires the finite-support two-point family");
}

}  // namespace

PosteriorSummary gibbs_sample(const TransformedData& td, const PriorFamily& f,
                              const Vec& theta, const GibbsConfig& cfg,
                              const std::vector<ProjectionSpec>& projections,
                              const Vec* beta_star) {
  PriorFamily fam = f.with_theta(theta);
  const int p = td.p();
  if (cfg.sweeps < 1) throw config_error("gibbs requires sweeps >= 1");
  const int burn = cfg.burn_in < 0 ? cfg.sweeps / 2 : cfg.burn_in;
  if (burn >= cfg.sweeps)
    throw config_error("gibbs burn-in must be smaller than sweep count");
  const int retained = cfg.sweeps - burn;

  Vec beta(p);
  if (cfg.init == GibbsInit::AtTruth) {
    if (beta_star == nullptr)
      throw config_error("AtTruth initialization needs the true coefficients");
    if (beta_star->size() != p)
      throw contract_error("beta_star dimension mismatch");
    beta = *beta_star;
  } else {
    for (int i = 0; i < p; ++i)
      beta(i) = tilt_moments(fam, {td.w(i), td.d(i)}).mean;
    if (fam.support() == SupportKind::FiniteAtoms) {
      std::vector<double> atoms = fam.atoms();
      for (int i = 0; i < p; ++i) {
        double best = atoms[0];
        for (double a : atoms)
          if (std::abs(a - beta(i)) < std::abs(best - beta(i))) best = a;
        beta(i) = best;
      }
    }
  }

  Philox rng(cfg.seed, stream_id(StreamPurpose::Gibbs,
                                 static_cast<std::uint64_t>(p), cfg.stream));
  std::vector<CauchyGridSampler> cauchy;
  if (fam.family == Family::CauchyLocation) {
    cauchy.reserve(p);
    for (int i = 0; i < p; ++i)
      cauchy.emplace_back(fam.theta(0), td.d(i));
  }

  Vec m = td.A * beta;
  Mat draws(retained, p);
  std::vector<Vec> proj(projections.size(), Vec(retained));
  for (int sweep = 0; sweep < cfg.sweeps; ++sweep) {
    for (int i = 0; i < p; ++i) {
      double t = m(i) + td.w(i);
      double next = cauchy.empty() ? sample_tilted(fam, {t, td.d(i)}, rng)
                                   : cauchy[i].draw(t, rng);
      double delta = next - beta(i);
      if (delta != 0.0) {
        m += td.A.col(i) * delta;
        beta(i) = next;
      }
    }
    if (sweep >= burn) {
      int r = sweep - burn;
      draws.row(r) = beta.transpose();
      for (size_t j = 0; j < projections.size(); ++j)
        proj[j](r) = projections[j].q.dot(beta);
    }
  }

  PosteriorSummary out;
  out.mean = draws.colwise().mean();
  out.var.resize(p);
  out.ess.resize(p);
  for (int i = 0; i < p; ++i) {
    Vec col = draws.col(i);
    out.var(i) = (col.array() - out.mean(i)).square().sum() / retained;
    out.ess(i) = batch_means_ess(col);
  }
  for (size_t j = 0; j < projections.size(); ++j) {
    std::string key = q_label_name(projections[j].label);
    while (out.proj_draws.count(key)) key += "_" + std::to_string(j);
    out.proj_draws.emplace(key, std::move(proj[j]));
  }
  return out;
}

PosteriorSummary exact_enumerate(const TransformedData& td,
                                 const PriorFamily& f, const Vec& theta) {
  require_two_point(f);
  PriorFamily fam = f.with_theta(theta);
  const double pi = fam.theta(0);
  const int p = td.p();
  StateTable tab = enumerate_states(td);
  double logz = states_logsumexp(tab, pi);

  PosteriorSummary out;
  out.mean = Vec::Zero(p);
  const double lp = pi > 0.0 ? std::log(pi) : kNegInf;
  const double l1p = pi < 1.0 ? std::log1p(-pi) : kNegInf;
  const std::size_t N = tab.L.size();
  for (std::size_t k = 0; k < N; ++k) {
    int c = tab.c[k];
    double v = tab.L[k];
    v += c > 0 ? c * lp : 0.0;
    v += c < p ? (p - c) * l1p : 0.0;
    if (v == kNegInf) continue;
    double prob = std::exp(v - logz);
    std::size_t state = k ^ (k >> 1);  // reflected binary encoding of k
    while (state) {
      int bit = std::countr_zero(state);
      out.mean(bit) += prob;
      state &= state - 1;
    }
  }
  out.var = out.mean.array() * (1.0 - out.mean.array());
  const double sigma2 = 1.0 / td.d0;
  out.exact_marginal_loglik = -0.5 * td.n * (kLog2Pi + std::log(sigma2)) -
                              0.5 * td.y_norm2 * td.d0 + logz;
  return out;
}

double elbo_gap(const TransformedData& td, const PriorFamily& f,
                const Vec& theta) {
  require_two_point(f);
  PriorFamily fam = f.with_theta(theta);
  StateTable tab = enumerate_states(td);
  double exact = states_logsumexp(tab, fam.theta(0)) / td.p();
  return exact - veb_objective(td, f, theta);
}

MmlProfile exact_mml_profile(const TransformedData& td, const PriorFamily& f,
                             double grid_step) {
  require_two_point(f);
  if (!(grid_step > 0.0 && grid_step <= 0.5))
    throw config_error("grid step must lie in (0, 0.5]");
  StateTable tab = enumerate_states(td);
  const double sigma2 = 1.0 / td.d0;
  const double constant =
      -0.5 * td.n * (kLog2Pi + std::log(sigma2)) - 0.5 * td.y_norm2 * td.d0;
  const int npts = static_cast<int>(std::floor(1.0 / grid_step)) + 1;
  MmlProfile prof;
  prof.grid.resize(npts);
  prof.loglik.resize(npts);
  int best = 0;
  for (int j = 0; j < npts; ++j) {
    double pi = std::min(1.0, j * grid_step);
    prof.grid(j) = pi;
    prof.loglik(j) = constant + states_logsumexp(tab, pi);
    if (prof.loglik(j) > prof.loglik(best)) best = j;
  }
  prof.argmax = prof.grid(best);
  return prof;
}

EstimateReport fit_exact_mml(const TransformedData& td, const PriorFamily& f,
                             double grid_step) {
  auto t0 = std::chrono::steady_clock::now();
  MmlProfile prof = exact_mml_profile(td, f, grid_step);
  EstimateReport rep;
  rep.method = Method::ExactMML;
  rep.theta_hat = Vec::Constant(1, prof.argmax);
  rep.objective_value = prof.loglik.maxCoeff();
  rep.converged = true;
  rep.clamped = prof.argmax <= 0.0 || prof.argmax >= 1.0;
  rep.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return rep;
}

}  // namespace veb
