#include "veb/asymptotics.hpp"

#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <vector>

#include "veb/optimize.hpp"
#include "veb/quadrature.hpp"
#include "veb/rng.hpp"

namespace veb {

namespace {

constexpr double kPi = 3.141592653589793238462643383279503;
constexpr double kSqrtPi = 1.772453850905516027298167483341;

// Raw tilted moments of (score, score outer product, B score, B^2 score,
// B, B^2) in one pass. Layout: g[k], gg[k*k], bg[k], b2g[k], b, b2.
int inner_size(int k) { return k * k + 3 * k + 2; }

Vec inner_pack(const PriorFamily& f, double t, double d0) {
  const int k = f.k();
  return tilt_expect(
      f, {t, d0},
      [&](double b, Vec& out) {
        Vec g = grad_loglik(f, b);
        int at = 0;
        out.segment(at, k) = g;
        at += k;
        for (int j = 0; j < k; ++j)
          for (int i = 0; i < k; ++i) out(at++) = g(i) * g(j);
        out.segment(at, k) = b * g;
        at += k;
        out.segment(at, k) = (b * b) * g;
        at += k;
        out(at++) = b;
        out(at) = b * b;
      },
      inner_size(k));
}

// Outer integrand at W = t: h, h h', conditional raw second moment of the
// score, conditional variance of B, h'', and Cov(B, score).
int outer_size(int k) { return 2 * k * k + 3 * k + 1; }

Vec outer_pack(const PriorFamily& f, double t, double d0) {
  const int k = f.k();
  Vec in = inner_pack(f, t, d0);
  int at = 0;
  Vec g = in.segment(at, k);
  at += k;
  Mat gg(k, k);
  for (int j = 0; j < k; ++j)
    for (int i = 0; i < k; ++i) gg(i, j) = in(at++);
  Vec bg = in.segment(at, k);
  at += k;
  Vec b2g = in.segment(at, k);
  at += k;
  double b1 = in(at++);
  double b2 = in(at);

  Vec out(outer_size(k));
  at = 0;
  out.segment(at, k) = g;
  at += k;
  for (int j = 0; j < k; ++j)
    for (int i = 0; i < k; ++i) out(at++) = g(i) * g(j);
  for (int j = 0; j < k; ++j)
    for (int i = 0; i < k; ++i) out(at++) = gg(i, j);
  out(at++) = std::max(0.0, b2 - b1 * b1);
  out.segment(at, k) = b2g - 2.0 * b1 * bg + (2.0 * b1 * b1 - b2) * g;
  at += k;
  out.segment(at, k) = bg - b1 * g;
  return out;
}

struct WComp {
  double w, mean, var;
};

// W marginal for atom/Gaussian-mixture priors: each prior atom b maps to
// N(d0 b, d0), each Gaussian component (m, v) to N(d0 m, d0^2 v + d0).
std::vector<WComp> w_marginal(const PriorFamily& f, double d0) {
  TiltMixture prior = tilt_decompose(f, {0.0, 0.0});
  std::vector<WComp> comps;
  for (int a = 0; a < prior.n_atoms; ++a)
    comps.push_back({prior.atom[a].w, d0 * prior.atom[a].b, d0});
  for (int g = 0; g < prior.n_gauss; ++g)
    comps.push_back({prior.gauss[g].w, d0 * prior.gauss[g].mean,
                     d0 * d0 * prior.gauss[g].var + d0});
  return comps;
}

struct OuterResult {
  Vec value;
  double error = 0.0;  // refinement gap or max MC standard error
};

OuterResult outer_expect(const PriorFamily& f, double d0,
                         const AsymptoticOptions& opts) {
  const int N = outer_size(f.k());
  bool mc = opts.outer == OuterScheme::MonteCarlo ||
            f.family == Family::CauchyLocation;
  OuterResult res;
  if (!mc) {
    Vec full = Vec::Zero(N), half = Vec::Zero(N);
    for (const WComp& c : w_marginal(f, d0)) {
      if (c.w == 0.0) continue;
      double sd = std::sqrt(2.0 * c.var);
      // Conditional moments vary on the scale sqrt(d0) of the narrowest W
      // component; a component much wider than that needs proportionally
      // more nodes to resolve them.
      double ratio = std::max(1.0, std::sqrt(c.var / d0));
      for (int pass = 0; pass < 2; ++pass) {
        int base = pass == 0 ? opts.w_nodes : std::max(8, opts.w_nodes / 2);
        int nodes = static_cast<int>(std::min(1024.0, base * ratio));
        const HermiteRule& rule = gauss_hermite(nodes);
        Vec acc = Vec::Zero(N);
        for (size_t i = 0; i < rule.x.size(); ++i) {
          // Tail nodes carry no mass but sit at extreme tilts where the
          // inner quadrature works hardest; drop them.
          if (rule.w[i] < 1e-18) continue;
          acc += rule.w[i] * outer_pack(f, c.mean + sd * rule.x[i], d0);
        }
        (pass == 0 ? full : half) += (c.w / kSqrtPi) * acc;
      }
    }
    res.value = full;
    res.error = (full - half).cwiseAbs().maxCoeff();
    return res;
  }
  Philox rng(opts.mc_seed, stream_id(StreamPurpose::MonteCarlo, 0, 0));
  Vec acc = Vec::Zero(N), acc2 = Vec::Zero(N);
  const double sqd0 = std::sqrt(d0);
  const long n = std::max<long>(opts.mc_samples, 100);
  for (long s = 0; s < n; ++s) {
    double b = sample_prior(f, 1, rng)(0);
    double w = d0 * b + sqd0 * rng.normal();
    Vec v = outer_pack(f, w, d0);
    acc += v;
    acc2 += v.cwiseProduct(v);
  }
  res.value = acc / n;
  Vec var = (acc2 / n - res.value.cwiseProduct(res.value)).cwiseMax(0.0);
  res.error = std::sqrt(var.maxCoeff() / n);
  return res;
}

// Prior second moment; +inf for the Cauchy family.
double prior_second_moment(const PriorFamily& f) {
  if (f.family == Family::CauchyLocation)
    return std::numeric_limits<double>::infinity();
  TiltMixture prior = tilt_decompose(f, {0.0, 0.0});
  double m = prior.mean();
  return prior.variance() + m * m;
}

struct Core {
  Mat I, V1, V2;
  Vec kappa, J, m_h;
  double upsilon = 0.0;
  double refine = 0.0, form_gap = 0.0;
  int w_nodes_used = 0;
  bool kappa_defined = true;
};

Core compute_core(const PriorFamily& f, double d0,
                  const AsymptoticOptions& opts) {
  const int k = f.k();
  const Mat I = fisher_prior(f);
  const double eb2 = prior_second_moment(f);
  const bool mc = opts.outer == OuterScheme::MonteCarlo ||
                  f.family == Family::CauchyLocation;
  AsymptoticOptions cur = opts;
  for (;;) {
    Core core;
    core.I = I;
    OuterResult outer = outer_expect(f, d0, cur);
    const Vec& S = outer.value;
    core.refine = outer.error;
    core.w_nodes_used = cur.w_nodes;

    int at = 0;
    core.m_h = S.segment(at, k);
    at += k;
    Mat Ehh(k, k), Egg(k, k);
    for (int j = 0; j < k; ++j)
      for (int i = 0; i < k; ++i) Ehh(i, j) = S(at++);
    for (int j = 0; j < k; ++j)
      for (int i = 0; i < k; ++i) Egg(i, j) = S(at++);
    core.upsilon = S(at++);
    Vec Eh2 = S.segment(at, k);
    at += k;
    core.J = S.segment(at, k);

    core.V2 = Ehh - core.m_h * core.m_h.transpose();
    core.V1 = core.I - (Egg - Ehh);
    core.V2 = 0.5 * (core.V2 + core.V2.transpose()).eval();
    core.V1 = 0.5 * (core.V1 + core.V1.transpose()).eval();
    core.form_gap = (core.V1 - core.V2).cwiseAbs().maxCoeff();

    if (std::isfinite(eb2)) {
      core.kappa = 0.5 * eb2 * Eh2;
    } else {
      core.kappa = Vec::Constant(k, std::numeric_limits<double>::quiet_NaN());
      core.kappa_defined = false;
    }

    // The two V forms differ only through quadrature / sampling error.
    double tol = mc ? std::max(1e-4, 8.0 * core.refine) : 1e-4;
    if (core.form_gap <= tol) return core;
    // Scale-separated mixtures (a narrow atom component under a wide slab
    // component) need more outer nodes than the default to resolve the
    // conditional moments; double until the two forms reconcile.
    if (mc || cur.w_nodes >= 1024)
      throw numerical_error(
          "conditional-variance and conditional-mean forms of V disagree "
          "beyond tolerance");
    cur.w_nodes *= 2;
  }
}

}  // namespace

Mat fisher_prior(const PriorFamily& f) {
  const int k = f.k();
  Vec raw(k + k * k);
  if (f.family == Family::CauchyLocation) {
    // Angle substitution b = theta + tan(v) integrates the heavy-tailed
    // density exactly over a compact interval.
    TanhSinhRule rule = tanh_sinh(-kPi / 2.0, kPi / 2.0, 256);
    raw.setZero();
    Vec tmp(k + k * k);
    for (size_t j = 0; j < rule.x.size(); ++j) {
      double b = f.theta(0) + std::tan(rule.x[j]);
      Vec g = grad_loglik(f, b);
      tmp(0) = g(0);
      tmp(1) = g(0) * g(0);
      raw += (rule.w[j] / kPi) * tmp;
    }
  } else {
    raw = tilt_expect(
        f, {0.0, 0.0},
        [&](double b, Vec& out) {
          Vec g = grad_loglik(f, b);
          out.segment(0, k) = g;
          int at = k;
          for (int j = 0; j < k; ++j)
            for (int i = 0; i < k; ++i) out(at++) = g(i) * g(j);
        },
        k + k * k);
  }
  Vec m = raw.segment(0, k);
  Mat E2(k, k);
  int at = k;
  for (int j = 0; j < k; ++j)
    for (int i = 0; i < k; ++i) E2(i, j) = raw(at++);
  Mat I = E2 - m * m.transpose();
  return 0.5 * (I + I.transpose());
}

std::pair<Vec, Vec> h_and_derivs(const PriorFamily& f, double t, double d0) {
  const int k = f.k();
  Vec in = inner_pack(f, t, d0);
  int at = 0;
  Vec g = in.segment(at, k);
  at += k + k * k;
  Vec bg = in.segment(at, k);
  at += k;
  Vec b2g = in.segment(at, k);
  at += k;
  double b1 = in(at++);
  double b2 = in(at);
  Vec h2 = b2g - 2.0 * b1 * bg + (2.0 * b1 * b1 - b2) * g;
  return {g, h2};
}

Mat v_matrix(const PriorFamily& f, double d0, const AsymptoticOptions& opts) {
  return compute_core(f, d0, opts).V2;
}

Vec kappa(const PriorFamily& f, double d0, const AsymptoticOptions& opts) {
  Core core = compute_core(f, d0, opts);
  if (!core.kappa_defined)
    throw numerical_error(
        "kappa undefined: the prior second moment diverges for " +
        f.family_name());
  return core.kappa;
}

Vec jacobian_J(const PriorFamily& f, double d0,
               const AsymptoticOptions& opts) {
  return compute_core(f, d0, opts).J;
}

double upsilon(const PriorFamily& f, double d0,
               const AsymptoticOptions& opts) {
  return compute_core(f, d0, opts).upsilon;
}

AsymptoticBundle compute_bundle(const PriorFamily& f, double d0,
                                const AsymptoticOptions& opts) {
  Core core = compute_core(f, d0, opts);
  AsymptoticBundle b;
  b.I = core.I;
  b.V = core.V2;
  b.kappa = core.kappa;
  b.J = core.J;
  b.upsilon = core.upsilon;
  b.d0 = d0;
  b.outer = (f.family == Family::CauchyLocation) ? OuterScheme::MonteCarlo
                                                 : opts.outer;
  b.w_nodes = core.w_nodes_used;
  b.error_estimate = std::max(core.refine, core.form_gap);
  b.kappa_defined = core.kappa_defined;
  return b;
}

KlProjection kl_projection(const PriorFamily& fit_family,
                           const PriorFamily& mu_star, double d0,
                           const AsymptoticOptions& opts) {
  // Fixed node set (weight, W value) for the W marginal of mu_star, shared
  // across all theta evaluations so the objective is smooth in theta.
  std::vector<std::pair<double, double>> nodes;
  bool mc = opts.outer == OuterScheme::MonteCarlo ||
            mu_star.family == Family::CauchyLocation;
  if (!mc) {
    const HermiteRule& rule = gauss_hermite(opts.w_nodes);
    for (const WComp& c : w_marginal(mu_star, d0)) {
      if (c.w == 0.0) continue;
      double sd = std::sqrt(2.0 * c.var);
      for (size_t i = 0; i < rule.x.size(); ++i)
        nodes.push_back({c.w * rule.w[i] / kSqrtPi, c.mean + sd * rule.x[i]});
    }
  } else {
    // A few thousand common random numbers localize theta* well below the
    // 1e-3 ambiguity scale; full mc_samples would be wasteful inside the
    // optimizer loop.
    long n = std::min<long>(std::max<long>(opts.mc_samples, 1000), 20000);
    Philox rng(opts.mc_seed, stream_id(StreamPurpose::MonteCarlo, 1, 0));
    const double sqd0 = std::sqrt(d0);
    for (long s = 0; s < n; ++s) {
      double b = sample_prior(mu_star, 1, rng)(0);
      nodes.push_back({1.0 / n, d0 * b + sqd0 * rng.normal()});
    }
  }

  auto obj = [&](const Vec& x) {
    PriorFamily fam = fit_family.with_theta(x);
    double acc = 0.0;
    for (const auto& [w, t] : nodes) acc += w * tilt_log_normalizer(fam, {t, d0});
    return acc;
  };
  auto grad = [&](const Vec& x) {
    PriorFamily fam = fit_family.with_theta(x);
    Vec acc = Vec::Zero(fit_family.k());
    for (const auto& [w, t] : nodes) acc += w * tilt_score_mean(fam, {t, d0});
    return acc;
  };

  BoxSpec spec{fit_family.theta_box,
               fit_family.family == Family::LocationGMM};
  KlProjection proj;
  std::vector<OptResult> runs;
  for (const Vec& x0 : multi_start_points(spec, 5)) {
    runs.push_back(maximize_box(obj, grad, x0, spec, 500, 1e-8));
  }
  const OptResult* best = nullptr;
  for (const OptResult& r : runs)
    if (!best || r.fval > best->fval) best = &r;
  proj.theta_star = best->x;
  proj.objective = best->fval;
  for (const OptResult& r : runs) {
    if (!r.converged) continue;
    if (std::abs(r.fval - best->fval) <=
            1e-6 * std::max(1.0, std::abs(best->fval)) &&
        (r.x - best->x).cwiseAbs().maxCoeff() > 1e-3)
      proj.ambiguous = true;
  }
  return proj;
}

RegimePrediction predict_regime(int n, int p) {
  if (n <= p) throw config_error("regime prediction requires n > p");
  RegimePrediction pred;
  pred.delta_hat = std::pow(static_cast<double>(p), 1.5) / n;
  pred.regime = pred.delta_hat < 0.1
                    ? Regime::Normal
                    : (pred.delta_hat <= 10.0 ? Regime::BiasedNormal
                                              : Regime::Degenerate);
  return pred;
}

RegimePrediction predict_regime(int n, int p, const AsymptoticBundle& bundle) {
  RegimePrediction pred = predict_regime(n, p);
  if (pred.regime == Regime::Degenerate) return pred;  // no sqrt(p) limit
  Eigen::FullPivLU<Mat> lu(bundle.V);
  if (!lu.isInvertible())
    throw numerical_error("regime prediction: V is singular");
  pred.limit_variance = lu.inverse();
  pred.centering = (pred.regime == Regime::Normal || !bundle.kappa_defined)
                       ? Vec::Zero(bundle.kappa.size())
                       : Vec(pred.delta_hat * (pred.limit_variance *
                                               bundle.kappa));
  pred.has_numeric = true;
  return pred;
}

}  // namespace veb
