// Structural identities that must hold for every prior family: score
// identities under the prior, normalizer/moment consistency, closed-form
// moments against brute-force quadrature, the Loewner order I > V, the
// conditional-variance decomposition of the Fisher information, quadrature
// vs Monte Carlo agreement for the asymptotic constants, and analytic
// derivatives against finite differences. Runs in well under two minutes.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <veb/asymptotics.hpp>
#include <veb/design.hpp>
#include <veb/estimators.hpp>
#include <veb/priors.hpp>
#include <veb/quadrature.hpp>
#include <veb/rng.hpp>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <numbers>
#include <vector>

#include "expected.hpp"

using namespace veb;

namespace {

// Non-Cauchy reference set: every family with finite prior second moment.
std::vector<PriorFamily> moment_families() {
  return {PriorFamily::gaussian_mean(0.7),    PriorFamily::bernoulli(0.3),
          PriorFamily::bernoulli(0.62),       PriorFamily::spike_slab(0.4, 1.5),
          PriorFamily::spike_slab(0.7, 2.5),  PriorFamily::location_gmm(-0.8, 0.6),
          PriorFamily::location_gmm(-1.2, -0.1), PriorFamily::symmetric_gmm(0.9),
          PriorFamily::symmetric_gmm(1.4)};
}

std::vector<PriorFamily> all_families() {
  auto fams = moment_families();
  fams.push_back(PriorFamily::cauchy_location(0.3));
  fams.push_back(PriorFamily::cauchy_location(-1.1));
  return fams;
}

// E[h(B)] under the untilted prior, via the tilt engine at t = 0, d = 0.
Vec prior_expect(const PriorFamily& f, const std::function<void(double, Vec&)>& h,
                 int dim) {
  return tilt_expect(f, TiltParams{0.0, 0.0}, h, dim);
}

}  // namespace

// First Bartlett identity: the prior score has mean zero, E[grad log f] = 0.
// Second: Var[grad log f] + E[hess log f] = 0. Both are expectations of
// functions of B alone, so the tilt engine at t = 0, d = 0 evaluates them.
TEST_CASE("score identities under the prior hold for every smooth family") {
  for (const auto& f : moment_families()) {
    CAPTURE(f.family_name());
    const int k = f.k();
    const int dim = k + 2 * k * k;
    auto pack = [&](double b, Vec& out) {
      Vec g = grad_loglik(f, b);
      Mat H = hess_loglik(f, b);
      out.head(k) = g;
      Eigen::Map<Mat>(out.data() + k, k, k) = g * g.transpose();
      Eigen::Map<Mat>(out.data() + k + k * k, k, k) = H;
    };
    Vec m = prior_expect(f, pack, dim);
    Vec mean_score = m.head(k);
    Mat second = Eigen::Map<Mat>(m.data() + k, k, k);
    Mat mean_hess = Eigen::Map<Mat>(m.data() + k + k * k, k, k);

    CHECK(mean_score.cwiseAbs().maxCoeff() <= 1e-7);
    Mat resid = (second - mean_score * mean_score.transpose()) + mean_hess;
    CHECK(resid.norm() <= 1e-6);

    // The same moments reproduce the Fisher information.
    Mat I = fisher_prior(f);
    CHECK((second - mean_score * mean_score.transpose() - I).norm() <= 1e-6);
  }
}

// The Cauchy score has no tractable prior expectation through the tilt
// engine's moment path, so integrate it directly: substituting
// b = theta + tan(u) turns E[h(B)] into the flat integral of h over
// (-pi/2, pi/2) divided by pi. Midpoint rule converges fast; the identities
// E[g] = 0, E[g^2] + E[g'] = 0, and E[g^2] = 1/2 pin the score functions.
TEST_CASE("score identities hold for the heavy-tailed location family") {
  PriorFamily f = PriorFamily::cauchy_location(0.45);
  const double theta = f.theta(0);
  const int m = 20000;
  double eg = 0.0, egg = 0.0, eh = 0.0;
  for (int i = 0; i < m; ++i) {
    double u = (i + 0.5) / m * std::numbers::pi - std::numbers::pi / 2;
    double b = theta + std::tan(u);
    double g = grad_loglik(f, b)(0);
    double H = hess_loglik(f, b)(0, 0);
    eg += g;
    egg += g * g;
    eh += H;
  }
  eg /= m;
  egg /= m;
  eh /= m;
  CHECK(std::abs(eg) <= 1e-7);
  CHECK(std::abs(egg + eh) <= 1e-6);
  CHECK(egg == doctest::Approx(0.5).epsilon(1e-7));
  CHECK(fisher_prior(f)(0, 0) == doctest::Approx(0.5).epsilon(1e-12));

  // Symmetry of the location score around theta, pointwise.
  for (double x : {0.1, 0.7, 1.9, 4.2}) {
    CHECK(grad_loglik(f, theta + x)(0) ==
          doctest::Approx(-grad_loglik(f, theta - x)(0)).epsilon(1e-14));
    CHECK(hess_loglik(f, theta + x)(0, 0) ==
          doctest::Approx(hess_loglik(f, theta - x)(0, 0)).epsilon(1e-14));
  }
}

// psi' and psi'' reported by tilt_moments are the first two t-derivatives of
// tilt_log_normalizer. The first difference uses the stated 1e-5 step. The
// second difference needs a 1e-4 step: at 1e-5 the subtractive roundoff
// floor eps * |psi| / h^2 sits near 1e-5, above the 1e-6 tolerance.
TEST_CASE("tilted mean and variance match finite differences of the log normalizer") {
  Philox rng(913, 0);
  for (const auto& f : all_families()) {
    CAPTURE(f.family_name());
    for (int trial = 0; trial < 50; ++trial) {
      double t = -3.0 + 6.0 * rng.u01();
      double d = 0.2 + 3.8 * rng.u01();
      TiltedMoments tm = tilt_moments(f, {t, d});

      const double h1 = 1e-5;
      double fd1 = (tilt_log_normalizer(f, {t + h1, d}) -
                    tilt_log_normalizer(f, {t - h1, d})) /
                   (2 * h1);
      CHECK(std::abs(fd1 - tm.mean) <= 1e-6);

      const double h2 = 1e-4;
      double fd2 = (tilt_log_normalizer(f, {t + h2, d}) -
                    2 * tilt_log_normalizer(f, {t, d}) +
                    tilt_log_normalizer(f, {t - h2, d})) /
                   (h2 * h2);
      CHECK(std::abs(fd2 - tm.variance) <= 1e-6);
    }
  }
}

// Closed-form tilted moments against a brute-force oracle built from
// log_prior_lik alone. Atom families sum directly; continuous families use
// a fine trapezoid over [-14, 14] (the integrand keeps the prior's Gaussian
// tails since d >= 0, so the grid captures it to machine precision). The
// spike-and-slab atom at zero is kept off the grid by a half-step offset
// and added analytically with weight pi * exp(0).
TEST_CASE("closed-form tilted moments agree with direct quadrature to 1e-8") {
  struct Probe {
    PriorFamily f;
    bool has_atom0;   // point mass at b = 0 handled off-grid
    double atom_w;    // prior mass of that atom
  };
  std::vector<Probe> probes = {
      {PriorFamily::gaussian_mean(0.7), false, 0.0},
      {PriorFamily::bernoulli(0.3), false, 0.0},
      {PriorFamily::spike_slab(0.4, 1.5), true, 0.4},
      {PriorFamily::location_gmm(-0.8, 0.6), false, 0.0},
      {PriorFamily::symmetric_gmm(0.9), false, 0.0},
  };
  Philox rng(914, 0);
  for (const auto& pr : probes) {
    const PriorFamily& f = pr.f;
    CAPTURE(f.family_name());
    for (int trial = 0; trial < 100; ++trial) {
      double t = -3.0 + 6.0 * rng.u01();
      double d = 0.2 + 3.8 * rng.u01();
      TiltedMoments tm = tilt_moments(f, {t, d});
      CHECK(tm.scheme != MomentScheme::Quadrature);

      double z = 0.0, m1 = 0.0, m2 = 0.0;
      auto accumulate = [&](double b, double log_w) {
        double v = std::exp(t * b - 0.5 * d * b * b + log_w);
        z += v;
        m1 += v * b;
        m2 += v * b * b;
      };
      if (f.family == Family::Bernoulli) {
        accumulate(0.0, log_prior_lik(f, 0.0));
        accumulate(1.0, log_prior_lik(f, 1.0));
      } else {
        const int n_grid = 1 << 14;
        const double lo = -14.0, hi = 14.0;
        const double step = (hi - lo) / n_grid;
        for (int i = 0; i < n_grid; ++i) {
          double b = lo + (i + 0.5) * step;  // midpoint keeps b = 0 off-grid
          accumulate(b, log_prior_lik(f, b) + std::log(step));
        }
        if (pr.has_atom0) z += pr.atom_w;  // e^{t*0 - d*0} = 1, b = 0
      }
      double mean = m1 / z;
      double var = m2 / z - mean * mean;
      CHECK(tm.log_normalizer == doctest::Approx(std::log(z)).epsilon(1e-8));
      CHECK(tm.mean == doctest::Approx(mean).epsilon(1e-8));
      CHECK(tm.variance == doctest::Approx(var).epsilon(1e-8));
    }
  }
}

// Tilting a spike-and-slab prior reweights the atom to
// pi / (pi + (1 - pi) Z_slab) with Z_slab = exp(t^2 tau^2 / (2 (1 + d tau^2)))
// / sqrt(1 + d tau^2), and shrinks the slab to mean t tau^2 / (1 + d tau^2),
// variance tau^2 / (1 + d tau^2).
TEST_CASE("spike-and-slab tilts reweight the atom by the slab normalizer") {
  Philox rng(915, 0);
  for (int trial = 0; trial < 50; ++trial) {
    double pi = 0.05 + 0.9 * rng.u01();   // atom (spike) weight
    double tau = 0.3 + 2.7 * rng.u01();   // slab standard deviation
    double t = -3.0 + 6.0 * rng.u01();
    double d = 0.1 + 3.9 * rng.u01();
    PriorFamily f = PriorFamily::spike_slab(pi, tau);

    double t2 = tau * tau;
    double s = 1.0 + d * t2;
    double z_slab = std::exp(0.5 * t * t * t2 / s) / std::sqrt(s);
    double atom_w = pi / (pi + (1.0 - pi) * z_slab);

    TiltMixture mix = tilt_decompose(f, {t, d});
    REQUIRE(mix.n_atoms == 1);
    REQUIRE(mix.n_gauss == 1);
    CHECK(mix.atom[0].b == 0.0);
    CHECK(mix.atom[0].w == doctest::Approx(atom_w).epsilon(1e-12));
    CHECK(mix.gauss[0].w == doctest::Approx(1.0 - atom_w).epsilon(1e-12));
    CHECK(mix.gauss[0].mean == doctest::Approx(t * t2 / s).epsilon(1e-12));
    CHECK(mix.gauss[0].var == doctest::Approx(t2 / s).epsilon(1e-12));
    CHECK(mix.log_normalizer ==
          doctest::Approx(std::log(pi + (1.0 - pi) * z_slab)).epsilon(1e-12));
  }
}

// Strict Loewner order I(theta) > V(theta): the between-group variance of
// the conditional score is always dominated, with positive margin, at any
// interior hyperparameter and any noise level.
TEST_CASE("information dominates the conditional score variance in Loewner order") {
  Philox rng(916, 0);
  auto check_family = [&](const PriorFamily& f, const AsymptoticOptions& opts) {
    CAPTURE(f.family_name());
    Mat I = fisher_prior(f);
    for (double d0 : {0.5, 1.0, 2.0}) {
      Mat V = v_matrix(f, d0, opts);
      Eigen::SelfAdjointEigenSolver<Mat> es_v(V);
      CHECK(es_v.eigenvalues().minCoeff() >= -1e-10);
      Eigen::SelfAdjointEigenSolver<Mat> es(I - V);
      CHECK(es.eigenvalues().minCoeff() > 0.0);
    }
  };
  const AsymptoticOptions quad_opts;
  // The heavy-tailed family integrates by Monte Carlo; its Loewner margin
  // (about 0.27) dwarfs the sampling error at this budget.
  AsymptoticOptions mc_opts;
  mc_opts.mc_samples = 2000;
  // Random interior hyperparameters, fresh per trial.
  for (int trial = 0; trial < 20; ++trial)
    check_family(PriorFamily::gaussian_mean(-2.0 + 4.0 * rng.u01()), quad_opts);
  for (int trial = 0; trial < 20; ++trial)
    check_family(PriorFamily::bernoulli(0.05 + 0.9 * rng.u01()), quad_opts);
  for (int trial = 0; trial < 20; ++trial)
    check_family(
        PriorFamily::spike_slab(0.05 + 0.9 * rng.u01(), 0.3 + 2.7 * rng.u01()),
        quad_opts);
  for (int trial = 0; trial < 20; ++trial) {
    double a = -1.8 + 1.8 * rng.u01();
    check_family(PriorFamily::location_gmm(a, a + 0.2 + 1.6 * rng.u01()),
                 quad_opts);
  }
  for (int trial = 0; trial < 20; ++trial)
    check_family(PriorFamily::symmetric_gmm(0.1 + 2.4 * rng.u01()), quad_opts);
  for (int trial = 0; trial < 20; ++trial) {
    mc_opts.mc_seed = 1000 + trial;
    check_family(PriorFamily::cauchy_location(-2.0 + 4.0 * rng.u01()), mc_opts);
  }
}

// Conditional variance decomposition: with W = d0 B + sqrt(d0) Z, the prior
// score splits as I = Var[E(score | W)] + E[Var(score | W)], and the first
// term is V. Assembled here from scratch: the W marginal is a known Gaussian
// mixture, the inner conditional moments come from the tilt engine at
// (t, d) = (W, d0).
TEST_CASE("conditional score variance and its complement add up to the information") {
  struct Comp {
    double w, mean, var;
  };
  struct Setup {
    PriorFamily f;
    std::vector<Comp> w_marginal;  // at d0 = 1
  };
  const double d0 = 1.0;
  // W components: atom b maps to N(d0 b, d0); a slab or mixture component
  // N(m, v) maps to N(d0 m, d0^2 v + d0). spike_slab(0.4, 1.5) has atom
  // weight 0.4 and slab variance 1.5^2 = 2.25.
  std::vector<Setup> setups = {
      {PriorFamily::bernoulli(0.3), {{0.7, 0.0, 1.0}, {0.3, 1.0, 1.0}}},
      {PriorFamily::spike_slab(0.4, 1.5), {{0.4, 0.0, 1.0}, {0.6, 0.0, 3.25}}},
      {PriorFamily::symmetric_gmm(0.9), {{0.5, -0.9, 2.0}, {0.5, 0.9, 2.0}}},
  };
  for (const auto& st : setups) {
    const PriorFamily& f = st.f;
    CAPTURE(f.family_name());
    const int k = f.k();
    const auto& rule = gauss_hermite(200);

    Vec eh = Vec::Zero(k);
    Mat ehh = Mat::Zero(k, k);
    Mat e_cond_var = Mat::Zero(k, k);
    for (const auto& c : st.w_marginal) {
      // Physicists' rule: node m + sqrt(2 v) x, weight w / sqrt(pi).
      double scale = std::sqrt(2.0 * c.var);
      for (int i = 0; i < static_cast<int>(rule.x.size()); ++i) {
        double w = c.mean + scale * rule.x[i];
        double wt = c.w * rule.w[i] / std::sqrt(std::numbers::pi);
        Vec h = tilt_score_mean(f, {w, d0});
        auto pack = [&](double b, Vec& out) {
          Vec g = grad_loglik(f, b);
          Eigen::Map<Mat>(out.data(), k, k) = g * g.transpose();
        };
        Vec gg = tilt_expect(f, {w, d0}, pack, k * k);
        Mat second = Eigen::Map<Mat>(gg.data(), k, k);
        eh += wt * h;
        ehh += wt * h * h.transpose();
        e_cond_var += wt * (second - h * h.transpose());
      }
    }
    // Stationarity: the conditional score has mean zero marginally.
    CHECK(eh.cwiseAbs().maxCoeff() <= 1e-7);

    Mat t1 = ehh - eh * eh.transpose();   // Var[E(score | W)]
    Mat I = fisher_prior(f);
    CHECK((t1 + e_cond_var - I).norm() <= 1e-6);

    AsymptoticBundle ab = compute_bundle(f, d0);
    CHECK((t1 - ab.V).norm() <= 1e-6);
    CHECK((ab.I - I).norm() <= 1e-10);
  }
}

// The two outer integration schemes agree: prior-mixture quadrature vs plain
// Monte Carlo over (B, Z) with 10^6 draws, within four standard errors.
TEST_CASE("quadrature and Monte Carlo asymptotic constants agree within 4 SE") {
  PriorFamily f = PriorFamily::bernoulli(0.3);
  const double d0 = 1.0;
  AsymptoticBundle quad = compute_bundle(f, d0);
  AsymptoticOptions mc_opts;
  mc_opts.outer = OuterScheme::MonteCarlo;
  mc_opts.mc_samples = 1000000;
  mc_opts.mc_seed = 3;
  AsymptoticBundle mc = compute_bundle(f, d0, mc_opts);

  REQUIRE(mc.error_estimate > 0.0);
  double band = 4.0 * mc.error_estimate + 1e-6;
  CHECK(std::abs(quad.V(0, 0) - mc.V(0, 0)) <= band);
  CHECK(std::abs(quad.J(0) - mc.J(0)) <= band);
  CHECK(std::abs(quad.upsilon - mc.upsilon) <= band);
  CHECK(std::abs(quad.kappa(0) - mc.kappa(0)) <= band);

  // And the quadrature side reproduces the frozen reference values.
  CHECK(std::abs(quad.V(0, 0) - expected::kBerV03) <= 1e-7);
  CHECK(std::abs(quad.J(0) - expected::kBerJ03) <= 1e-7);
  CHECK(std::abs(quad.upsilon - expected::kBerUps03) <= 1e-7);
  CHECK(std::abs(quad.kappa(0) - expected::kBerKappa03) <= 2e-5);
}

// h(t) is the conditional score mean E[grad log f (B) | W = t] and hpp its
// second t-derivative; both must match the tilt engine pointwise and a
// central second difference over a wide t grid, for every family.
TEST_CASE("reported curvature of the conditional score mean matches finite differences") {
  const double d0 = 1.0;
  for (const auto& f : all_families()) {
    CAPTURE(f.family_name());
    const int k = f.k();
    for (int i = 0; i <= 20; ++i) {
      double t = -5.0 + 0.5 * i;
      auto [h, hpp] = h_and_derivs(f, t, d0);
      auto h_at = [&](double tt) { return tilt_score_mean(f, {tt, d0}); };
      Vec h0 = h_at(t);

      const double s = 1e-3;
      Vec fd2 = (h_at(t + s) - 2.0 * h0 + h_at(t - s)) / (s * s);
      for (int a = 0; a < k; ++a) {
        CAPTURE(t);
        CAPTURE(a);
        // The two entry points share only the refinement tolerance, not the
        // node count, so agreement is at the engine's 1e-7 contract.
        CHECK(h(a) == doctest::Approx(h0(a)).epsilon(1e-7));
        CHECK(std::abs(hpp(a) - fd2(a)) <=
              1e-4 * std::max(1.0, std::abs(hpp(a))));
      }
    }
  }
}

// J = E_W[d/dtheta psi'(W, d0; theta)]: finite-difference the tilted mean in
// theta under an independently assembled W marginal and compare. Exact
// two-atom outer for the coin family; Gauss-Hermite components for the
// two-peak location mixture.
TEST_CASE("theta sensitivity J matches finite differences of the tilted mean") {
  struct Comp {
    double w, mean, var;
  };
  // Richardson step 1e-2: the adaptive moment engine only promises 1e-7
  // relative accuracy, so a tiny theta step would amplify that to the FD.
  auto fd_j = [](const PriorFamily& f, const std::vector<Comp>& comps, double d0) {
    const int k = f.k();
    const auto& rule = gauss_hermite(200);
    const double h = 1e-2;
    Vec j = Vec::Zero(k);
    for (const auto& c : comps) {
      double scale = std::sqrt(2.0 * c.var);
      for (int i = 0; i < static_cast<int>(rule.x.size()); ++i) {
        double w = c.mean + scale * rule.x[i];
        double wt = c.w * rule.w[i] / std::sqrt(std::numbers::pi);
        for (int a = 0; a < k; ++a) {
          auto mean_at = [&](double step) {
            Vec th = f.theta;
            th(a) += step;
            return tilt_moments(f.with_theta(th), {w, d0}).mean;
          };
          auto fd = [&](double step) {
            return (mean_at(step) - mean_at(-step)) / (2 * step);
          };
          j(a) += wt * (4.0 * fd(h) - fd(2 * h)) / 3.0;
        }
      }
    }
    return j;
  };

  {
    PriorFamily f = PriorFamily::bernoulli(0.3);
    const double d0 = 2.0;
    std::vector<Comp> comps = {{0.7, 0.0, d0}, {0.3, d0, d0}};
    Vec j = fd_j(f, comps, d0);
    Vec j_lib = jacobian_J(f, d0);
    CHECK((j - j_lib).cwiseAbs().maxCoeff() <= 1e-5);
  }
  {
    // Mixture components N(theta1, 1) and N(theta2, 1/4), so the W marginal
    // at d0 = 1 mixes N(theta1, 2) and N(theta2, 5/4).
    PriorFamily f = PriorFamily::location_gmm(-0.8, 0.6);
    const double d0 = 1.0;
    std::vector<Comp> comps = {{0.5, -0.8, 2.0}, {0.5, 0.6, 1.25}};
    Vec j = fd_j(f, comps, d0);
    Vec j_lib = jacobian_J(f, d0);
    CHECK((j - j_lib).cwiseAbs().maxCoeff() <= 1e-4);
  }
}

// The analytic gradient of the sample objective matches central finite
// differences on a real instance, for one- and two-parameter families.
TEST_CASE("objective gradient matches finite differences on simulated data") {
  struct Case {
    PriorFamily f;
    Vec at;
  };
  std::vector<Case> cases;
  cases.push_back({PriorFamily::bernoulli(0.3), Vec::Constant(1, 0.42)});
  cases.push_back({PriorFamily::location_gmm(-0.8, 0.6), (Vec(2) << -0.5, 0.9).finished()});
  for (auto& c : cases) {
    CAPTURE(c.f.family_name());
    Philox rng(917, 0);
    auto inst = gen_instance(c.f, 300, 30, 1.0, DesignDist::Gaussian, rng);
    auto td = transform(inst);
    Vec g = veb_objective_grad(td, c.f, c.at);
    const double h = 1e-6;
    for (int a = 0; a < c.at.size(); ++a) {
      Vec tp = c.at, tm = c.at;
      tp(a) += h;
      tm(a) -= h;
      double fd = (veb_objective(td, c.f, tp) - veb_objective(td, c.f, tm)) / (2 * h);
      CHECK(g(a) == doctest::Approx(fd).epsilon(1e-6));
    }
  }
}
