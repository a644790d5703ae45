#include "veb/priors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>

#include "veb/quadrature.hpp"

namespace veb {

namespace {

constexpr double kPi = 3.141592653589793238462643383279503;
constexpr double kLog2Pi = 1.837877066409345483560659472811;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_normal_pdf(double b, double mean, double var) {
  double z = b - mean;
  return -0.5 * (kLog2Pi + std::log(var)) - z * z / (2.0 * var);
}

double log_sum_exp2(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

// log of integral e^{t b - d b^2/2} N(mean, var)(db): Gaussian conjugacy.
double gauss_tilt_logz(double mean, double var, double t, double d) {
  double s = 1.0 + d * var;
  double tv = t * var + mean;
  return -0.5 * std::log(s) + tv * tv / (2.0 * var * s) -
         mean * mean / (2.0 * var);
}

double gauss_tilt_mean(double mean, double var, double t, double d) {
  return (t * var + mean) / (1.0 + d * var);
}

double gauss_tilt_var(double var, double d) { return var / (1.0 + d * var); }

// Gaussian mixture components (mean, var, log weight) of the untilted prior.
struct PriorGaussComp {
  double log_w, mean, var;
};

int prior_gauss_comps(const PriorFamily& f, PriorGaussComp out[2]) {
  switch (f.family) {
    case Family::GaussianMean:
      out[0] = {0.0, f.theta(0), 1.0};
      return 1;
    case Family::SpikeSlab: {
      double pi = f.theta(0), tau = f.theta(1);
      out[0] = {pi < 1.0 ? std::log(1.0 - pi) : kNegInf, 0.0, tau * tau};
      return 1;
    }
    case Family::LocationGMM:
      out[0] = {std::log(0.5), f.theta(0), 1.0};
      out[1] = {std::log(0.5), f.theta(1), 0.25};
      return 2;
    case Family::SymmetricGMM:
      out[0] = {std::log(0.5), f.theta(0), 1.0};
      out[1] = {std::log(0.5), -f.theta(0), 1.0};
      return 2;
    default:
      return 0;
  }
}

void require_interior_pi(const PriorFamily& f) {
  double pi = f.theta(0);
  if (pi <= 0.0 || pi >= 1.0)
    throw boundary_error(f.family_name() +
                         ": score undefined at pi on the boundary {0, 1}");
}

// Cauchy tilt support: the Gaussian envelope e^{t b - d b^2/2} concentrates
// on t/d +- O(1/sqrt(d)); 7.5 envelope standard deviations leave less than
// 1e-12 of the envelope mass outside.
void cauchy_domain(double t, double d, double* lo, double* hi) {
  double c = t / d;
  double r = 7.5 / std::sqrt(d);
  *lo = c - r;
  *hi = c + r;
}

// The tilted integrand has up to two sharp features: the Gaussian envelope
// peak near t/d and the prior pole near theta. Endpoint-clustered nodes
// resolve the envelope; the pole gets its own panel so mid-interval spacing
// never straddles it.
TiltMixture cauchy_tilt_grid(const PriorFamily& f, const TiltParams& tp,
                             int n_nodes, bool refine_check) {
  if (!(tp.d > 0.0))
    throw numerical_error(
        "CauchyLocation tilt requires d > 0 for a finite normalizer");
  double theta = f.theta(0);
  double lo, hi;
  cauchy_domain(tp.t, tp.d, &lo, &hi);
  double cuts[4] = {lo, std::clamp(theta - 6.0, lo, hi),
                    std::clamp(theta + 6.0, lo, hi), hi};

  auto build = [&](int n_pole, TiltMixture* mix) -> double {
    std::vector<double> xs, logf;
    for (int seg = 0; seg < 3; ++seg) {
      if (!(cuts[seg + 1] > cuts[seg])) continue;
      bool has_pole = cuts[seg] <= theta && theta <= cuts[seg + 1];
      TanhSinhRule rule =
          tanh_sinh(cuts[seg], cuts[seg + 1], has_pole ? n_pole : n_pole / 2);
      for (size_t j = 0; j < rule.x.size(); ++j) {
        double b = rule.x[j];
        double u = b - theta;
        xs.push_back(b);
        logf.push_back(tp.t * b - 0.5 * tp.d * b * b - std::log1p(u * u) -
                       std::log(kPi) + std::log(rule.w[j]));
      }
    }
    double peak = kNegInf;
    for (double v : logf) peak = std::max(peak, v);
    double sum = 0.0;
    std::vector<double> mass(logf.size());
    for (size_t j = 0; j < logf.size(); ++j) {
      mass[j] = std::exp(logf[j] - peak);
      sum += mass[j];
    }
    if (!(sum > 0.0) || !std::isfinite(sum))
      throw numerical_error("CauchyLocation tilt normalizer is degenerate");
    if (mix) {
      mix->grid_b = std::move(xs);
      mix->grid_w = std::move(mass);
      for (double& m : mix->grid_w) m /= sum;
    }
    return peak + std::log(sum);
  };

  TiltMixture mix;
  double logz = build(n_nodes, &mix);
  if (refine_check) {
    double logz_half = build(n_nodes / 2, nullptr);
    if (std::abs(logz - logz_half) > 1e-7 * std::max(1.0, std::abs(logz)))
      throw numerical_error(
          "CauchyLocation tilt quadrature did not converge under refinement");
  }
  mix.log_normalizer = logz;
  return mix;
}

}  // namespace

// ---------------------------------------------------------------------------
// PriorFamily
// ---------------------------------------------------------------------------

PriorFamily PriorFamily::gaussian_mean(double theta) {
  PriorFamily f{Family::GaussianMean, Vec::Constant(1, theta), {{-10.0, 10.0}}};
  f.validate();
  return f;
}

PriorFamily PriorFamily::bernoulli(double pi) {
  PriorFamily f{Family::Bernoulli, Vec::Constant(1, pi), {{0.0, 1.0}}};
  f.validate();
  return f;
}

PriorFamily PriorFamily::spike_slab(double pi, double tau) {
  PriorFamily f{Family::SpikeSlab, Vec(2), {{0.0, 1.0}, {0.2, 5.0}}};
  f.theta << pi, tau;
  f.validate();
  return f;
}

PriorFamily PriorFamily::location_gmm(double theta1, double theta2) {
  PriorFamily f{Family::LocationGMM, Vec(2), {{-2.0, 2.0}, {-2.0, 2.0}}};
  f.theta << theta1, theta2;
  f.validate();
  return f;
}

PriorFamily PriorFamily::cauchy_location(double theta) {
  PriorFamily f{Family::CauchyLocation, Vec::Constant(1, theta),
                {{-10.0, 10.0}}};
  f.validate();
  return f;
}

PriorFamily PriorFamily::symmetric_gmm(double theta) {
  PriorFamily f{Family::SymmetricGMM, Vec::Constant(1, theta), {{0.0, 3.0}}};
  f.validate();
  return f;
}

PriorFamily PriorFamily::make(Family fam, const Vec& theta) {
  int want =
      (fam == Family::SpikeSlab || fam == Family::LocationGMM) ? 2 : 1;
  if (static_cast<int>(theta.size()) != want)
    throw config_error("theta dimension mismatch for family");
  switch (fam) {
    case Family::GaussianMean:
      return gaussian_mean(theta(0));
    case Family::Bernoulli:
      return bernoulli(theta(0));
    case Family::SpikeSlab:
      return spike_slab(theta(0), theta(1));
    case Family::LocationGMM:
      return location_gmm(theta(0), theta(1));
    case Family::CauchyLocation:
      return cauchy_location(theta(0));
    case Family::SymmetricGMM:
      return symmetric_gmm(theta(0));
  }
  throw config_error("unknown family");
}

SupportKind PriorFamily::support() const {
  switch (family) {
    case Family::Bernoulli:
      return SupportKind::FiniteAtoms;
    case Family::SpikeSlab:
      return SupportKind::AtomPlusLebesgue;
    default:
      return SupportKind::Lebesgue;
  }
}

std::vector<double> PriorFamily::atoms() const {
  if (family != Family::Bernoulli)
    throw contract_error("atoms(): support is not a finite atom set");
  return {0.0, 1.0};
}

PriorFamily PriorFamily::with_theta(const Vec& t) const {
  PriorFamily f = *this;
  f.theta = t;
  f.validate();
  return f;
}

std::string PriorFamily::family_name() const {
  switch (family) {
    case Family::GaussianMean:
      return "GaussianMean";
    case Family::Bernoulli:
      return "Bernoulli";
    case Family::SpikeSlab:
      return "SpikeSlab";
    case Family::LocationGMM:
      return "LocationGMM";
    case Family::CauchyLocation:
      return "CauchyLocation";
    case Family::SymmetricGMM:
      return "SymmetricGMM";
  }
  return "?";
}

Family family_from_name(const std::string& name) {
  // Config and CLI spellings are case- and underscore-insensitive.
  std::string key;
  for (char c : name)
    if (c != '_') key += static_cast<char>(std::tolower(c));
  if (key == "gaussianmean") return Family::GaussianMean;
  if (key == "bernoulli") return Family::Bernoulli;
  if (key == "spikeslab") return Family::SpikeSlab;
  if (key == "locationgmm") return Family::LocationGMM;
  if (key == "cauchylocation") return Family::CauchyLocation;
  if (key == "symmetricgmm") return Family::SymmetricGMM;
  throw config_error("unknown prior family name: " + name);
}

void PriorFamily::validate() const {
  int expect_k = (family == Family::SpikeSlab || family == Family::LocationGMM)
                     ? 2
                     : 1;
  if (k() != expect_k)
    throw config_error(family_name() + ": theta must have dimension " +
                       std::to_string(expect_k));
  if (static_cast<int>(theta_box.size()) != expect_k)
    throw config_error(family_name() + ": box dimension mismatch");
  for (int a = 0; a < k(); ++a) {
    if (!(theta_box[a].lo <= theta(a) && theta(a) <= theta_box[a].hi))
      throw config_error(family_name() + ": theta outside its box");
  }
  if (family == Family::LocationGMM && theta(0) > theta(1))
    throw config_error("LocationGMM: requires theta1 <= theta2");
}

// ---------------------------------------------------------------------------
// Log-likelihood and its theta-derivatives
// ---------------------------------------------------------------------------

double log_prior_lik(const PriorFamily& f, double b) {
  switch (f.family) {
    case Family::GaussianMean:
      return log_normal_pdf(b, f.theta(0), 1.0);
    case Family::Bernoulli: {
      if (b != 0.0 && b != 1.0)
        throw domain_error("Bernoulli: b outside the support {0, 1}");
      double pi = f.theta(0);
      return b == 1.0 ? (pi > 0 ? std::log(pi) : kNegInf)
                      : (pi < 1 ? std::log(1.0 - pi) : kNegInf);
    }
    case Family::SpikeSlab: {
      double pi = f.theta(0), tau = f.theta(1);
      double slab = std::log1p(-pi) + log_normal_pdf(b, 0.0, tau * tau);
      if (pi >= 1.0) slab = kNegInf;
      // At the atom the evaluator reports the total local mass
      // pi + (1 - pi) slab(0); the component scores used elsewhere treat the
      // atom weight pi alone (see grad_loglik).
      if (b == 0.0)
        return log_sum_exp2(pi > 0 ? std::log(pi) : kNegInf, slab);
      return slab;
    }
    case Family::LocationGMM:
      return log_sum_exp2(
          std::log(0.5) + log_normal_pdf(b, f.theta(0), 1.0),
          std::log(0.5) + log_normal_pdf(b, f.theta(1), 0.25));
    case Family::CauchyLocation: {
      double u = b - f.theta(0);
      return -std::log(kPi) - std::log1p(u * u);
    }
    case Family::SymmetricGMM:
      return log_sum_exp2(
          std::log(0.5) + log_normal_pdf(b, f.theta(0), 1.0),
          std::log(0.5) + log_normal_pdf(b, -f.theta(0), 1.0));
  }
  throw config_error("unknown family");
}

Vec grad_loglik(const PriorFamily& f, double b) {
  Vec g(f.k());
  switch (f.family) {
    case Family::GaussianMean:
      g(0) = b - f.theta(0);
      return g;
    case Family::Bernoulli: {
      if (b != 0.0 && b != 1.0)
        throw domain_error("Bernoulli: b outside the support {0, 1}");
      require_interior_pi(f);
      double pi = f.theta(0);
      g(0) = b == 1.0 ? 1.0 / pi : -1.0 / (1.0 - pi);
      return g;
    }
    case Family::SpikeSlab: {
      require_interior_pi(f);
      double pi = f.theta(0), tau = f.theta(1);
      if (b == 0.0) {
        g << 1.0 / pi, 0.0;  // atom-component score
      } else {
        g << -1.0 / (1.0 - pi), (b * b - tau * tau) / (tau * tau * tau);
      }
      return g;
    }
    case Family::LocationGMM: {
      double l1 = std::log(0.5) + log_normal_pdf(b, f.theta(0), 1.0);
      double l2 = std::log(0.5) + log_normal_pdf(b, f.theta(1), 0.25);
      double r1 = 1.0 / (1.0 + std::exp(l2 - l1));
      double r2 = 1.0 - r1;
      g << r1 * (b - f.theta(0)), r2 * (b - f.theta(1)) / 0.25;
      return g;
    }
    case Family::CauchyLocation: {
      double u = b - f.theta(0);
      g(0) = 2.0 * u / (1.0 + u * u);
      return g;
    }
    case Family::SymmetricGMM: {
      double th = f.theta(0);
      double l1 = log_normal_pdf(b, th, 1.0);
      double l2 = log_normal_pdf(b, -th, 1.0);
      double r1 = 1.0 / (1.0 + std::exp(l2 - l1));
      g(0) = r1 * (b - th) - (1.0 - r1) * (b + th);
      return g;
    }
  }
  throw config_error("unknown family");
}

Mat hess_loglik(const PriorFamily& f, double b) {
  Mat h = Mat::Zero(f.k(), f.k());
  switch (f.family) {
    case Family::GaussianMean:
      h(0, 0) = -1.0;
      return h;
    case Family::Bernoulli: {
      if (b != 0.0 && b != 1.0)
        throw domain_error("Bernoulli: b outside the support {0, 1}");
      require_interior_pi(f);
      double pi = f.theta(0);
      h(0, 0) = b == 1.0 ? -1.0 / (pi * pi) : -1.0 / ((1 - pi) * (1 - pi));
      return h;
    }
    case Family::SpikeSlab: {
      require_interior_pi(f);
      double pi = f.theta(0), tau = f.theta(1);
      if (b == 0.0) {
        h(0, 0) = -1.0 / (pi * pi);
      } else {
        h(0, 0) = -1.0 / ((1 - pi) * (1 - pi));
        double t2 = tau * tau;
        h(1, 1) = -3.0 * b * b / (t2 * t2) + 1.0 / t2;
      }
      return h;
    }
    case Family::LocationGMM: {
      double l1 = std::log(0.5) + log_normal_pdf(b, f.theta(0), 1.0);
      double l2 = std::log(0.5) + log_normal_pdf(b, f.theta(1), 0.25);
      double r1 = 1.0 / (1.0 + std::exp(l2 - l1));
      double r2 = 1.0 - r1;
      double s1 = b - f.theta(0);
      double s2 = (b - f.theta(1)) / 0.25;
      h(0, 0) = r1 * (1.0 - r1) * s1 * s1 - r1;
      h(1, 1) = r2 * (1.0 - r2) * s2 * s2 - r2 / 0.25;
      h(0, 1) = h(1, 0) = -r1 * r2 * s1 * s2;
      return h;
    }
    case Family::CauchyLocation: {
      double u = b - f.theta(0);
      double den = 1.0 + u * u;
      h(0, 0) = (2.0 * u * u - 2.0) / (den * den);
      return h;
    }
    case Family::SymmetricGMM: {
      double th = f.theta(0);
      double l1 = log_normal_pdf(b, th, 1.0);
      double l2 = log_normal_pdf(b, -th, 1.0);
      double r1 = 1.0 / (1.0 + std::exp(l2 - l1));
      h(0, 0) = -1.0 + 4.0 * r1 * (1.0 - r1) * b * b;
      return h;
    }
  }
  throw config_error("unknown family");
}

// ---------------------------------------------------------------------------
// Tilt engine
// ---------------------------------------------------------------------------

TiltMixture tilt_decompose(const PriorFamily& f, const TiltParams& tp) {
  if (tp.d < 0.0) throw contract_error("tilt requires d >= 0");
  TiltMixture mix;
  switch (f.family) {
    case Family::Bernoulli: {
      double pi = f.theta(0);
      double l0 = pi < 1.0 ? std::log(1.0 - pi) : kNegInf;
      double l1 = pi > 0.0 ? std::log(pi) + tp.t - 0.5 * tp.d : kNegInf;
      double logz = log_sum_exp2(l0, l1);
      mix.n_atoms = 2;
      mix.atom[0] = {std::exp(l0 - logz), 0.0};
      mix.atom[1] = {std::exp(l1 - logz), 1.0};
      mix.log_normalizer = logz;
      return mix;
    }
    case Family::SpikeSlab: {
      double pi = f.theta(0), tau = f.theta(1);
      double la = pi > 0.0 ? std::log(pi) : kNegInf;
      double ls = pi < 1.0 ? std::log(1.0 - pi) +
                                 gauss_tilt_logz(0.0, tau * tau, tp.t, tp.d)
                           : kNegInf;
      double logz = log_sum_exp2(la, ls);
      mix.n_atoms = 1;
      mix.atom[0] = {std::exp(la - logz), 0.0};
      mix.n_gauss = 1;
      mix.gauss[0] = {std::exp(ls - logz),
                      gauss_tilt_mean(0.0, tau * tau, tp.t, tp.d),
                      gauss_tilt_var(tau * tau, tp.d)};
      mix.log_normalizer = logz;
      return mix;
    }
    case Family::CauchyLocation:
      return cauchy_tilt_grid(f, tp, 512, /*refine_check=*/true);
    default: {
      PriorGaussComp comps[2];
      int nc = prior_gauss_comps(f, comps);
      double lw[2], logz = kNegInf;
      for (int j = 0; j < nc; ++j) {
        lw[j] = comps[j].log_w +
                gauss_tilt_logz(comps[j].mean, comps[j].var, tp.t, tp.d);
        logz = log_sum_exp2(logz, lw[j]);
      }
      mix.n_gauss = nc;
      for (int j = 0; j < nc; ++j) {
        mix.gauss[j] = {std::exp(lw[j] - logz),
                        gauss_tilt_mean(comps[j].mean, comps[j].var, tp.t, tp.d),
                        gauss_tilt_var(comps[j].var, tp.d)};
      }
      mix.log_normalizer = logz;
      return mix;
    }
  }
}

double TiltMixture::mean() const {
  if (!grid_b.empty()) {
    double m = 0.0;
    for (size_t j = 0; j < grid_b.size(); ++j) m += grid_w[j] * grid_b[j];
    return m;
  }
  double m = 0.0;
  for (int a = 0; a < n_atoms; ++a) m += atom[a].w * atom[a].b;
  for (int g = 0; g < n_gauss; ++g) m += gauss[g].w * gauss[g].mean;
  return m;
}

double TiltMixture::variance() const {
  double m = mean();
  if (!grid_b.empty()) {
    double m2 = 0.0;
    for (size_t j = 0; j < grid_b.size(); ++j)
      m2 += grid_w[j] * grid_b[j] * grid_b[j];
    return std::max(0.0, m2 - m * m);
  }
  double m2 = 0.0;
  for (int a = 0; a < n_atoms; ++a) m2 += atom[a].w * atom[a].b * atom[a].b;
  for (int g = 0; g < n_gauss; ++g)
    m2 += gauss[g].w * (gauss[g].mean * gauss[g].mean + gauss[g].var);
  return std::max(0.0, m2 - m * m);
}

double tilt_log_normalizer(const PriorFamily& f, const TiltParams& tp) {
  if (f.family == Family::CauchyLocation && tp.d == 0.0 && tp.t == 0.0)
    return 0.0;  // untilted: integral of the prior itself
  return tilt_decompose(f, tp).log_normalizer;
}

TiltedMoments tilt_moments(const PriorFamily& f, const TiltParams& tp) {
  TiltMixture mix = tilt_decompose(f, tp);
  MomentScheme scheme;
  switch (f.family) {
    case Family::Bernoulli:
      scheme = MomentScheme::AtomMixture;
      break;
    case Family::CauchyLocation:
      scheme = MomentScheme::Quadrature;
      break;
    default:
      scheme = MomentScheme::ClosedForm;
      break;
  }
  return {mix.log_normalizer, mix.mean(), mix.variance(), scheme};
}

namespace {

// Shared expectation driver: atoms exactly, Gaussian components by
// Gauss-Hermite on a doubling node ladder (accepted once two successive
// resolutions agree), grid by summation. The ladder matters for integrands
// carrying mixture responsibilities, which switch fast between components
// of unequal variance and need more nodes than smooth moments do.
void mixture_expect(const TiltMixture& mix,
                    const std::function<void(double, Vec&)>& h, int m,
                    Vec* out) {
  Vec acc = Vec::Zero(m), tmp(m);
  double scale = 1.0;
  if (!mix.grid_b.empty()) {
    for (size_t j = 0; j < mix.grid_b.size(); ++j) {
      h(mix.grid_b[j], tmp);
      acc += mix.grid_w[j] * tmp;
      scale = std::max(scale, tmp.cwiseAbs().maxCoeff());
    }
    *out = acc;
    return;
  }
  for (int a = 0; a < mix.n_atoms; ++a) {
    if (mix.atom[a].w == 0.0) continue;
    h(mix.atom[a].b, tmp);
    acc += mix.atom[a].w * tmp;
    scale = std::max(scale, tmp.cwiseAbs().maxCoeff());
  }
  for (int g = 0; g < mix.n_gauss; ++g) {
    const auto& comp = mix.gauss[g];
    if (comp.w == 0.0) continue;
    if (comp.var == 0.0) {
      h(comp.mean, tmp);
      acc += comp.w * tmp;
      continue;
    }
    const double sd = std::sqrt(2.0 * comp.var);
    Vec prev = Vec::Zero(m);
    bool accepted = false;
    for (int nodes = 32; nodes <= 1024; nodes *= 2) {
      const HermiteRule& rule = gauss_hermite(nodes);
      Vec part = Vec::Zero(m);
      for (size_t i = 0; i < rule.x.size(); ++i) {
        h(comp.mean + sd * rule.x[i], tmp);
        part += rule.w[i] * tmp;
        scale = std::max(scale, tmp.cwiseAbs().maxCoeff());
      }
      part *= comp.w / std::sqrt(kPi);
      if (nodes > 32 &&
          (part - prev).cwiseAbs().maxCoeff() <= 1e-7 * scale) {
        acc += part;
        accepted = true;
        break;
      }
      prev = part;
    }
    if (!accepted)
      throw numerical_error(
          "tilted expectation did not converge under node refinement");
  }
  *out = acc;
}

}  // namespace

double tilt_expect(const PriorFamily& f, const TiltParams& tp,
                   const std::function<double(double)>& h) {
  Vec out(1);
  mixture_expect(
      tilt_decompose(f, tp),
      [&](double b, Vec& v) { v(0) = h(b); }, 1, &out);
  return out(0);
}

Vec tilt_expect(const PriorFamily& f, const TiltParams& tp,
                const std::function<void(double, Vec&)>& h, int m) {
  Vec out(m);
  mixture_expect(tilt_decompose(f, tp), h, m, &out);
  return out;
}

Vec tilt_score_mean(const PriorFamily& f, const TiltParams& tp) {
  Vec g(f.k());
  switch (f.family) {
    case Family::GaussianMean: {
      TiltMixture mix = tilt_decompose(f, tp);
      g(0) = mix.gauss[0].mean - f.theta(0);
      return g;
    }
    case Family::Bernoulli: {
      // d/dpi of the log normalizer, written so the pi in {0,1} boundary is
      // the continuous extension (the pointwise score is undefined there).
      double pi = f.theta(0);
      double l0 = pi < 1.0 ? std::log1p(-pi) : kNegInf;
      double l1 = pi > 0.0 ? std::log(pi) + tp.t - 0.5 * tp.d : kNegInf;
      double logz = log_sum_exp2(l0, l1);
      g(0) = std::exp(tp.t - 0.5 * tp.d - logz) - std::exp(-logz);
      return g;
    }
    case Family::SpikeSlab: {
      double pi = f.theta(0), tau = f.theta(1);
      double slab_logz = gauss_tilt_logz(0.0, tau * tau, tp.t, tp.d);
      double la = pi > 0.0 ? std::log(pi) : kNegInf;
      double ls = pi < 1.0 ? std::log1p(-pi) + slab_logz : kNegInf;
      double logz = log_sum_exp2(la, ls);
      double ws = std::exp(ls - logz);
      double m = gauss_tilt_mean(0.0, tau * tau, tp.t, tp.d);
      double v = gauss_tilt_var(tau * tau, tp.d);
      g(0) = std::exp(-logz) - std::exp(slab_logz - logz);
      g(1) = ws * (m * m + v - tau * tau) / (tau * tau * tau);
      return g;
    }
    case Family::LocationGMM: {
      // Responsibility-weighted component scores integrate exactly to the
      // tilted component weight times the tilted component's score mean.
      TiltMixture mix = tilt_decompose(f, tp);
      g(0) = mix.gauss[0].w * (mix.gauss[0].mean - f.theta(0)) / 1.0;
      g(1) = mix.gauss[1].w * (mix.gauss[1].mean - f.theta(1)) / 0.25;
      return g;
    }
    case Family::SymmetricGMM: {
      TiltMixture mix = tilt_decompose(f, tp);
      double th = f.theta(0);
      g(0) = mix.gauss[0].w * (mix.gauss[0].mean - th) -
             mix.gauss[1].w * (mix.gauss[1].mean + th);
      return g;
    }
    case Family::CauchyLocation:
      return tilt_expect(
          f, tp, [&](double b, Vec& v) { v = grad_loglik(f, b); }, 1);
  }
  throw config_error("unknown family");
}

double sample_tilted(const PriorFamily& f, const TiltParams& tp, Philox& rng) {
  TiltMixture mix = tilt_decompose(f, tp);
  if (!mix.grid_b.empty()) {
    // Degenerate grids (all mass on one node) fall back to exact rejection
    // from the Gaussian envelope.
    double peak = *std::max_element(mix.grid_w.begin(), mix.grid_w.end());
    if (peak > 0.999) {
      double theta = f.theta(0);
      for (int attempt = 0; attempt < 10000; ++attempt) {
        double b = tp.t / tp.d + rng.normal() / std::sqrt(tp.d);
        double u = b - theta;
        if (rng.u01() < 1.0 / (1.0 + u * u)) return b;
      }
      throw numerical_error("CauchyLocation tilt rejection sampler stalled");
    }
    double u = rng.u01();
    size_t n = mix.grid_b.size();
    double cum = 0.0;
    for (size_t j = 0; j < n; ++j) {
      double next = cum + mix.grid_w[j];
      if (u <= next || j + 1 == n) {
        // Uniform jitter over the node's cell, bounded by its neighbors.
        double lo = j == 0 ? mix.grid_b[0]
                           : 0.5 * (mix.grid_b[j - 1] + mix.grid_b[j]);
        double hi = j + 1 == n
                        ? mix.grid_b[n - 1]
                        : 0.5 * (mix.grid_b[j] + mix.grid_b[j + 1]);
        double frac = mix.grid_w[j] > 0 ? (u - cum) / mix.grid_w[j] : 0.5;
        return lo + std::clamp(frac, 0.0, 1.0) * (hi - lo);
      }
      cum = next;
    }
    return mix.grid_b.back();
  }
  double u = rng.u01();
  double cum = 0.0;
  for (int a = 0; a < mix.n_atoms; ++a) {
    cum += mix.atom[a].w;
    if (u <= cum) return mix.atom[a].b;
  }
  for (int g = 0; g < mix.n_gauss; ++g) {
    cum += mix.gauss[g].w;
    if (u <= cum || g + 1 == mix.n_gauss)
      return mix.gauss[g].mean + std::sqrt(mix.gauss[g].var) * rng.normal();
  }
  // Numerically cum can fall epsilon short of 1; the last component wins.
  if (mix.n_atoms > 0) return mix.atom[mix.n_atoms - 1].b;
  throw numerical_error("sample_tilted: empty mixture");
}

Vec sample_prior(const PriorFamily& f, int n, Philox& rng) {
  Vec out(n);
  switch (f.family) {
    case Family::GaussianMean:
      for (int i = 0; i < n; ++i) out(i) = f.theta(0) + rng.normal();
      return out;
    case Family::Bernoulli:
      for (int i = 0; i < n; ++i) out(i) = rng.u01() < f.theta(0) ? 1.0 : 0.0;
      return out;
    case Family::SpikeSlab: {
      double pi = f.theta(0), tau = f.theta(1);
      for (int i = 0; i < n; ++i)
        out(i) = rng.u01() < pi ? 0.0 : tau * rng.normal();
      return out;
    }
    case Family::LocationGMM:
      for (int i = 0; i < n; ++i)
        out(i) = rng.u01() < 0.5 ? f.theta(0) + rng.normal()
                                 : f.theta(1) + 0.5 * rng.normal();
      return out;
    case Family::CauchyLocation:
      for (int i = 0; i < n; ++i)
        out(i) = f.theta(0) + std::tan(kPi * (rng.u01() - 0.5));
      return out;
    case Family::SymmetricGMM:
      for (int i = 0; i < n; ++i)
        out(i) = (rng.u01() < 0.5 ? f.theta(0) : -f.theta(0)) + rng.normal();
      return out;
  }
  throw config_error("unknown family");
}

}  // namespace veb
