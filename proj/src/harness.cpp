#include "veb/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "veb/asymptotics.hpp"
#include "veb/meanfield.hpp"
#include "veb/posterior_oracle.hpp"
#include "veb/rng.hpp"

namespace veb {

namespace {

// ---------------------------------------------------------------------------
// Formatting / small utilities
// ---------------------------------------------------------------------------

std::string g17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

std::string theta_cols(const Vec& th) {
  std::string a = th.size() > 0 ? g17(th(0)) : "";
  std::string b = th.size() > 1 ? g17(th(1)) : "";
  return a + "," + b;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(v));
  return buf;
}

std::string utc_now() {
  std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string git_describe() {
  FILE* pipe = popen("git describe --always --dirty 2>/dev/null", "r");
  if (!pipe) return "unknown";
  char buf[128];
  std::string out;
  while (fgets(buf, sizeof(buf), pipe)) out += buf;
  pclose(pipe);
  while (!out.empty() && (out.back() == '\n' || out.back() == '\r'))
    out.pop_back();
  return out.empty() ? "unknown" : out;
}

double median_of(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

void parallel_for(int count, int threads,
                  const std::function<void(int)>& fn) {
  int T = threads > 0 ? threads
                      : static_cast<int>(std::thread::hardware_concurrency());
  if (T < 1) T = 1;
  T = std::min(T, count);
  if (T <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::mutex err_mtx;
  std::exception_ptr err;
  std::vector<std::thread> pool;
  for (int t = 0; t < T; ++t) {
    pool.emplace_back([&] {
      while (true) {
        int i = next.fetch_add(1);
        if (i >= count) break;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mtx);
          if (!err) err = std::current_exception();
          next.store(count);
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

// Score integrals are undefined exactly on the pi boundary; estimates
// clamped to the box edge are evaluated epsilon inside for (V, kappa, J).
Vec nudge_interior(const PriorFamily& f, const Vec& th) {
  Vec x = th;
  if (f.family == Family::Bernoulli || f.family == Family::SpikeSlab)
    x(0) = std::clamp(x(0), 1e-9, 1.0 - 1e-9);
  return x;
}

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

Experiment experiment_from_name(const std::string& s) {
  if (s == "mse") return Experiment::MSE;
  if (s == "coverage") return Experiment::Coverage;
  if (s == "debias") return Experiment::Debias;
  if (s == "asymptotics") return Experiment::Asymptotics;
  if (s == "timing") return Experiment::Timing;
  throw config_error("unknown experiment: " + s);
}

std::string experiment_name(Experiment e) {
  switch (e) {
    case Experiment::MSE:
      return "mse";
    case Experiment::Coverage:
      return "coverage";
    case Experiment::Debias:
      return "debias";
    case Experiment::Asymptotics:
      return "asymptotics";
    case Experiment::Timing:
      return "timing";
  }
  return "?";
}

Method method_from_name(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), ::tolower);
  if (s == "veb") return Method::vEB;
  if (s == "mom") return Method::MoM;
  if (s == "debiased") return Method::Debiased;
  if (s == "exactmml") return Method::ExactMML;
  throw config_error("unknown estimator: " + s);
}

QLabel q_from_name(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), ::tolower);
  if (s == "avg") return QLabel::Avg;
  if (s == "con" || s == "contrast") return QLabel::Contrast;
  throw config_error("unknown projection label: " + s);
}

PriorFamily parse_prior(const nlohmann::json& j) {
  if (!j.contains("family")) throw config_error("prior.family is required");
  Family fam = family_from_name(j.at("family").get<std::string>());
  std::vector<double> th = j.value("theta", std::vector<double>{});
  if (th.empty()) throw config_error("prior.theta is required");
  Vec theta = Eigen::Map<Vec>(th.data(), static_cast<Eigen::Index>(th.size()));
  PriorFamily f = PriorFamily::make(fam, theta);
  if (j.contains("theta_box")) {
    auto box = j.at("theta_box").get<std::vector<std::vector<double>>>();
    if (static_cast<int>(box.size()) != f.k())
      throw config_error("theta_box dimension mismatch");
    for (int a = 0; a < f.k(); ++a) {
      if (box[a].size() != 2) throw config_error("theta_box entries are pairs");
      f.theta_box[a] = {box[a][0], box[a][1]};
    }
    f.validate();
  }
  return f;
}

nlohmann::json prior_to_json(const PriorFamily& f) {
  nlohmann::json j;
  j["family"] = f.family_name();
  j["theta"] = std::vector<double>(f.theta.data(), f.theta.data() + f.k());
  std::vector<std::vector<double>> box;
  for (const Interval& iv : f.theta_box) box.push_back({iv.lo, iv.hi});
  j["theta_box"] = box;
  return j;
}

nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["experiment"] = experiment_name(cfg.experiment);
  j["prior"] = prior_to_json(cfg.prior);
  j["p_grid"] = cfg.p_grid;
  j["n_rule"] = cfg.n_rule == NRule::Square ? "square" : "fixed";
  j["n_fixed"] = cfg.n_fixed;
  j["replicates"] = cfg.replicates;
  j["alpha"] = cfg.alpha;
  std::vector<std::string> qs, ms;
  for (QLabel q : cfg.q_labels) qs.push_back(q_label_name(q));
  for (Method m : cfg.estimators) ms.push_back(method_name(m));
  j["q_labels"] = qs;
  j["estimators"] = ms;
  j["master_seed"] = cfg.master_seed;
  j["sigma2"] = cfg.sigma2;
  j["plugin_sigma2"] = cfg.plugin_sigma2;
  j["design"] = cfg.design == DesignDist::Gaussian ? "gaussian" : "rademacher";
  j["design_mode"] = cfg.design_mode == DesignMode::FixedAcrossReplicates
                         ? "fixed"
                         : "fresh";
  j["threads"] = cfg.threads;
  j["gibbs"] = {{"sweeps", cfg.gibbs.sweeps}, {"burn_in", cfg.gibbs.burn_in}};
  j["histogram_p"] = cfg.histogram_p;
  j["theta_grid"] = {{"lo", cfg.theta_grid.lo},
                     {"hi", cfg.theta_grid.hi},
                     {"step", cfg.theta_grid.step},
                     {"coord", cfg.theta_grid.coord}};
  j["d0"] = cfg.d0;
  return j;
}

}  // namespace

ExperimentConfig parse_config(const nlohmann::json& j) {
  ExperimentConfig cfg;
  try {
    if (j.contains("experiment"))
      cfg.experiment = experiment_from_name(j.at("experiment"));
    if (j.contains("prior")) cfg.prior = parse_prior(j.at("prior"));
    cfg.p_grid = j.value("p_grid", std::vector<int>{});
    if (j.contains("n_rule")) {
      std::string r = j.at("n_rule");
      if (r == "square")
        cfg.n_rule = NRule::Square;
      else if (r == "fixed")
        cfg.n_rule = NRule::Fixed;
      else
        throw config_error("n_rule must be 'square' or 'fixed'");
    }
    cfg.n_fixed = j.value("n_fixed", cfg.n_fixed);
    cfg.replicates = j.value("replicates", cfg.replicates);
    cfg.alpha = j.value("alpha", cfg.alpha);
    if (j.contains("q_labels")) {
      cfg.q_labels.clear();
      for (const auto& q : j.at("q_labels"))
        cfg.q_labels.push_back(q_from_name(q.get<std::string>()));
    }
    if (j.contains("estimators")) {
      cfg.estimators.clear();
      for (const auto& m : j.at("estimators"))
        cfg.estimators.push_back(method_from_name(m.get<std::string>()));
    }
    cfg.master_seed = j.value("master_seed", cfg.master_seed);
    cfg.sigma2 = j.value("sigma2", cfg.sigma2);
    cfg.plugin_sigma2 = j.value("plugin_sigma2", cfg.plugin_sigma2);
    if (j.contains("design")) {
      std::string d = j.at("design");
      if (d == "gaussian")
        cfg.design = DesignDist::Gaussian;
      else if (d == "rademacher")
        cfg.design = DesignDist::Rademacher;
      else
        throw config_error("design must be 'gaussian' or 'rademacher'");
    }
    if (j.contains("design_mode")) {
      std::string d = j.at("design_mode");
      if (d == "fixed")
        cfg.design_mode = DesignMode::FixedAcrossReplicates;
      else if (d == "fresh")
        cfg.design_mode = DesignMode::FreshPerReplicate;
      else
        throw config_error("design_mode must be 'fixed' or 'fresh'");
    }
    cfg.threads = j.value("threads", cfg.threads);
    if (j.contains("gibbs")) {
      cfg.gibbs.sweeps = j.at("gibbs").value("sweeps", cfg.gibbs.sweeps);
      cfg.gibbs.burn_in = j.at("gibbs").value("burn_in", cfg.gibbs.burn_in);
    }
    cfg.histogram_p = j.value("histogram_p", cfg.histogram_p);
    if (j.contains("theta_grid")) {
      const auto& g = j.at("theta_grid");
      cfg.theta_grid.lo = g.value("lo", cfg.theta_grid.lo);
      cfg.theta_grid.hi = g.value("hi", cfg.theta_grid.hi);
      cfg.theta_grid.step = g.value("step", cfg.theta_grid.step);
      cfg.theta_grid.coord = g.value("coord", cfg.theta_grid.coord);
    }
    cfg.d0 = j.value("d0", cfg.d0);
  } catch (const nlohmann::json::exception& e) {
    throw config_error(std::string("config parse: ") + e.what());
  }

  if (cfg.experiment != Experiment::Asymptotics && cfg.p_grid.empty())
    throw config_error("p_grid must be nonempty");
  if (!std::is_sorted(cfg.p_grid.begin(), cfg.p_grid.end()))
    throw config_error("p_grid must be sorted ascending");
  if (cfg.replicates < 0) throw config_error("replicates must be >= 0");
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0))
    throw config_error("alpha must lie in (0,1)");
  if (!(cfg.sigma2 > 0.0)) throw config_error("sigma2 must be positive");
  if (cfg.q_labels.empty()) cfg.q_labels = {QLabel::Avg};
  if (cfg.estimators.empty()) cfg.estimators = {Method::vEB};
  if (cfg.gibbs.burn_in >= 0 && cfg.gibbs.burn_in >= cfg.gibbs.sweeps)
    throw config_error("gibbs burn_in must be smaller than sweeps");
  return cfg;
}

namespace {

// ---------------------------------------------------------------------------
// Replicate machinery
// ---------------------------------------------------------------------------

int n_for(const ExperimentConfig& cfg, int p) {
  long n = cfg.n_rule == NRule::Square ? static_cast<long>(p) * p
                                       : cfg.n_fixed;
  if (n <= p)
    throw config_error("n must exceed p (p=" + std::to_string(p) +
                       ", n=" + std::to_string(n) + ")");
  return static_cast<int>(n);
}

// Per-p context; for a fixed design the Gram pieces are cached at unit
// variance and rescaled per replicate.
struct PContext {
  int p = 0, n = 0;
  Mat X;
  Vec d1;  // diag(X'X)
  Mat A1;  // -offdiag(X'X)
};

PContext make_context(const ExperimentConfig& cfg, int p) {
  PContext ctx;
  ctx.p = p;
  ctx.n = n_for(cfg, p);
  if (cfg.design_mode == DesignMode::FixedAcrossReplicates) {
    Philox rng(cfg.master_seed,
               stream_id(StreamPurpose::Design, static_cast<std::uint64_t>(p),
                         0));
    ctx.X = gen_design(ctx.n, p, cfg.design, rng);
    Mat G = ctx.X.transpose() * ctx.X;
    ctx.d1 = G.diagonal();
    ctx.A1 = -G;
    ctx.A1.diagonal().setZero();
  }
  return ctx;
}

struct RepData {
  Vec beta_star;
  Vec y;
  Mat X_fresh;  // only under FreshPerReplicate
  double s2_used = 1.0;
  TransformedData td;
  const Mat& X(const PContext& ctx) const {
    return X_fresh.size() ? X_fresh : ctx.X;
  }
};

RepData make_rep(const ExperimentConfig& cfg, const PContext& ctx, int rep) {
  RepData r;
  Philox rng(cfg.master_seed,
             stream_id(StreamPurpose::Replicate,
                       static_cast<std::uint64_t>(ctx.p),
                       static_cast<std::uint64_t>(rep)));
  if (cfg.design_mode == DesignMode::FreshPerReplicate)
    r.X_fresh = gen_design(ctx.n, ctx.p, cfg.design, rng);
  const Mat& X = r.X(ctx);
  r.beta_star = sample_prior(cfg.prior, ctx.p, rng);
  r.y = X * r.beta_star;
  const double sigma = std::sqrt(cfg.sigma2);
  for (int i = 0; i < ctx.n; ++i) r.y(i) += sigma * rng.normal();

  r.s2_used = cfg.sigma2;
  if (cfg.plugin_sigma2) {
    RegressionInstance inst{X, r.y, r.beta_star, cfg.sigma2, ctx.n, ctx.p};
    r.s2_used = estimate_sigma2(inst);
    if (!(r.s2_used > 0.0))
      throw numerical_error("plug-in variance estimate is not positive");
  }
  if (r.X_fresh.size()) {
    r.td = transform(X, r.y, r.s2_used);
  } else {
    r.td.w = X.transpose() * r.y / r.s2_used;
    r.td.d = ctx.d1 / r.s2_used;
    r.td.A = ctx.A1 / r.s2_used;
    r.td.d0 = 1.0 / r.s2_used;
    r.td.n = ctx.n;
    r.td.y_norm2 = r.y.squaredNorm();
  }
  return r;
}

RegressionInstance make_instance(const PContext& ctx, const RepData& r,
                                 double sigma2) {
  return {r.X(ctx), r.y, r.beta_star, sigma2, ctx.n, ctx.p};
}

VkProvider bundle_provider(const PriorFamily& f, double d0) {
  // No prior second moment means no curvature constant; refuse before the
  // bundle's Monte Carlo pass rather than after it.
  if (f.family == Family::CauchyLocation)
    throw numerical_error("debiasing undefined: kappa does not exist");
  return [f, d0](const Vec& th) {
    AsymptoticBundle b = compute_bundle(f.with_theta(nudge_interior(f, th)),
                                        d0);
    if (!b.kappa_defined)
      throw numerical_error("debiasing undefined: kappa does not exist");
    return std::make_pair(b.V, b.kappa);
  };
}

EstimateReport run_estimator(const ExperimentConfig& cfg, const PContext& ctx,
                             const RepData& r, Method m,
                             const EstimateReport* veb_done) {
  switch (m) {
    case Method::vEB:
      return veb_done ? *veb_done : fit_veb(r.td, cfg.prior);
    case Method::MoM:
      return fit_mom(make_instance(ctx, r, cfg.sigma2), cfg.prior);
    case Method::Debiased: {
      EstimateReport base = veb_done ? *veb_done : fit_veb(r.td, cfg.prior);
      EstimateReport deb = debias(base.theta_hat, cfg.prior, ctx.n, ctx.p,
                                  bundle_provider(cfg.prior, r.td.d0));
      deb.iterations = base.iterations;
      deb.converged = base.converged;
      deb.wall_time += base.wall_time;
      return deb;
    }
    case Method::ExactMML:
      return fit_exact_mml(r.td, cfg.prior);
  }
  throw config_error("unknown estimator");
}

void note_metadata(ReplicationReport& rep, const ExperimentConfig& cfg) {
  rep.metadata["experiment"] = experiment_name(cfg.experiment);
  rep.metadata["config"] = config_to_json(cfg);
  rep.metadata["master_seed"] = cfg.master_seed;
}

double parse_field(const std::string& row, int col) {
  size_t pos = 0;
  for (int c = 0; c < col; ++c) {
    pos = row.find(',', pos);
    if (pos == std::string::npos)
      throw contract_error("verification: column out of range");
    ++pos;
  }
  size_t end = row.find(',', pos);
  return std::stod(row.substr(pos, end - pos));
}

// Aggregates must be recomputable from the written rows.
void verify_mean(const std::vector<std::string>& rows, int col,
                 double claimed, const char* what) {
  if (rows.empty()) return;
  double acc = 0.0;
  for (const std::string& row : rows) acc += parse_field(row, col);
  double mean = acc / rows.size();
  if (std::abs(mean - claimed) > 1e-12 * std::max(1.0, std::abs(claimed)))
    throw contract_error(std::string("aggregate verification failed for ") +
                         what);
}

}  // namespace

// ---------------------------------------------------------------------------
// MSE experiment
// ---------------------------------------------------------------------------

ReplicationReport run_mse(const ExperimentConfig& cfg) {
  ReplicationReport out;
  out.detail_header =
      "prior,p,n,method,replicate,theta_hat_1,theta_hat_2,sq_err,converged,"
      "clamped,wall_time";
  out.summary_header =
      "prior,p,n,method,replicates,mse,bias_1,bias_2,var_1,var_2,"
      "mean_wall_time,nonconverged";
  note_metadata(out, cfg);
  const std::string fam = cfg.prior.family_name();
  const int k = cfg.prior.k();

  for (int p : cfg.p_grid) {
    PContext ctx = make_context(cfg, p);
    const int R = cfg.replicates;
    const int M = static_cast<int>(cfg.estimators.size());
    std::vector<EstimateReport> fits(static_cast<size_t>(R) * M);
    parallel_for(R, cfg.threads, [&](int rep) {
      RepData r = make_rep(cfg, ctx, rep);
      const EstimateReport* veb_done = nullptr;
      EstimateReport veb_hold;
      for (int m = 0; m < M; ++m) {
        EstimateReport er =
            run_estimator(cfg, ctx, r, cfg.estimators[m], veb_done);
        if (cfg.estimators[m] == Method::vEB && !veb_done) {
          veb_hold = er;
          veb_done = &veb_hold;
        }
        fits[static_cast<size_t>(rep) * M + m] = er;
      }
    });

    for (int m = 0; m < M; ++m) {
      const std::string mname = method_name(cfg.estimators[m]);
      double mse = 0.0, wall = 0.0;
      Vec bias = Vec::Zero(k), second = Vec::Zero(k);
      int bad = 0;
      std::vector<std::string> rows;
      for (int rep = 0; rep < R; ++rep) {
        const EstimateReport& er = fits[static_cast<size_t>(rep) * M + m];
        double sq = (er.theta_hat - cfg.prior.theta).squaredNorm();
        mse += sq;
        wall += er.wall_time;
        bias += er.theta_hat - cfg.prior.theta;
        second += (er.theta_hat - cfg.prior.theta).cwiseAbs2();
        if (!er.converged) ++bad;
        rows.push_back(fam + "," + std::to_string(p) + "," +
                       std::to_string(ctx.n) + "," + mname + "," +
                       std::to_string(rep) + "," + theta_cols(er.theta_hat) +
                       "," + g17(sq) + "," + (er.converged ? "1" : "0") + "," +
                       (er.clamped ? "1" : "0") + "," + g17(er.wall_time));
      }
      if (R > 0) {
        mse /= R;
        wall /= R;
        bias /= R;
        second /= R;
      }
      Vec var = second - bias.cwiseAbs2();
      verify_mean(rows, 7, mse, "mse");
      out.detail_rows.insert(out.detail_rows.end(), rows.begin(), rows.end());
      out.summary_rows.push_back(
          fam + "," + std::to_string(p) + "," + std::to_string(ctx.n) + "," +
          mname + "," + std::to_string(R) + "," + g17(mse) + "," +
          theta_cols(bias) + "," + theta_cols(var) + "," + g17(wall) + "," +
          std::to_string(bad));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Timing experiment
// ---------------------------------------------------------------------------

ReplicationReport run_timing(const ExperimentConfig& cfg) {
  ReplicationReport out;
  out.detail_header = "prior,p,n,method,replicate,seconds,converged";
  out.summary_header =
      "prior,p,n,method,replicates,median_seconds,mean_seconds";
  note_metadata(out, cfg);
  const std::string fam = cfg.prior.family_name();

  for (int p : cfg.p_grid) {
    PContext ctx = make_context(cfg, p);
    const int R = cfg.replicates;
    const int M = static_cast<int>(cfg.estimators.size());
    std::vector<EstimateReport> fits(static_cast<size_t>(R) * M);
    parallel_for(R, cfg.threads, [&](int rep) {
      RepData r = make_rep(cfg, ctx, rep);
      const EstimateReport* veb_done = nullptr;
      EstimateReport veb_hold;
      for (int m = 0; m < M; ++m) {
        EstimateReport er =
            run_estimator(cfg, ctx, r, cfg.estimators[m], veb_done);
        if (cfg.estimators[m] == Method::vEB && !veb_done) {
          veb_hold = er;
          veb_done = &veb_hold;
        }
        fits[static_cast<size_t>(rep) * M + m] = er;
      }
    });
    for (int m = 0; m < M; ++m) {
      const std::string mname = method_name(cfg.estimators[m]);
      std::vector<double> secs;
      for (int rep = 0; rep < R; ++rep) {
        const EstimateReport& er = fits[static_cast<size_t>(rep) * M + m];
        secs.push_back(er.wall_time);
        out.detail_rows.push_back(fam + "," + std::to_string(p) + "," +
                                  std::to_string(ctx.n) + "," + mname + "," +
                                  std::to_string(rep) + "," +
                                  g17(er.wall_time) + "," +
                                  (er.converged ? "1" : "0"));
      }
      double mean =
          secs.empty()
              ? std::numeric_limits<double>::quiet_NaN()
              : std::accumulate(secs.begin(), secs.end(), 0.0) / secs.size();
      out.summary_rows.push_back(fam + "," + std::to_string(p) + "," +
                                 std::to_string(ctx.n) + "," + mname + "," +
                                 std::to_string(R) + "," +
                                 g17(median_of(secs)) + "," + g17(mean));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Coverage experiment
// ---------------------------------------------------------------------------

namespace {

struct CoverageCell {
  double width = 0.0, cond = 0.0, center = 0.0, center_gap = 0.0;
  int marg = 0;
};

struct CoverageRep {
  bool ok = false;
  std::string error;
  double mean_ess = 0.0;
  bool veb_converged = true;
  std::vector<CoverageCell> cells;  // q-major, kind-minor
};

}  // namespace

ReplicationReport run_coverage(const ExperimentConfig& cfg) {
  ReplicationReport out;
  out.detail_header =
      "prior,p,n,replicate,q_label,kind,width,cond_cover,marg_cover,center,"
      "center_gap,mean_ess";
  out.summary_header =
      "prior,p,n,q_label,kind,replicates_kept,drops,width_mean,"
      "cond_cover_mean,cond_cover_sd,marg_cover_rate,marg_cover_se";
  note_metadata(out, cfg);
  const std::string fam = cfg.prior.family_name();
  const CiKind kinds[] = {CiKind::Oracle, CiKind::EB, CiKind::AdjustedEB};
  nlohmann::json drop_log = nlohmann::json::array();
  int total_nonconverged = 0;

  for (int p : cfg.p_grid) {
    PContext ctx = make_context(cfg, p);
    std::vector<ProjectionSpec> qs;
    for (QLabel label : cfg.q_labels) qs.push_back(make_q(label, p));
    const int R = cfg.replicates;
    std::vector<CoverageRep> reps(R);

    parallel_for(R, cfg.threads, [&](int rep) {
      CoverageRep& rr = reps[rep];
      try {
        RepData r = make_rep(cfg, ctx, rep);
        EstimateReport fit = fit_veb(r.td, cfg.prior);
        rr.veb_converged = fit.converged;
        Vec theta_hat = nudge_interior(cfg.prior, fit.theta_hat);
        MeanFieldSolution mf_hat =
            solve_fixed_point(r.td, cfg.prior, theta_hat);
        MeanFieldSolution mf_oracle =
            solve_fixed_point(r.td, cfg.prior, cfg.prior.theta);
        AsymptoticBundle asy =
            compute_bundle(cfg.prior.with_theta(theta_hat), r.td.d0);
        Vec naive_hat = naive_init(r.td, cfg.prior, theta_hat);
        Vec naive_oracle = naive_init(r.td, cfg.prior, cfg.prior.theta);

        GibbsConfig gc;
        gc.sweeps = cfg.gibbs.sweeps;
        gc.burn_in = cfg.gibbs.burn_in;
        gc.init = GibbsInit::AtTruth;
        gc.seed = cfg.master_seed;
        gc.stream = static_cast<std::uint64_t>(rep);
        PosteriorSummary post =
            gibbs_sample(r.td, cfg.prior, cfg.prior.theta, gc, qs,
                         &r.beta_star);
        rr.mean_ess = post.ess.mean();

        for (const ProjectionSpec& q : qs) {
          const Vec& draws = post.proj_draws.at(q_label_name(q.label));
          double fresh = draws(draws.size() - 1);
          for (CiKind kind : kinds) {
            CredibleInterval ci =
                kind == CiKind::Oracle
                    ? ci_oracle(mf_oracle, q, cfg.alpha)
                    : (kind == CiKind::EB
                           ? ci_eb(mf_hat, q, cfg.alpha)
                           : ci_adjusted(mf_hat, q, cfg.alpha, asy));
            CoverageCell cell;
            cell.width = ci.width();
            cell.cond = coverage_eval(ci, draws);
            cell.marg = ci.contains(fresh) ? 1 : 0;
            cell.center = ci.center;
            const Vec& nv = kind == CiKind::Oracle ? naive_oracle : naive_hat;
            cell.center_gap = std::abs(ci.center - q.q.dot(nv));
            rr.cells.push_back(cell);
          }
        }
        rr.ok = true;
      } catch (const std::exception& e) {
        rr.ok = false;
        rr.error = e.what();
      }
    });

    for (size_t qi = 0; qi < qs.size(); ++qi) {
      for (size_t ki = 0; ki < 3; ++ki) {
        const std::string qname = q_label_name(cfg.q_labels[qi]);
        const std::string kname = ci_kind_name(kinds[ki]);
        std::vector<std::string> rows;
        double wsum = 0.0, csum = 0.0, csq = 0.0;
        int kept = 0, marg_hits = 0;
        for (int rep = 0; rep < R; ++rep) {
          const CoverageRep& rr = reps[rep];
          if (!rr.ok) continue;
          const CoverageCell& cell = rr.cells[qi * 3 + ki];
          ++kept;
          wsum += cell.width;
          csum += cell.cond;
          csq += cell.cond * cell.cond;
          marg_hits += cell.marg;
          rows.push_back(fam + "," + std::to_string(p) + "," +
                         std::to_string(ctx.n) + "," + std::to_string(rep) +
                         "," + qname + "," + kname + "," + g17(cell.width) +
                         "," + g17(cell.cond) + "," +
                         std::to_string(cell.marg) + "," + g17(cell.center) +
                         "," + g17(cell.center_gap) + "," + g17(rr.mean_ess));
        }
        double wmean = kept ? wsum / kept : 0.0;
        double cmean = kept ? csum / kept : 0.0;
        double csd =
            kept > 1 ? std::sqrt(std::max(0.0, (csq - kept * cmean * cmean) /
                                                   (kept - 1)))
                     : 0.0;
        double mrate = kept ? static_cast<double>(marg_hits) / kept : 0.0;
        double mse_rate = kept ? std::sqrt(mrate * (1 - mrate) / kept) : 0.0;
        verify_mean(rows, 6, wmean, "width_mean");
        out.detail_rows.insert(out.detail_rows.end(), rows.begin(),
                               rows.end());
        out.summary_rows.push_back(
            fam + "," + std::to_string(p) + "," + std::to_string(ctx.n) + "," +
            qname + "," + kname + "," + std::to_string(kept) + "," +
            std::to_string(R - kept) + "," + g17(wmean) + "," + g17(cmean) +
            "," + g17(csd) + "," + g17(mrate) + "," + g17(mse_rate));
      }
    }
    for (int rep = 0; rep < R; ++rep) {
      if (!reps[rep].ok)
        drop_log.push_back({{"p", p}, {"replicate", rep},
                            {"error", reps[rep].error}});
      else if (!reps[rep].veb_converged)
        ++total_nonconverged;
    }
  }
  out.metadata["drops"] = drop_log;
  out.metadata["nonconverged"] = total_nonconverged;
  return out;
}

// ---------------------------------------------------------------------------
// Debias experiment
// ---------------------------------------------------------------------------

ReplicationReport run_debias(const ExperimentConfig& cfg) {
  ReplicationReport out;
  out.detail_header =
      "prior,p,n,replicate,theta_hat_1,theta_hat_2,theta_deb_1,theta_deb_2,"
      "converged";
  out.summary_header =
      "prior,p,n,replicates,bias_hat_1,bias_hat_2,bias_deb_1,bias_deb_2,"
      "var_hat_1,var_hat_2,var_deb_1,var_deb_2,mse_hat,mse_deb,nonconverged";
  out.extra_name = "hist";
  out.extra_header = "prior,p,n,series,bin_lo,bin_hi,count";
  note_metadata(out, cfg);
  const std::string fam = cfg.prior.family_name();
  const int k = cfg.prior.k();

  for (int p : cfg.p_grid) {
    PContext ctx = make_context(cfg, p);
    const int R = cfg.replicates;
    std::vector<EstimateReport> hats(R), debs(R);
    parallel_for(R, cfg.threads, [&](int rep) {
      RepData r = make_rep(cfg, ctx, rep);
      hats[rep] = fit_veb(r.td, cfg.prior);
      debs[rep] = debias(hats[rep].theta_hat, cfg.prior, ctx.n, ctx.p,
                         bundle_provider(cfg.prior, r.td.d0));
    });

    Vec bias_h = Vec::Zero(k), bias_d = Vec::Zero(k);
    Vec sec_h = Vec::Zero(k), sec_d = Vec::Zero(k);
    double mse_h = 0.0, mse_d = 0.0;
    int bad = 0;
    for (int rep = 0; rep < R; ++rep) {
      Vec eh = hats[rep].theta_hat - cfg.prior.theta;
      Vec ed = debs[rep].theta_hat - cfg.prior.theta;
      bias_h += eh;
      bias_d += ed;
      sec_h += eh.cwiseAbs2();
      sec_d += ed.cwiseAbs2();
      mse_h += eh.squaredNorm();
      mse_d += ed.squaredNorm();
      if (!hats[rep].converged) ++bad;
      out.detail_rows.push_back(
          fam + "," + std::to_string(p) + "," + std::to_string(ctx.n) + "," +
          std::to_string(rep) + "," + theta_cols(hats[rep].theta_hat) + "," +
          theta_cols(debs[rep].theta_hat) + "," +
          (hats[rep].converged ? "1" : "0"));
    }
    if (R > 0) {
      bias_h /= R;
      bias_d /= R;
      sec_h /= R;
      sec_d /= R;
      mse_h /= R;
      mse_d /= R;
    }
    Vec var_h = sec_h - bias_h.cwiseAbs2();
    Vec var_d = sec_d - bias_d.cwiseAbs2();
    out.summary_rows.push_back(
        fam + "," + std::to_string(p) + "," + std::to_string(ctx.n) + "," +
        std::to_string(R) + "," + theta_cols(bias_h) + "," +
        theta_cols(bias_d) + "," + theta_cols(var_h) + "," +
        theta_cols(var_d) + "," + g17(mse_h) + "," + g17(mse_d) + "," +
        std::to_string(bad));

    if (std::find(cfg.histogram_p.begin(), cfg.histogram_p.end(), p) !=
        cfg.histogram_p.end()) {
      auto emit_hist = [&](const char* series,
                           const std::vector<EstimateReport>& fits) {
        if (fits.empty()) return;
        std::vector<double> v;
        for (const EstimateReport& er : fits) v.push_back(er.theta_hat(0));
        double lo = *std::min_element(v.begin(), v.end());
        double hi = *std::max_element(v.begin(), v.end());
        const int nbins = 40;
        if (hi <= lo) {
          out.extra_rows.push_back(fam + "," + std::to_string(p) + "," +
                                   std::to_string(ctx.n) + "," + series + "," +
                                   g17(lo) + "," + g17(hi) + "," +
                                   std::to_string(v.size()));
          return;
        }
        std::vector<int> count(nbins, 0);
        for (double x : v) {
          int b = static_cast<int>((x - lo) / (hi - lo) * nbins);
          ++count[std::clamp(b, 0, nbins - 1)];
        }
        for (int b = 0; b < nbins; ++b) {
          double blo = lo + (hi - lo) * b / nbins;
          double bhi = lo + (hi - lo) * (b + 1) / nbins;
          out.extra_rows.push_back(fam + "," + std::to_string(p) + "," +
                                   std::to_string(ctx.n) + "," + series + "," +
                                   g17(blo) + "," + g17(bhi) + "," +
                                   std::to_string(count[b]));
        }
      };
      emit_hist("theta_hat", hats);
      emit_hist("theta_debiased", debs);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Asymptotic-quantity grid
// ---------------------------------------------------------------------------

ReplicationReport run_kappa_grid(const ExperimentConfig& cfg) {
  if (cfg.prior.family == Family::CauchyLocation)
    throw config_error(
        "kappa grid undefined for the heavy-tailed family (no second "
        "moment)");
  ReplicationReport out;
  out.detail_header =
      "prior,d0,theta_1,theta_2,kappa_1,kappa_2,upsilon,j_1,j_2,v_11,v_12,"
      "v_22,i_11,i_12,i_22,error_estimate";
  out.summary_header =
      "prior,d0,points,kappa_max_abs,kappa_sign_changes";
  note_metadata(out, cfg);
  const std::string fam = cfg.prior.family_name();
  const ThetaGridSpec& g = cfg.theta_grid;
  if (!(g.step > 0.0) || !(g.hi >= g.lo))
    throw config_error("theta_grid must satisfy lo <= hi, step > 0");
  if (g.coord < 0 || g.coord >= cfg.prior.k())
    throw config_error("theta_grid coordinate out of range");

  double kmax = 0.0;
  int signflips = 0;
  double prev = 0.0;
  bool have_prev = false;
  int points = 0;
  const int npts = static_cast<int>(std::floor((g.hi - g.lo) / g.step + 0.5)) + 1;
  for (int i = 0; i < npts; ++i) {
    double t = g.lo + i * g.step;
    Vec theta = cfg.prior.theta;
    theta(g.coord) = t;
    if (cfg.prior.family == Family::LocationGMM && theta(0) > theta(1))
      continue;  // outside the ordered parameter set
    AsymptoticBundle b = compute_bundle(cfg.prior.with_theta(theta), cfg.d0);
    ++points;
    const int k = cfg.prior.k();
    auto pick = [&](const Mat& m, int r, int c) {
      return r < k && c < k ? g17(m(r, c)) : std::string();
    };
    out.detail_rows.push_back(
        fam + "," + g17(cfg.d0) + "," + theta_cols(theta) + "," +
        theta_cols(b.kappa) + "," + g17(b.upsilon) + "," + theta_cols(b.J) +
        "," + pick(b.V, 0, 0) + "," + pick(b.V, 0, 1) + "," + pick(b.V, 1, 1) +
        "," + pick(b.I, 0, 0) + "," + pick(b.I, 0, 1) + "," +
        pick(b.I, 1, 1) + "," + g17(b.error_estimate));
    double k0 = b.kappa(0);
    kmax = std::max(kmax, std::abs(k0));
    if (have_prev && prev * k0 < 0.0) ++signflips;
    prev = k0;
    have_prev = true;
  }
  out.summary_rows.push_back(fam + "," + g17(cfg.d0) + "," +
                             std::to_string(points) + "," + g17(kmax) + "," +
                             std::to_string(signflips));
  return out;
}

ReplicationReport run_experiment(const ExperimentConfig& cfg) {
  switch (cfg.experiment) {
    case Experiment::MSE:
      return run_mse(cfg);
    case Experiment::Coverage:
      return run_coverage(cfg);
    case Experiment::Debias:
      return run_debias(cfg);
    case Experiment::Asymptotics:
      return run_kappa_grid(cfg);
    case Experiment::Timing:
      return run_timing(cfg);
  }
  throw config_error("unknown experiment");
}

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

void write_report(const ReplicationReport& report, const std::string& out) {
  namespace fs = std::filesystem;
  fs::path detail(out);
  if (detail.has_parent_path()) fs::create_directories(detail.parent_path());
  fs::path stem = detail.parent_path() / detail.stem();

  auto write_csv = [](const fs::path& path, const std::string& header,
                      const std::vector<std::string>& rows) {
    std::ofstream f(path);
    if (!f) throw config_error("cannot write " + path.string());
    f << header << '\n';
    for (const std::string& row : rows) f << row << '\n';
  };
  write_csv(detail, report.detail_header, report.detail_rows);
  write_csv(fs::path(stem.string() + "_summary.csv"), report.summary_header,
            report.summary_rows);
  if (!report.extra_name.empty() && !report.extra_rows.empty())
    write_csv(fs::path(stem.string() + "_" + report.extra_name + ".csv"),
              report.extra_header, report.extra_rows);

  nlohmann::json meta = report.metadata;
  meta["git_describe"] = git_describe();
  meta["timestamp_utc"] = utc_now();
  meta["config_hash"] =
      hex64(fnv1a(meta.contains("config") ? meta["config"].dump() : ""));
  std::ofstream mf(stem.string() + ".meta.json");
  mf << meta.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// CLI
// ---------------------------------------------------------------------------

namespace {

nlohmann::json load_json(const std::string& path) {
  try {
    if (path == "-") return nlohmann::json::parse(std::cin);
    std::ifstream f(path);
    if (!f) throw config_error("cannot open config: " + path);
    return nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw config_error(std::string("config parse: ") + e.what());
  }
}

PriorFamily prior_with_defaults(const std::string& family,
                                const std::vector<double>& theta) {
  Family fam = family_from_name(family);
  if (!theta.empty()) {
    Vec th = Eigen::Map<const Vec>(theta.data(),
                                   static_cast<Eigen::Index>(theta.size()));
    return PriorFamily::make(fam, th);
  }
  switch (fam) {  // box midpoints as neutral defaults
    case Family::GaussianMean:
      return PriorFamily::gaussian_mean(0.0);
    case Family::Bernoulli:
      return PriorFamily::bernoulli(0.5);
    case Family::SpikeSlab:
      return PriorFamily::spike_slab(0.5, 2.6);
    case Family::LocationGMM:
      return PriorFamily::location_gmm(0.0, 0.0);
    case Family::CauchyLocation:
      return PriorFamily::cauchy_location(0.0);
    case Family::SymmetricGMM:
      return PriorFamily::symmetric_gmm(1.5);
  }
  throw config_error("unknown family");
}

ThetaGridSpec parse_grid_spec(const std::string& s) {
  ThetaGridSpec g;
  if (std::sscanf(s.c_str(), "%lf:%lf:%lf", &g.lo, &g.hi, &g.step) != 3)
    throw config_error("theta grid must be lo:hi:step");
  return g;
}

nlohmann::json report_to_json(const EstimateReport& er) {
  nlohmann::json j;
  j["method"] = method_name(er.method);
  j["theta_hat"] = std::vector<double>(
      er.theta_hat.data(), er.theta_hat.data() + er.theta_hat.size());
  j["objective_value"] = er.objective_value;
  j["iterations"] = er.iterations;
  j["converged"] = er.converged;
  j["wall_time"] = er.wall_time;
  j["clamped"] = er.clamped;
  return j;
}

}  // namespace

int cli_main(int argc, char** argv) {
  CLI::App app{"empirical-Bayes regression experiment harness"};
  app.require_subcommand(1);

  std::string config_path, out_path;
  int replicates_override = -1;
  long long seed_override = -1;
  int threads_override = -1;

  auto add_run = [&](const char* name, const char* help,
                     Experiment experiment) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "JSON config path ('-': stdin)")
        ->required();
    sub->add_option("--out", out_path, "detail CSV output path")->required();
    sub->add_option("--replicates", replicates_override,
                    "override replicate count");
    sub->add_option("--seed", seed_override, "override master seed");
    sub->add_option("--threads", threads_override, "override worker count");
    sub->callback([&, experiment] {
      ExperimentConfig cfg = parse_config(load_json(config_path));
      cfg.experiment = experiment;
      if (replicates_override >= 0) cfg.replicates = replicates_override;
      if (seed_override >= 0)
        cfg.master_seed = static_cast<std::uint64_t>(seed_override);
      if (threads_override >= 0) cfg.threads = threads_override;
      write_report(run_experiment(cfg), out_path);
    });
    return sub;
  };
  add_run("simulate", "replicate estimators and report MSE", Experiment::MSE);
  add_run("coverage", "credible-interval coverage study",
          Experiment::Coverage);
  add_run("debias", "bias-correction study", Experiment::Debias);
  add_run("timing", "wall-clock benchmarking", Experiment::Timing);

  {
    CLI::App* sub =
        app.add_subcommand("asymptotics", "limit quantities over a theta grid");
    static std::string family, grid_str;
    static std::vector<double> theta;
    static double d0 = 1.0;
    static int coord = 0;
    family.clear();
    grid_str.clear();
    theta.clear();
    sub->add_option("--config", config_path, "JSON config path ('-': stdin)");
    sub->add_option("--family", family, "prior family name");
    sub->add_option("--theta", theta, "base parameter vector");
    sub->add_option("--theta-grid", grid_str, "grid as lo:hi:step");
    sub->add_option("--coord", coord, "varied coordinate (default 0)");
    sub->add_option("--d0", d0, "observation precision (default 1)");
    sub->add_option("--out", out_path, "detail CSV output path")->required();
    sub->callback([&] {
      ExperimentConfig cfg;
      if (!config_path.empty()) cfg = parse_config(load_json(config_path));
      cfg.experiment = Experiment::Asymptotics;
      if (!family.empty()) cfg.prior = prior_with_defaults(family, theta);
      if (!grid_str.empty()) cfg.theta_grid = parse_grid_spec(grid_str);
      cfg.theta_grid.coord = coord;
      if (sub->count("--d0")) cfg.d0 = d0;
      write_report(run_experiment(cfg), out_path);
    });
  }

  {
    CLI::App* sub = app.add_subcommand(
        "estimate", "fit estimators on one synthetic instance");
    static std::string family, design = "gaussian";
    static std::vector<double> theta;
    static std::vector<std::string> methods{"vEB"};
    static int p = 100, n = 0;
    static double sigma2 = 1.0;
    static long long seed = 1;
    static bool plugin = false;
    sub->add_option("--family", family, "prior family name")->required();
    sub->add_option("--theta", theta, "true parameter vector")->required();
    sub->add_option("--p", p, "number of coefficients");
    sub->add_option("--n", n, "sample size (default p^2)");
    sub->add_option("--sigma2", sigma2, "noise variance");
    sub->add_option("--seed", seed, "master seed");
    sub->add_option("--design", design, "gaussian|rademacher");
    sub->add_option("--methods", methods, "estimators to run");
    sub->add_flag("--plugin-sigma2", plugin, "use residual variance estimate");
    sub->callback([&] {
      ExperimentConfig cfg;
      cfg.prior = prior_with_defaults(family, theta);
      cfg.p_grid = {p};
      cfg.n_rule = n > 0 ? NRule::Fixed : NRule::Square;
      cfg.n_fixed = n;
      cfg.sigma2 = sigma2;
      cfg.plugin_sigma2 = plugin;
      cfg.master_seed = static_cast<std::uint64_t>(seed);
      cfg.design = design == "rademacher" ? DesignDist::Rademacher
                                          : DesignDist::Gaussian;
      for (const std::string& m : methods)
        cfg.estimators.push_back(method_from_name(m));
      PContext ctx = make_context(cfg, p);
      RepData r = make_rep(cfg, ctx, 0);
      nlohmann::json outj = nlohmann::json::array();
      const EstimateReport* veb_done = nullptr;
      EstimateReport veb_hold;
      for (Method m : cfg.estimators) {
        EstimateReport er = run_estimator(cfg, ctx, r, m, veb_done);
        if (m == Method::vEB && !veb_done) {
          veb_hold = er;
          veb_done = &veb_hold;
        }
        outj.push_back(report_to_json(er));
      }
      std::cout << outj.dump(2) << '\n';
    });
  }

  {
    CLI::App* sub = app.add_subcommand(
        "enumerate", "exact small-p posterior for the two-point prior");
    static int p = 10, n = 100;
    static double pi = 0.5, sigma2 = 1.0;
    static long long seed = 1;
    sub->add_option("--p", p, "number of coefficients (max 20)");
    sub->add_option("--n", n, "sample size");
    sub->add_option("--pi", pi, "true atom weight");
    sub->add_option("--seed", seed, "master seed");
    sub->add_option("--sigma2", sigma2, "noise variance");
    sub->callback([&] {
      ExperimentConfig cfg;
      cfg.prior = PriorFamily::bernoulli(pi);
      cfg.n_rule = NRule::Fixed;
      cfg.n_fixed = n;
      cfg.sigma2 = sigma2;
      cfg.master_seed = static_cast<std::uint64_t>(seed);
      PContext ctx = make_context(cfg, p);
      RepData r = make_rep(cfg, ctx, 0);
      PosteriorSummary post = exact_enumerate(r.td, cfg.prior,
                                              cfg.prior.theta);
      EstimateReport mml = fit_exact_mml(r.td, cfg.prior);
      EstimateReport veb = fit_veb(r.td, cfg.prior);
      nlohmann::json j;
      j["exact_mean"] = std::vector<double>(post.mean.data(),
                                            post.mean.data() + p);
      j["exact_var"] =
          std::vector<double>(post.var.data(), post.var.data() + p);
      j["exact_marginal_loglik"] = post.exact_marginal_loglik;
      j["mml"] = report_to_json(mml);
      j["veb"] = report_to_json(veb);
      j["elbo_gap"] = elbo_gap(r.td, cfg.prior, cfg.prior.theta);
      std::cout << j.dump(2) << '\n';
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace veb
