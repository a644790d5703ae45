#pragma once

// Declarative experiment runner: reads a JSON config, replicates synthetic
// instances with counter-based per-replicate RNG streams, fits estimators,
// and emits CSV detail/summary files plus a JSON metadata sidecar.

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "veb/design.hpp"
#include "veb/estimators.hpp"
#include "veb/inference.hpp"
#include "veb/priors.hpp"

namespace veb {

enum class Experiment { MSE, Coverage, Debias, Asymptotics, Timing };

enum class NRule { Square, Fixed };  // n = p^2, or a fixed n for all p

enum class DesignMode { FreshPerReplicate, FixedAcrossReplicates };

struct GibbsSettings {
  int sweeps = 5000;
  int burn_in = -1;  // -1: half the sweeps
};

struct ThetaGridSpec {
  double lo = 0.05, hi = 0.95, step = 0.01;
  int coord = 0;  // varied coordinate; others held at the config prior theta
};

struct ExperimentConfig {
  Experiment experiment = Experiment::MSE;
  PriorFamily prior = PriorFamily::bernoulli(0.5);
  std::vector<int> p_grid;
  NRule n_rule = NRule::Square;
  int n_fixed = 1000;
  int replicates = 400;
  double alpha = 0.1;
  std::vector<QLabel> q_labels;
  std::vector<Method> estimators;
  std::uint64_t master_seed = 1;
  double sigma2 = 1.0;
  bool plugin_sigma2 = false;  // use the residual variance estimate
  DesignDist design = DesignDist::Gaussian;
  DesignMode design_mode = DesignMode::FixedAcrossReplicates;
  int threads = 0;  // 0: hardware concurrency
  GibbsSettings gibbs;
  std::vector<int> histogram_p;  // debias: panels getting histogram output
  ThetaGridSpec theta_grid;      // asymptotics grid
  double d0 = 1.0;               // asymptotics: observation precision
};

ExperimentConfig parse_config(const nlohmann::json& j);

// CSV text is fully formatted by the runners so identical configs give
// byte-identical files (timing columns excepted).
struct ReplicationReport {
  std::string detail_header;
  std::vector<std::string> detail_rows;
  std::string summary_header;
  std::vector<std::string> summary_rows;
  std::string extra_name;  // optional third file suffix, e.g. "hist"
  std::string extra_header;
  std::vector<std::string> extra_rows;
  nlohmann::json metadata;
};

ReplicationReport run_mse(const ExperimentConfig& cfg);
ReplicationReport run_coverage(const ExperimentConfig& cfg);
ReplicationReport run_debias(const ExperimentConfig& cfg);
ReplicationReport run_timing(const ExperimentConfig& cfg);
ReplicationReport run_kappa_grid(const ExperimentConfig& cfg);
ReplicationReport run_experiment(const ExperimentConfig& cfg);

// Writes <out>, <stem>_summary.csv, <stem>.meta.json and, when present,
// <stem>_<extra>.csv next to it.
void write_report(const ReplicationReport& report, const std::string& out);

// Subcommands: estimate, simulate, coverage, debias, asymptotics, timing,
// enumerate. Exit 0 on success, 1 on configuration errors, 2 on numerical
// failures.
int cli_main(int argc, char** argv);

}  // namespace veb
