#pragma once

#include <string>
#include <vector>

#include "ips/common.hpp"
#include "ips/estimator.hpp"
#include "ips/inference.hpp"

namespace ips {

struct DgpCell {
    double mass = 1.0;
    std::vector<double> x;
    double pi = 0.5;
    double mu1 = 0.5;
    double mu0 = 0.5;
};

// Discrete-cell data-generating process; the truth is enumerable exactly.
struct DgpSpec {
    std::vector<DgpCell> cells;
    std::string label;

    void validate() const;
};

struct TruthCurve {
    DeltaGrid grid;
    std::vector<double> psi;
};

TruthCurve true_effect(const DgpSpec& dgp, const DeltaGrid& grid);

AnalysisFrame sample_dgp(const DgpSpec& dgp, int n, std::uint64_t seed);

// True per-row nuisances recovered by matching covariate rows back to cells
// (exact: sampled rows copy cell covariates bitwise).
NuisanceEstimates oracle_nuisances(const DgpSpec& dgp, const AnalysisFrame& frame);

// Exact E[influence_value] with true nuisances: enumeration over cells, A and
// Y; no sampling. Equals true_effect for every delta.
double expected_influence(const DgpSpec& dgp, double delta);

// The residual terms carried without treatment indicators, with q/pi and
// (1-q)/(1-pi) weights. Kept here only to quantify its bias.
double influence_value_literal(double delta, double a, double y, double pi, double mu1,
                               double mu0);
double expected_influence_literal(const DgpSpec& dgp, double delta);

// Bundled DGPs with frozen constants.
DgpSpec single_cell_dgp();     // pi=0.5, mu1=0.8, mu0=0.2
DgpSpec two_cell_dgp();        // strong confounding; misspecification testbed
DgpSpec probation_like_dgp();  // calibrated to frozen marginal anchors

struct SimEstimationConfig {
    bool oracle_nuisances = false;
    LearnerConfig learners = LearnerConfig::defaults();
    int k_folds = 2;
    DeltaGrid grid = DeltaGrid::make(0.1, 10.0, 9, GridSpacing::log);
    BootstrapConfig bootstrap;
    double alpha = 0.05;
    bool compute_bands = true;
    int threads = 1;
};

struct SimulationReport {
    std::string label;
    int replicates = 0;
    int n = 0;
    DeltaGrid grid;
    std::vector<double> truth;
    std::vector<double> mean_estimate;
    std::vector<double> bias;
    std::vector<double> rmse;
    std::vector<double> replicate_se;  // sd of estimates across replicates / sqrt(R)
    std::vector<double> pointwise_coverage;
    double uniform_coverage = 0.0;  // truth inside the band at every grid point
    std::string config_digest;

    std::string to_csv() const;
    std::string to_json() const;
};

SimulationReport run_replications(const DgpSpec& dgp, const SimEstimationConfig& config, int R,
                                  int n, std::uint64_t seed);

enum class MisspecMode { both_correct, ps_wrong, or_wrong, both_wrong, literal_formula };

std::string misspec_mode_name(MisspecMode mode);

// Double-robustness harness: "wrong" sides use the constant-only learner,
// which cannot see the confounder. literal_formula uses true nuisances but
// the indicator-free influence values.
SimulationReport misspecification_experiment(const DgpSpec& dgp, MisspecMode mode, int R, int n,
                                             std::uint64_t seed, int threads = 1);

}  // namespace ips
