#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ips/common.hpp"
#include "ips/dataset.hpp"
#include "ips/learners.hpp"

namespace ips {

enum class GridSpacing { log, linear };

// Strictly increasing grid of odds multipliers; 1.0 is inserted whenever the
// range straddles it so the status-quo point is always available.
struct DeltaGrid {
    std::vector<double> values;

    static DeltaGrid make(double min, double max, int count, GridSpacing spacing);
    static DeltaGrid single(double delta);

    int size() const { return static_cast<int>(values.size()); }
    // Exact grid lookup; throws naming the nearest grid point when absent.
    int index_of(double delta) const;
    void validate() const;
};

struct FoldAssignment {
    std::vector<int> fold_of;
    int k = 2;
    std::uint64_t seed = 0;
};

// Treatment-stratified random fold assignment; guarantees both arms appear in
// every training split whenever each arm has at least k units.
FoldAssignment assign_folds(const Vector& a, int k, std::uint64_t seed);

struct LearnerConfig {
    std::vector<LearnerSpec> roster;  // defaults to {constant, ridge, gbt}
    std::vector<LearnerSpec> outcome_roster;  // empty = same roster for mu
    int sl_folds = 10;
    bool t_learner = false;  // per-arm outcome models instead of A-as-feature

    static LearnerConfig defaults();
    std::string describe() const;
};

struct NuisanceEstimates {
    Vector pi_hat;
    Vector mu1_hat;
    Vector mu0_hat;
    FoldAssignment folds;
    std::string provenance;

    void validate() const;
};

struct InfluenceMatrix {
    Matrix phi;  // n x |grid|
    DeltaGrid grid;
};

// q(delta; pi) = delta*pi / (delta*pi + 1 - pi); exact at pi in {0,1}.
double shift_propensity(double delta, double pi);

// Uncentered efficient-influence-function value in the treatment-indicator
// form. The residual weights are delta/omega and 1/omega with
// omega = delta*pi + 1 - pi, so the value stays finite at pi in {0,1}.
double influence_value(double delta, double a, double y, double pi, double mu1, double mu0);

double plug_in_effect(const NuisanceEstimates& nuisances, double delta);

NuisanceEstimates cross_fit_nuisances(const AnalysisFrame& frame, const LearnerConfig& config,
                                      int k_folds, std::uint64_t seed);

InfluenceMatrix compute_influence(const AnalysisFrame& frame, const NuisanceEstimates& nuisances,
                                  const DeltaGrid& grid);

struct CurvePoint {
    double delta = 1.0;
    double estimate = 0.0;
    double sigma = 0.0;      // sample sd of influence values
    double std_error = 0.0;  // sigma / sqrt(n)
    double pointwise_lo = 0.0;
    double pointwise_hi = 0.0;
    std::optional<double> band_lo;
    std::optional<double> band_hi;
};

struct EffectCurve {
    std::vector<CurvePoint> points;
    int n = 0;
    double alpha = 0.05;
    std::uint64_t seed = 0;
    std::optional<double> band_critical_value;
    std::string config_digest;
    std::string outcome_label;
    std::string stratum_label;

    int index_of(double delta) const;
};

// Point estimates, standard errors, and pointwise Wald intervals over the
// grid; bands are added by the inference module.
std::pair<EffectCurve, InfluenceMatrix> estimate_curve(const AnalysisFrame& frame,
                                                       const DeltaGrid& grid,
                                                       const LearnerConfig& config, int k_folds,
                                                       std::uint64_t seed, double alpha = 0.05);

// Curve statistics from a precomputed influence matrix (oracle-nuisance and
// simulation paths).
EffectCurve curve_from_influence(const InfluenceMatrix& influence, double alpha);

}  // namespace ips
