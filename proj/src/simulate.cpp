#include "ips/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ips {

void DgpSpec::validate() const {
    if (cells.empty()) throw ConfigError("dgp: no cells");
    double total = 0.0;
    const std::size_t dim = cells.front().x.size();
    for (const auto& cell : cells) {
        if (!(cell.mass > 0.0)) throw ConfigError("dgp: cell masses must be positive");
        if (cell.x.size() != dim) throw ConfigError("dgp: covariate dimensions differ across cells");
        for (double v : {cell.pi, cell.mu1, cell.mu0})
            if (!(v >= 0.0) || !(v <= 1.0)) throw ConfigError("dgp: probabilities must lie in [0,1]");
        total += cell.mass;
    }
    if (std::abs(total - 1.0) > 1e-12) throw ConfigError("dgp: cell masses must sum to 1");
}

TruthCurve true_effect(const DgpSpec& dgp, const DeltaGrid& grid) {
    dgp.validate();
    TruthCurve curve;
    curve.grid = grid;
    curve.psi.reserve(grid.size());
    for (double delta : grid.values) {
        double psi = 0.0;
        for (const auto& cell : dgp.cells) {
            const double q = shift_propensity(delta, cell.pi);
            psi += cell.mass * (q * cell.mu1 + (1.0 - q) * cell.mu0);
        }
        curve.psi.push_back(psi);
    }
    return curve;
}

AnalysisFrame sample_dgp(const DgpSpec& dgp, int n, std::uint64_t seed) {
    dgp.validate();
    if (n < 1) throw ConfigError("sample_dgp: n must be >= 1");
    const int dim = static_cast<int>(dgp.cells.front().x.size());

    std::vector<double> cumulative;
    double acc = 0.0;
    for (const auto& cell : dgp.cells) {
        acc += cell.mass;
        cumulative.push_back(acc);
    }
    cumulative.back() = 1.0;

    AnalysisFrame frame;
    frame.x.resize(n, dim);
    frame.a.resize(n);
    frame.y.resize(n);
    frame.unit_ids.resize(n);
    frame.outcome_label = "y";
    for (int j = 0; j < dim; ++j) {
        EncodedColumn ec;
        ec.name = "x" + std::to_string(j + 1);
        ec.source = ec.name;
        frame.encoding.columns.push_back(ec);
        frame.raw_names.push_back(ec.name);
        frame.raw_categorical.push_back(false);
        frame.raw_values.emplace_back(n);
    }

    auto rng = stream_rng(seed, 0xd6bULL);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int i = 0; i < n; ++i) {
        const double u = unif(rng);
        std::size_t c = std::lower_bound(cumulative.begin(), cumulative.end(), u) -
                        cumulative.begin();
        if (c >= dgp.cells.size()) c = dgp.cells.size() - 1;
        const DgpCell& cell = dgp.cells[c];
        for (int j = 0; j < dim; ++j) {
            frame.x(i, j) = cell.x[j];
            frame.raw_values[j][i] = format_double(cell.x[j]);
        }
        frame.a[i] = unif(rng) < cell.pi ? 1.0 : 0.0;
        const double mu = frame.a[i] > 0.5 ? cell.mu1 : cell.mu0;
        frame.y[i] = unif(rng) < mu ? 1.0 : 0.0;
        frame.unit_ids[i] = std::to_string(i + 1);
    }
    frame.validate();
    return frame;
}

namespace {

const DgpCell* find_cell(const DgpSpec& dgp, const AnalysisFrame& frame, int row) {
    for (const auto& cell : dgp.cells) {
        bool match = true;
        for (int j = 0; j < frame.p() && match; ++j)
            if (frame.x(row, j) != cell.x[j]) match = false;
        if (match) return &cell;
    }
    throw EstimationError("oracle_nuisances: row " + std::to_string(row) +
                          " does not match any dgp cell");
}

}  // namespace

NuisanceEstimates oracle_nuisances(const DgpSpec& dgp, const AnalysisFrame& frame) {
    const int n = frame.n();
    NuisanceEstimates out;
    out.pi_hat.resize(n);
    out.mu1_hat.resize(n);
    out.mu0_hat.resize(n);
    out.folds.fold_of.assign(n, 0);
    out.folds.k = 1;
    out.provenance = "oracle(" + dgp.label + ")";
    for (int i = 0; i < n; ++i) {
        const DgpCell* cell = find_cell(dgp, frame, i);
        out.pi_hat[i] = clamp_prob(cell->pi);
        out.mu1_hat[i] = clamp_prob(cell->mu1);
        out.mu0_hat[i] = clamp_prob(cell->mu0);
    }
    return out;
}

namespace {

template <typename Phi>
double enumerate_expectation(const DgpSpec& dgp, double delta, Phi&& phi) {
    double total = 0.0;
    for (const auto& cell : dgp.cells) {
        for (int a = 0; a <= 1; ++a) {
            const double pa = a == 1 ? cell.pi : 1.0 - cell.pi;
            if (pa == 0.0) continue;
            const double mu = a == 1 ? cell.mu1 : cell.mu0;
            for (int y = 0; y <= 1; ++y) {
                const double py = y == 1 ? mu : 1.0 - mu;
                if (py == 0.0) continue;
                total += cell.mass * pa * py *
                         phi(delta, static_cast<double>(a), static_cast<double>(y), cell.pi,
                             cell.mu1, cell.mu0);
            }
        }
    }
    return total;
}

}  // namespace

double expected_influence(const DgpSpec& dgp, double delta) {
    return enumerate_expectation(dgp, delta, influence_value);
}

double influence_value_literal(double delta, double a, double y, double pi, double mu1,
                               double mu0) {
    const double omega = delta * pi + 1.0 - pi;
    const double q = delta * pi / omega;
    const double plug_in = q * mu1 + (1.0 - q) * mu0;
    const double residual = (q / pi) * (y - mu1) + ((1.0 - q) / (1.0 - pi)) * (y - mu0);
    const double correction = delta * (mu1 - mu0) * (a - pi) / (omega * omega);
    return plug_in + residual + correction;
}

double expected_influence_literal(const DgpSpec& dgp, double delta) {
    return enumerate_expectation(dgp, delta, influence_value_literal);
}

DgpSpec single_cell_dgp() {
    DgpSpec dgp;
    dgp.label = "single_cell";
    dgp.cells = {{1.0, {0.0}, 0.5, 0.8, 0.2}};
    return dgp;
}

DgpSpec two_cell_dgp() {
    DgpSpec dgp;
    dgp.label = "two_cell";
    dgp.cells = {{0.5, {0.0}, 0.15, 0.15, 0.12},
                 {0.5, {1.0}, 0.85, 0.90, 0.85}};
    return dgp;
}

DgpSpec probation_like_dgp() {
    // Constants found once by a deterministic least-squares search against the
    // enumeration oracle, then frozen. Enumerated truth: treated share
    // 0.264200, psi(0.1)=0.560000, psi(1)=0.580000, psi(10)=0.650000.
    DgpSpec dgp;
    dgp.label = "probation_like";
    dgp.cells = {{0.35, {0.0, 0.0}, 0.112882, 0.557834, 0.366543},
                 {0.30, {0.0, 1.0}, 0.126629, 0.697055, 0.513461},
                 {0.20, {1.0, 0.0}, 0.787645, 0.977721, 0.952671},
                 {0.15, {1.0, 1.0}, 0.194492, 0.732623, 0.556881}};
    return dgp;
}

namespace {

struct ReplicateOutcome {
    std::vector<double> estimates;
    std::vector<char> pointwise_covered;
    char uniform_covered = 0;
};

SimulationReport aggregate(const DgpSpec& dgp, const SimEstimationConfig& config, int R, int n,
                           const std::vector<ReplicateOutcome>& results,
                           const std::string& label) {
    const TruthCurve truth = true_effect(dgp, config.grid);
    const int g = config.grid.size();
    SimulationReport report;
    report.label = label;
    report.replicates = R;
    report.n = n;
    report.grid = config.grid;
    report.truth = truth.psi;
    report.mean_estimate.assign(g, 0.0);
    report.bias.assign(g, 0.0);
    report.rmse.assign(g, 0.0);
    report.replicate_se.assign(g, 0.0);
    report.pointwise_coverage.assign(g, 0.0);
    int uniform_hits = 0;
    for (int j = 0; j < g; ++j) {
        double sum = 0.0, sq = 0.0;
        int hits = 0;
        for (const auto& r : results) {
            const double err = r.estimates[j] - truth.psi[j];
            sum += r.estimates[j];
            sq += err * err;
            hits += r.pointwise_covered[j];
        }
        report.mean_estimate[j] = sum / R;
        report.bias[j] = report.mean_estimate[j] - truth.psi[j];
        report.rmse[j] = std::sqrt(sq / R);
        report.pointwise_coverage[j] = static_cast<double>(hits) / R;
        double var = 0.0;
        for (const auto& r : results) {
            const double d = r.estimates[j] - report.mean_estimate[j];
            var += d * d;
        }
        report.replicate_se[j] = R > 1 ? std::sqrt(var / (R - 1) / R) : 0.0;
    }
    for (const auto& r : results) uniform_hits += r.uniform_covered;
    report.uniform_coverage = static_cast<double>(uniform_hits) / R;
    return report;
}

ReplicateOutcome one_replicate(const DgpSpec& dgp, const SimEstimationConfig& config, int n,
                               std::uint64_t seed, const TruthCurve& truth,
                               MisspecMode mode = MisspecMode::both_correct,
                               bool use_mode = false) {
    AnalysisFrame frame = sample_dgp(dgp, n, seed);

    NuisanceEstimates nuisances;
    bool literal = false;
    if (use_mode && mode == MisspecMode::literal_formula) {
        nuisances = oracle_nuisances(dgp, frame);
        literal = true;
    } else if (use_mode && mode != MisspecMode::both_correct) {
        LearnerConfig learners = config.learners;
        LearnerSpec constant;
        constant.kind = LearnerKind::constant;
        if (mode == MisspecMode::ps_wrong || mode == MisspecMode::both_wrong)
            learners.roster = {constant};
        if (mode == MisspecMode::or_wrong || mode == MisspecMode::both_wrong)
            learners.outcome_roster = {constant};
        else if (mode == MisspecMode::ps_wrong)
            learners.outcome_roster = config.learners.roster;
        nuisances = cross_fit_nuisances(frame, learners, config.k_folds, mix_seed(seed, 0xcfULL));
    } else if (config.oracle_nuisances) {
        nuisances = oracle_nuisances(dgp, frame);
    } else {
        nuisances = cross_fit_nuisances(frame, config.learners, config.k_folds,
                                        mix_seed(seed, 0xcfULL));
    }

    InfluenceMatrix influence = compute_influence(frame, nuisances, config.grid);
    if (literal) {
        for (int j = 0; j < config.grid.size(); ++j) {
            const double delta = config.grid.values[j];
            for (int i = 0; i < frame.n(); ++i)
                influence.phi(i, j) =
                    influence_value_literal(delta, frame.a[i], frame.y[i], nuisances.pi_hat[i],
                                            nuisances.mu1_hat[i], nuisances.mu0_hat[i]);
        }
    }
    EffectCurve curve = curve_from_influence(influence, config.alpha);
    if (config.compute_bands) {
        BootstrapConfig boot = config.bootstrap;
        boot.alpha = config.alpha;
        boot.seed = mix_seed(seed, 0xb0ULL);
        boot.threads = 1;  // replicates are already parallel
        curve = uniform_band(influence, curve, boot);
    }

    ReplicateOutcome out;
    out.estimates.resize(config.grid.size());
    out.pointwise_covered.resize(config.grid.size());
    out.uniform_covered = config.compute_bands ? 1 : 0;
    for (int j = 0; j < config.grid.size(); ++j) {
        const auto& pt = curve.points[j];
        out.estimates[j] = pt.estimate;
        out.pointwise_covered[j] =
            pt.pointwise_lo <= truth.psi[j] && truth.psi[j] <= pt.pointwise_hi;
        if (config.compute_bands &&
            !(*pt.band_lo <= truth.psi[j] && truth.psi[j] <= *pt.band_hi))
            out.uniform_covered = 0;
    }
    return out;
}

}  // namespace

SimulationReport run_replications(const DgpSpec& dgp, const SimEstimationConfig& config, int R,
                                  int n, std::uint64_t seed) {
    if (R < 2) throw ConfigError("run_replications: R must be >= 2");
    dgp.validate();
    const TruthCurve truth = true_effect(dgp, config.grid);
    std::vector<ReplicateOutcome> results(R);
    parallel_for(static_cast<std::size_t>(R), config.threads, [&](std::size_t r) {
        results[r] = one_replicate(dgp, config, n, mix_seed(seed, r), truth);
    });
    SimulationReport report = aggregate(dgp, config, R, n, results, dgp.label);
    report.config_digest = fnv1a_hex(dgp.label + "|R=" + std::to_string(R) +
                                     "|n=" + std::to_string(n) + "|seed=" + std::to_string(seed));
    return report;
}

std::string misspec_mode_name(MisspecMode mode) {
    switch (mode) {
        case MisspecMode::both_correct:
            return "both_correct";
        case MisspecMode::ps_wrong:
            return "ps_wrong";
        case MisspecMode::or_wrong:
            return "or_wrong";
        case MisspecMode::both_wrong:
            return "both_wrong";
        case MisspecMode::literal_formula:
            return "literal_formula";
    }
    return "unknown";
}

SimulationReport misspecification_experiment(const DgpSpec& dgp, MisspecMode mode, int R, int n,
                                             std::uint64_t seed, int threads) {
    if (R < 2) throw ConfigError("misspecification_experiment: R must be >= 2");
    dgp.validate();
    SimEstimationConfig config;
    config.threads = threads;
    config.compute_bands = false;
    // The flexible side of the roster; the constant learner is what the
    // "wrong" modes substitute in, so it is excluded here.
    LearnerSpec ridge;
    ridge.kind = LearnerKind::ridge_logistic;
    ridge.lambda = 1.0;
    LearnerSpec gbt;
    gbt.kind = LearnerKind::gbt;
    config.learners.roster = {ridge, gbt};

    const TruthCurve truth = true_effect(dgp, config.grid);
    std::vector<ReplicateOutcome> results(R);
    parallel_for(static_cast<std::size_t>(R), threads, [&](std::size_t r) {
        results[r] = one_replicate(dgp, config, n, mix_seed(seed, r), truth, mode, true);
    });
    SimulationReport report =
        aggregate(dgp, config, R, n, results, dgp.label + ":" + misspec_mode_name(mode));
    report.config_digest =
        fnv1a_hex(report.label + "|R=" + std::to_string(R) + "|n=" + std::to_string(n) +
                  "|seed=" + std::to_string(seed));
    return report;
}

std::string SimulationReport::to_csv() const {
    std::ostringstream os;
    os << "delta,truth,mean_estimate,bias,rmse,replicate_se,pointwise_coverage,uniform_coverage\n";
    for (int j = 0; j < grid.size(); ++j)
        os << format_double(grid.values[j]) << "," << format_double(truth[j]) << ","
           << format_double(mean_estimate[j]) << "," << format_double(bias[j]) << ","
           << format_double(rmse[j]) << "," << format_double(replicate_se[j]) << ","
           << format_double(pointwise_coverage[j]) << "," << format_double(uniform_coverage)
           << "\n";
    return os.str();
}

std::string SimulationReport::to_json() const {
    std::ostringstream os;
    os << "{\"schema_version\":1,\"label\":\"" << label << "\",\"replicates\":" << replicates
       << ",\"n\":" << n << ",\"config_digest\":\"" << config_digest
       << "\",\"uniform_coverage\":" << format_double(uniform_coverage) << ",\"rows\":[";
    for (int j = 0; j < grid.size(); ++j) {
        if (j) os << ",";
        os << "{\"delta\":" << format_double(grid.values[j])
           << ",\"truth\":" << format_double(truth[j])
           << ",\"mean_estimate\":" << format_double(mean_estimate[j])
           << ",\"bias\":" << format_double(bias[j]) << ",\"rmse\":" << format_double(rmse[j])
           << ",\"replicate_se\":" << format_double(replicate_se[j])
           << ",\"pointwise_coverage\":" << format_double(pointwise_coverage[j]) << "}";
    }
    os << "]}";
    return os.str();
}

}  // namespace ips
