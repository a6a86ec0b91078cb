#include "ips/estimator.hpp"

#include <algorithm>
#include <cmath>

#include "ips/inference.hpp"

namespace ips {

DeltaGrid DeltaGrid::make(double min, double max, int count, GridSpacing spacing) {
    if (!(min > 0.0) || !std::isfinite(min)) throw ConfigError("grid: min must be positive");
    if (!(max >= min) || !std::isfinite(max)) throw ConfigError("grid: max must be >= min");
    if (count < 1) throw ConfigError("grid: count must be >= 1");
    DeltaGrid grid;
    if (count == 1) {
        grid.values.push_back(min);
    } else if (spacing == GridSpacing::log) {
        const double lo = std::log10(min), hi = std::log10(max);
        for (int i = 0; i < count; ++i)
            grid.values.push_back(std::pow(10.0, lo + (hi - lo) * i / (count - 1)));
        grid.values.front() = min;
        grid.values.back() = max;
    } else {
        for (int i = 0; i < count; ++i)
            grid.values.push_back(min + (max - min) * i / (count - 1));
        grid.values.front() = min;
        grid.values.back() = max;
    }
    if (min <= 1.0 && 1.0 <= max &&
        std::none_of(grid.values.begin(), grid.values.end(), [](double v) { return v == 1.0; })) {
        grid.values.push_back(1.0);
        std::sort(grid.values.begin(), grid.values.end());
    }
    grid.validate();
    return grid;
}

DeltaGrid DeltaGrid::single(double delta) {
    DeltaGrid grid;
    grid.values.push_back(delta);
    grid.validate();
    return grid;
}

void DeltaGrid::validate() const {
    if (values.empty()) throw ConfigError("grid: empty");
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!(values[i] > 0.0) || !std::isfinite(values[i]))
            throw ConfigError("grid: delta values must be positive and finite");
        if (i > 0 && values[i] <= values[i - 1])
            throw ConfigError("grid: delta values must be strictly increasing");
    }
}

int DeltaGrid::index_of(double delta) const {
    int nearest = 0;
    double nearest_gap = std::abs(values[0] - delta);
    for (int i = 0; i < size(); ++i) {
        if (values[i] == delta) return i;
        double gap = std::abs(values[i] - delta);
        if (gap < nearest_gap) {
            nearest_gap = gap;
            nearest = i;
        }
    }
    throw ConfigError("delta " + format_double(delta) + " is not on the grid; nearest grid point is " +
                      format_double(values[nearest]));
}

int EffectCurve::index_of(double delta) const {
    for (int i = 0; i < static_cast<int>(points.size()); ++i)
        if (points[i].delta == delta) return i;
    int nearest = 0;
    double gap = std::abs(points[0].delta - delta);
    for (int i = 1; i < static_cast<int>(points.size()); ++i) {
        double g = std::abs(points[i].delta - delta);
        if (g < gap) {
            gap = g;
            nearest = i;
        }
    }
    throw ConfigError("delta " + format_double(delta) + " is not on the grid; nearest grid point is " +
                      format_double(points[nearest].delta));
}

double shift_propensity(double delta, double pi) {
    if (pi <= 0.0) return 0.0;
    if (pi >= 1.0) return 1.0;
    return delta * pi / (delta * pi + 1.0 - pi);
}

double influence_value(double delta, double a, double y, double pi, double mu1, double mu0) {
    const double omega = delta * pi + 1.0 - pi;
    const double q = delta * pi / omega;
    const double plug_in = q * mu1 + (1.0 - q) * mu0;
    const double residual = a > 0.5 ? (delta / omega) * (y - mu1) : (1.0 / omega) * (y - mu0);
    const double correction = delta * (mu1 - mu0) * (a - pi) / (omega * omega);
    return plug_in + residual + correction;
}

double plug_in_effect(const NuisanceEstimates& nuisances, double delta) {
    const auto n = nuisances.pi_hat.size();
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double q = shift_propensity(delta, nuisances.pi_hat[i]);
        total += q * nuisances.mu1_hat[i] + (1.0 - q) * nuisances.mu0_hat[i];
    }
    return total / static_cast<double>(n);
}

FoldAssignment assign_folds(const Vector& a, int k, std::uint64_t seed) {
    const int n = static_cast<int>(a.size());
    if (k < 2) throw ConfigError("k_folds must be >= 2");
    if (k > n) throw ConfigError("k_folds must not exceed n");
    std::vector<int> treated, control;
    for (int i = 0; i < n; ++i) (a[i] > 0.5 ? treated : control).push_back(i);

    FoldAssignment folds;
    folds.fold_of.assign(n, 0);
    folds.k = k;
    folds.seed = seed;
    auto rng = stream_rng(seed, 0xf01d5ULL);
    int next = 0;
    for (auto* arm : {&treated, &control}) {
        std::shuffle(arm->begin(), arm->end(), rng);
        for (int idx : *arm) {
            folds.fold_of[idx] = next;
            next = (next + 1) % k;
        }
    }

    std::vector<int> count(k, 0), arm1(k, 0);
    for (int i = 0; i < n; ++i) {
        ++count[folds.fold_of[i]];
        if (a[i] > 0.5) ++arm1[folds.fold_of[i]];
    }
    for (int f = 0; f < k; ++f) {
        if (count[f] == 0) throw EstimationError("fold " + std::to_string(f) + " is empty");
        if (arm1[f] == 0 || arm1[f] == count[f])
            throw EstimationError(
                "fold " + std::to_string(f) +
                " lacks one treatment arm; the data are too imbalanced for this many folds — "
                "use fewer folds");
    }
    return folds;
}

void NuisanceEstimates::validate() const {
    const auto n = pi_hat.size();
    if (mu1_hat.size() != n || mu0_hat.size() != n ||
        static_cast<Eigen::Index>(folds.fold_of.size()) != n)
        throw EstimationError("nuisance vectors must share the same length");
    auto check = [](const Vector& v, const char* name) {
        for (Eigen::Index i = 0; i < v.size(); ++i)
            if (!std::isfinite(v[i]) || v[i] < kProbClamp || v[i] > 1.0 - kProbClamp)
                throw EstimationError(std::string(name) + " outside the clamp range at row " +
                                      std::to_string(i));
    };
    check(pi_hat, "pi_hat");
    check(mu1_hat, "mu1_hat");
    check(mu0_hat, "mu0_hat");
}

LearnerConfig LearnerConfig::defaults() {
    LearnerConfig config;
    LearnerSpec constant;
    constant.kind = LearnerKind::constant;
    LearnerSpec ridge;
    ridge.kind = LearnerKind::ridge_logistic;
    ridge.lambda = 1.0;
    LearnerSpec gbt;
    gbt.kind = LearnerKind::gbt;
    config.roster = {constant, ridge, gbt};
    return config;
}

std::string LearnerConfig::describe() const {
    std::string out = "super_learner(folds=" + std::to_string(sl_folds) +
                      ",outcome=" + (t_learner ? "t_learner" : "a_as_feature") + ")[";
    for (std::size_t i = 0; i < roster.size(); ++i) {
        if (i) out += ",";
        out += roster[i].name();
    }
    out += "]";
    if (!outcome_roster.empty()) {
        out += "/outcome[";
        for (std::size_t i = 0; i < outcome_roster.size(); ++i) {
            if (i) out += ",";
            out += outcome_roster[i].name();
        }
        out += "]";
    }
    return out;
}

NuisanceEstimates cross_fit_nuisances(const AnalysisFrame& frame, const LearnerConfig& config,
                                      int k_folds, std::uint64_t seed) {
    frame.validate();
    if (config.roster.empty()) throw ConfigError("learner roster is empty");
    const auto& mu_roster = config.outcome_roster.empty() ? config.roster : config.outcome_roster;
    const int n = frame.n();
    const int p = frame.p();

    NuisanceEstimates out;
    out.folds = assign_folds(frame.a, k_folds, seed);
    out.pi_hat.resize(n);
    out.mu1_hat.resize(n);
    out.mu0_hat.resize(n);
    out.provenance = config.describe();

    for (int f = 0; f < k_folds; ++f) {
        std::vector<int> train, test;
        for (int i = 0; i < n; ++i) (out.folds.fold_of[i] == f ? test : train).push_back(i);
        const int nt = static_cast<int>(train.size());
        Matrix x_train(nt, p);
        Vector a_train(nt), y_train(nt);
        for (int i = 0; i < nt; ++i) {
            x_train.row(i) = frame.x.row(train[i]);
            a_train[i] = frame.a[train[i]];
            y_train[i] = frame.y[train[i]];
        }
        Matrix x_test(test.size(), p);
        for (std::size_t i = 0; i < test.size(); ++i) x_test.row(i) = frame.x.row(test[i]);

        const int sl_folds = std::min(config.sl_folds, nt);
        EnsembleModel pi_model = fit_super_learner(config.roster, x_train, a_train, sl_folds,
                                                   mix_seed(seed, 2 * f));
        Vector pi_pred = pi_model.predict(x_test);

        Vector mu1_pred, mu0_pred;
        if (config.t_learner) {
            std::vector<int> arm1, arm0;
            for (int i = 0; i < nt; ++i) (a_train[i] > 0.5 ? arm1 : arm0).push_back(i);
            auto fit_arm = [&](const std::vector<int>& rows, std::uint64_t salt) {
                Matrix xa(rows.size(), p);
                Vector ya(rows.size());
                for (std::size_t i = 0; i < rows.size(); ++i) {
                    xa.row(i) = x_train.row(rows[i]);
                    ya[i] = y_train[rows[i]];
                }
                int folds = std::min<int>(config.sl_folds, static_cast<int>(rows.size()));
                return fit_super_learner(mu_roster, xa, ya, std::max(folds, 2),
                                         mix_seed(seed, salt));
            };
            mu1_pred = fit_arm(arm1, 4 * f + 1).predict(x_test);
            mu0_pred = fit_arm(arm0, 4 * f + 3).predict(x_test);
        } else {
            Matrix xa_train(nt, p + 1);
            xa_train.leftCols(p) = x_train;
            xa_train.col(p) = a_train;
            EnsembleModel mu_model = fit_super_learner(mu_roster, xa_train, y_train, sl_folds,
                                                       mix_seed(seed, 2 * f + 1));
            Matrix xa_test(test.size(), p + 1);
            xa_test.leftCols(p) = x_test;
            xa_test.col(p).setOnes();
            mu1_pred = mu_model.predict(xa_test);
            xa_test.col(p).setZero();
            mu0_pred = mu_model.predict(xa_test);
        }

        for (std::size_t i = 0; i < test.size(); ++i) {
            out.pi_hat[test[i]] = pi_pred[i];
            out.mu1_hat[test[i]] = mu1_pred[i];
            out.mu0_hat[test[i]] = mu0_pred[i];
        }
    }
    out.validate();
    return out;
}

InfluenceMatrix compute_influence(const AnalysisFrame& frame, const NuisanceEstimates& nuisances,
                                  const DeltaGrid& grid) {
    const int n = frame.n();
    InfluenceMatrix out;
    out.grid = grid;
    out.phi.resize(n, grid.size());
    for (int j = 0; j < grid.size(); ++j) {
        const double delta = grid.values[j];
        for (int i = 0; i < n; ++i)
            out.phi(i, j) = influence_value(delta, frame.a[i], frame.y[i], nuisances.pi_hat[i],
                                            nuisances.mu1_hat[i], nuisances.mu0_hat[i]);
    }
    return out;
}

EffectCurve curve_from_influence(const InfluenceMatrix& influence, double alpha) {
    const int n = static_cast<int>(influence.phi.rows());
    EffectCurve curve;
    curve.n = n;
    curve.alpha = alpha;
    curve.points.resize(influence.grid.size());
    for (int j = 0; j < influence.grid.size(); ++j) {
        CurvePoint& pt = curve.points[j];
        pt.delta = influence.grid.values[j];
        Vector col = influence.phi.col(j);
        pt.estimate = col.mean();
        pt.sigma = sample_sd(col);
        pt.std_error = pt.sigma / std::sqrt(static_cast<double>(n));
        auto ci = pointwise_ci(pt.estimate, pt.sigma, n, alpha);
        pt.pointwise_lo = ci.first;
        pt.pointwise_hi = ci.second;
    }
    return curve;
}

std::pair<EffectCurve, InfluenceMatrix> estimate_curve(const AnalysisFrame& frame,
                                                       const DeltaGrid& grid,
                                                       const LearnerConfig& config, int k_folds,
                                                       std::uint64_t seed, double alpha) {
    grid.validate();
    NuisanceEstimates nuisances = cross_fit_nuisances(frame, config, k_folds, seed);
    InfluenceMatrix influence = compute_influence(frame, nuisances, grid);
    EffectCurve curve = curve_from_influence(influence, alpha);
    curve.seed = seed;
    curve.outcome_label = frame.outcome_label;
    return {std::move(curve), std::move(influence)};
}

}  // namespace ips
