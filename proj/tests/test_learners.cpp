#include <random>

#include "doctest.h"
#include "ips/learners.hpp"

using namespace ips;

namespace {

// Independent oracle: coordinate descent with golden-section line search on
// the penalized negative log-likelihood (intercept unpenalized). Deliberately
// ignorant of the IRLS implementation.
double ridge_objective(const Matrix& x, const Vector& y, double lambda, const Vector& beta) {
    double nll = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        double eta = beta[0];
        for (Eigen::Index j = 0; j < x.cols(); ++j) eta += x(i, j) * beta[j + 1];
        nll += std::log1p(std::exp(-std::abs(eta))) + std::max(eta, 0.0) - y[i] * eta;
    }
    double penalty = 0.0;
    for (Eigen::Index j = 1; j < beta.size(); ++j) penalty += beta[j] * beta[j];
    return nll + 0.5 * lambda * penalty;
}

Vector ridge_oracle(const Matrix& x, const Vector& y, double lambda) {
    Vector beta = Vector::Zero(x.cols() + 1);
    const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
    for (int sweep = 0; sweep < 2000; ++sweep) {
        double moved = 0.0;
        for (Eigen::Index j = 0; j < beta.size(); ++j) {
            double lo = beta[j] - 4.0, hi = beta[j] + 4.0;
            for (int it = 0; it < 90; ++it) {
                const double m1 = hi - phi * (hi - lo);
                const double m2 = lo + phi * (hi - lo);
                Vector b1 = beta, b2 = beta;
                b1[j] = m1;
                b2[j] = m2;
                if (ridge_objective(x, y, lambda, b1) < ridge_objective(x, y, lambda, b2))
                    hi = m2;
                else
                    lo = m1;
            }
            const double next = (lo + hi) / 2.0;
            moved = std::max(moved, std::abs(next - beta[j]));
            beta[j] = next;
        }
        if (moved < 1e-10) break;
    }
    return beta;
}

struct LogisticData {
    Matrix x;
    Vector y;
};

LogisticData simulate_logistic(int n, int p, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    LogisticData data;
    data.x.resize(n, p);
    data.y.resize(n);
    Vector beta(p);
    for (int j = 0; j < p; ++j) beta[j] = (j % 2 ? -1.0 : 1.0) * (0.5 + 0.3 * j);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < p; ++j) data.x(i, j) = gauss(rng);
        const double eta = -0.2 + data.x.row(i).dot(beta);
        data.y[i] = unif(rng) < logistic(eta) ? 1.0 : 0.0;
    }
    return data;
}

}  // namespace

TEST_CASE("constant learner predicts the clamped mean") {
    Matrix x = Matrix::Random(4, 2);
    Vector y(4);
    y << 0, 1, 1, 1;
    auto model = fit_constant(x, y);
    Vector pred = model->predict(x);
    for (int i = 0; i < 4; ++i) CHECK(pred[i] == doctest::Approx(0.75));

    // invariant to x
    Matrix other = Matrix::Random(7, 2) * 100.0;
    CHECK(model->predict(other)[3] == doctest::Approx(0.75));

    Vector zeros = Vector::Zero(4);
    CHECK(fit_constant(x, zeros)->predict(x)[0] == doctest::Approx(1e-6));
}

TEST_CASE("ridge logistic: symmetric data predicts one half") {
    Matrix x = Matrix::Zero(2, 1);
    Vector y(2);
    y << 0, 1;
    auto model = fit_ridge_logistic(x, y, 1.0);
    CHECK(model->predict(x)[0] == doctest::Approx(0.5));
}

TEST_CASE("ridge logistic: separable data stays finite under penalty") {
    Matrix x(6, 1);
    x << -3, -2, -1, 1, 2, 3;
    Vector y(6);
    y << 0, 0, 0, 1, 1, 1;
    auto model = fit_ridge_logistic(x, y, 1.0);
    Vector beta = ridge_logistic_coefficients(*model);
    CHECK(std::isfinite(beta[1]));
    Vector pred = model->predict(x);
    for (int i = 0; i < 6; ++i) {
        CHECK(pred[i] > 0.0);
        CHECK(pred[i] < 1.0);
    }
    CHECK(model->converged());
}

TEST_CASE("ridge logistic matches the coordinate-descent oracle") {
    LogisticData data = simulate_logistic(50, 1, 7);
    auto model = fit_ridge_logistic(data.x, data.y, 0.01);
    Vector beta = ridge_logistic_coefficients(*model);
    Vector oracle = ridge_oracle(data.x, data.y, 0.01);
    CHECK(std::abs(beta[0] - oracle[0]) < 1e-4);
    CHECK(std::abs(beta[1] - oracle[1]) < 1e-4);
}

TEST_CASE("ridge logistic with lambda=0 matches unpenalized MLE") {
    LogisticData data = simulate_logistic(200, 2, 11);
    auto model = fit_ridge_logistic(data.x, data.y, 0.0);
    Vector beta = ridge_logistic_coefficients(*model);
    Vector oracle = ridge_oracle(data.x, data.y, 0.0);
    for (int j = 0; j < 3; ++j) CHECK(std::abs(beta[j] - oracle[j]) < 1e-4);
}

TEST_CASE("gbt: constant outcome contributes no trees") {
    Matrix x = Matrix::Random(40, 2);
    Vector y = Vector::Ones(40);
    GbtParams params;
    auto model = fit_gbt(x, y, params);
    CHECK(model->iterations() == 0);
    Vector pred = model->predict(x);
    for (int i = 0; i < 40; ++i) CHECK(pred[i] == doctest::Approx(1.0 - 1e-6));
}

TEST_CASE("gbt learns a step function") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Matrix x(200, 1);
    Vector y(200);
    for (int i = 0; i < 200; ++i) {
        x(i, 0) = gauss(rng);
        y[i] = x(i, 0) > 0.0 ? 1.0 : 0.0;
    }
    GbtParams params;
    params.tree_count = 100;
    params.max_depth = 2;
    params.learning_rate = 0.1;
    params.min_leaf = 1;
    auto model = fit_gbt(x, y, params);
    CHECK(log_loss(y, model->predict(x)) < 0.1);
}

TEST_CASE("gbt stump splits between the two points") {
    Matrix x(2, 1);
    x << 0, 1;
    Vector y(2);
    y << 0, 1;
    GbtParams params;
    params.tree_count = 1;
    params.max_depth = 1;
    params.min_leaf = 1;
    auto model = fit_gbt(x, y, params);
    Matrix probe(2, 1);
    probe << 0.49, 0.51;
    Vector pred = model->predict(probe);
    CHECK(pred[0] < 0.5);
    CHECK(pred[1] > 0.5);
}

TEST_CASE("gbt fit is deterministic") {
    LogisticData data = simulate_logistic(150, 2, 21);
    GbtParams params;
    params.min_leaf = 5;
    Vector p1 = fit_gbt(data.x, data.y, params)->predict(data.x);
    Vector p2 = fit_gbt(data.x, data.y, params)->predict(data.x);
    CHECK(p1 == p2);
}

TEST_CASE("super learner: single member gets weight one") {
    LogisticData data = simulate_logistic(60, 1, 5);
    LearnerSpec constant;
    constant.kind = LearnerKind::constant;
    EnsembleModel ensemble = fit_super_learner({constant}, data.x, data.y, 5, 42);
    REQUIRE(ensemble.weights.size() == 1);
    CHECK(ensemble.weights[0] == doctest::Approx(1.0));
}

TEST_CASE("super learner upweights the correct model family") {
    LogisticData data = simulate_logistic(500, 2, 13);
    LearnerSpec constant;
    constant.kind = LearnerKind::constant;
    LearnerSpec ridge;
    ridge.kind = LearnerKind::ridge_logistic;
    ridge.lambda = 0.1;
    EnsembleModel ensemble = fit_super_learner({constant, ridge}, data.x, data.y, 10, 42);
    REQUIRE(ensemble.weights.size() == 2);
    CHECK(ensemble.weights[1] > 0.9);
}

TEST_CASE("super learner contract: never worse than the best member") {
    LearnerSpec constant;
    constant.kind = LearnerKind::constant;
    LearnerSpec ridge;
    ridge.kind = LearnerKind::ridge_logistic;
    LearnerSpec gbt;
    gbt.kind = LearnerKind::gbt;
    gbt.gbt.tree_count = 20;
    gbt.gbt.min_leaf = 5;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        LogisticData data = simulate_logistic(120, 2, seed);
        EnsembleModel ensemble =
            fit_super_learner({constant, ridge, gbt}, data.x, data.y, 5, seed);
        double best = *std::min_element(ensemble.member_cv_risk.begin(),
                                        ensemble.member_cv_risk.end());
        CHECK(ensemble.ensemble_cv_risk <= best + 1e-6);
        CHECK(std::abs(ensemble.weights.sum() - 1.0) < 1e-8);
        CHECK(ensemble.weights.minCoeff() >= 0.0);
    }
}

TEST_CASE("ensemble prediction equals the weight blend of members") {
    LogisticData data = simulate_logistic(100, 2, 31);
    LearnerSpec constant;
    constant.kind = LearnerKind::constant;
    LearnerSpec ridge;
    ridge.kind = LearnerKind::ridge_logistic;
    EnsembleModel ensemble = fit_super_learner({constant, ridge}, data.x, data.y, 5, 9);
    Vector blend = Vector::Zero(data.y.size());
    for (std::size_t m = 0; m < ensemble.members.size(); ++m)
        blend += ensemble.weights[static_cast<Eigen::Index>(m)] *
                 ensemble.members[m]->predict(data.x);
    Vector pred = ensemble.predict(data.x);
    for (Eigen::Index i = 0; i < pred.size(); ++i)
        CHECK(std::abs(pred[i] - clamp_prob(blend[i])) < 1e-12);
}

TEST_CASE("predictions live inside the clamp range") {
    LogisticData data = simulate_logistic(80, 1, 17);
    GbtParams params;
    params.min_leaf = 2;
    for (const ModelPtr& model :
         {fit_constant(data.x, data.y), fit_ridge_logistic(data.x, data.y, 0.5),
          fit_gbt(data.x, data.y, params)}) {
        Vector pred = model->predict(data.x * 50.0);
        CHECK(pred.minCoeff() >= 1e-6);
        CHECK(pred.maxCoeff() <= 1.0 - 1e-6);
    }
}

TEST_CASE("predict rejects a column-count mismatch") {
    LogisticData data = simulate_logistic(30, 2, 19);
    auto model = fit_ridge_logistic(data.x, data.y, 1.0);
    Matrix wrong = Matrix::Random(5, 3);
    CHECK_THROWS_AS(model->predict(wrong), EstimationError);
}

TEST_CASE("refits are bitwise identical") {
    LogisticData data = simulate_logistic(90, 2, 23);
    LearnerSpec ridge;
    ridge.kind = LearnerKind::ridge_logistic;
    LearnerSpec gbt;
    gbt.kind = LearnerKind::gbt;
    gbt.gbt.tree_count = 15;
    gbt.gbt.min_leaf = 4;
    EnsembleModel e1 = fit_super_learner({ridge, gbt}, data.x, data.y, 5, 77);
    EnsembleModel e2 = fit_super_learner({ridge, gbt}, data.x, data.y, 5, 77);
    CHECK(e1.predict(data.x) == e2.predict(data.x));
    CHECK(e1.weights == e2.weights);
}

TEST_CASE("spec validation bounds hyperparameters") {
    LearnerSpec spec;
    spec.kind = LearnerKind::gbt;
    spec.gbt.max_depth = 9;
    CHECK_THROWS_AS(spec.validate(), ConfigError);
    spec.gbt.max_depth = 3;
    spec.gbt.learning_rate = 0.0;
    CHECK_THROWS_AS(spec.validate(), ConfigError);
    spec = LearnerSpec{};
    spec.kind = LearnerKind::ridge_logistic;
    spec.lambda = -1.0;
    CHECK_THROWS_AS(spec.validate(), ConfigError);
}
