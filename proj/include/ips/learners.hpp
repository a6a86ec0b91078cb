#pragma once

#include <memory>
#include <string>
#include <vector>

#include "ips/common.hpp"

namespace ips {

enum class LearnerKind { constant, ridge_logistic, gbt };

struct GbtParams {
    int tree_count = 100;
    int max_depth = 2;
    double learning_rate = 0.1;
    int min_leaf = 10;
};

struct LearnerSpec {
    LearnerKind kind = LearnerKind::ridge_logistic;
    double lambda = 1.0;  // ridge penalty
    GbtParams gbt;

    void validate() const;
    std::string name() const;
};

class FittedModel {
  public:
    virtual ~FittedModel() = default;

    // Returns probabilities in [1e-6, 1-1e-6]; throws on column-count mismatch.
    Vector predict(const Matrix& x) const;

    int feature_count() const { return feature_count_; }
    int iterations() const { return iterations_; }
    bool converged() const { return converged_; }

  protected:
    virtual Vector predict_impl(const Matrix& x) const = 0;

    int feature_count_ = 0;
    int iterations_ = 0;
    bool converged_ = true;
};

using ModelPtr = std::shared_ptr<const FittedModel>;

ModelPtr fit_constant(const Matrix& x, const Vector& y);
ModelPtr fit_ridge_logistic(const Matrix& x, const Vector& y, double lambda);
ModelPtr fit_gbt(const Matrix& x, const Vector& y, const GbtParams& params);
ModelPtr fit_learner(const LearnerSpec& spec, const Matrix& x, const Vector& y);

// Ridge-logistic coefficients (intercept first); exposed for verification.
Vector ridge_logistic_coefficients(const FittedModel& model);

struct EnsembleModel {
    std::vector<ModelPtr> members;
    std::vector<std::string> member_names;
    Vector weights;                    // simplex: nonnegative, sums to 1
    std::vector<double> member_cv_risk;
    double ensemble_cv_risk = 0.0;
    int feature_count = 0;

    Vector predict(const Matrix& x) const;
};

// Cross-validated convex stacking on log-loss. Folds are stratified by y;
// the simplex weight search uses exponentiated-gradient descent with step
// halving. Members that fail to fit are dropped with a warning unless every
// member fails.
EnsembleModel fit_super_learner(const std::vector<LearnerSpec>& specs, const Matrix& x,
                                const Vector& y, int k_folds, std::uint64_t seed);

}  // namespace ips
