#include "ips/learners.hpp"

#include <algorithm>
#include <iostream>
#include <numeric>

namespace ips {

void LearnerSpec::validate() const {
    switch (kind) {
        case LearnerKind::constant:
            break;
        case LearnerKind::ridge_logistic:
            if (!(lambda >= 0.0) || !std::isfinite(lambda))
                throw ConfigError("ridge_logistic: lambda must be finite and >= 0");
            break;
        case LearnerKind::gbt:
            if (gbt.tree_count < 1) throw ConfigError("gbt: tree_count must be >= 1");
            if (gbt.max_depth < 1 || gbt.max_depth > 8)
                throw ConfigError("gbt: max_depth must lie in [1, 8]");
            if (!(gbt.learning_rate > 0.0) || !(gbt.learning_rate <= 1.0))
                throw ConfigError("gbt: learning_rate must lie in (0, 1]");
            if (gbt.min_leaf < 1) throw ConfigError("gbt: min_leaf must be >= 1");
            break;
    }
}

std::string LearnerSpec::name() const {
    switch (kind) {
        case LearnerKind::constant:
            return "constant";
        case LearnerKind::ridge_logistic:
            return "ridge_logistic(lambda=" + format_double(lambda) + ")";
        case LearnerKind::gbt:
            return "gbt(trees=" + std::to_string(gbt.tree_count) +
                   ",depth=" + std::to_string(gbt.max_depth) +
                   ",rate=" + format_double(gbt.learning_rate) +
                   ",min_leaf=" + std::to_string(gbt.min_leaf) + ")";
    }
    return "unknown";
}

Vector FittedModel::predict(const Matrix& x) const {
    if (static_cast<int>(x.cols()) != feature_count_)
        throw EstimationError("predict: expected " + std::to_string(feature_count_) +
                              " columns, got " + std::to_string(x.cols()));
    Vector p = predict_impl(x);
    for (Eigen::Index i = 0; i < p.size(); ++i) p[i] = clamp_prob(p[i]);
    return p;
}

namespace {

class ConstantModel final : public FittedModel {
  public:
    ConstantModel(int p, double value) : value_(value) { feature_count_ = p; }

  private:
    Vector predict_impl(const Matrix& x) const override {
        return Vector::Constant(x.rows(), value_);
    }
    double value_;
};

class RidgeLogisticModel final : public FittedModel {
  public:
    RidgeLogisticModel(int p, Vector beta, int iters, bool converged) : beta_(std::move(beta)) {
        feature_count_ = p;
        iterations_ = iters;
        converged_ = converged;
    }

    const Vector& coefficients() const { return beta_; }

  private:
    Vector predict_impl(const Matrix& x) const override {
        Vector eta = Vector::Constant(x.rows(), beta_[0]) + x * beta_.tail(beta_.size() - 1);
        return eta.unaryExpr([](double t) { return logistic(t); });
    }
    Vector beta_;  // intercept first
};

struct TreeNode {
    int feature = -1;       // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
};

struct Tree {
    std::vector<TreeNode> nodes;

    double score(const double* row) const {
        int k = 0;
        while (nodes[k].feature >= 0)
            k = row[nodes[k].feature] <= nodes[k].threshold ? nodes[k].left : nodes[k].right;
        return nodes[k].value;
    }
};

class GbtModel final : public FittedModel {
  public:
    GbtModel(int p, double base_score, double learning_rate, std::vector<Tree> trees,
             int iters)
        : base_score_(base_score), learning_rate_(learning_rate), trees_(std::move(trees)) {
        feature_count_ = p;
        iterations_ = iters;
    }

  private:
    Vector predict_impl(const Matrix& x) const override {
        Vector out(x.rows());
        std::vector<double> row(x.cols());
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            for (Eigen::Index j = 0; j < x.cols(); ++j) row[j] = x(i, j);
            double f = base_score_;
            for (const auto& t : trees_) f += learning_rate_ * t.score(row.data());
            out[i] = logistic(f);
        }
        return out;
    }

    double base_score_;
    double learning_rate_;
    std::vector<Tree> trees_;
};

// Recursive builder using per-feature pre-sorted orders; split criterion is
// exact variance reduction of the residuals, tie broken toward the lowest
// feature index and then the lowest threshold.
class TreeBuilder {
  public:
    TreeBuilder(const Matrix& x, const std::vector<std::vector<int>>& order,
                const Vector& grad, const Vector& hess, const GbtParams& params)
        : x_(x), order_(order), grad_(grad), hess_(hess), params_(params),
          in_node_(x.rows(), 0) {}

    Tree build() {
        Tree tree;
        std::vector<int> all(x_.rows());
        std::iota(all.begin(), all.end(), 0);
        grow(tree, all, 0);
        return tree;
    }

  private:
    int grow(Tree& tree, const std::vector<int>& rows, int depth) {
        const int node_id = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();

        double g_sum = 0.0, h_sum = 0.0;
        for (int r : rows) {
            g_sum += grad_[r];
            h_sum += hess_[r];
        }

        int best_feature = -1;
        double best_threshold = 0.0;
        double best_gain = 0.0;
        const int n_rows = static_cast<int>(rows.size());
        if (depth < params_.max_depth && n_rows >= 2 * params_.min_leaf) {
            for (int r : rows) in_node_[r] = 1;
            const double total = g_sum * g_sum / n_rows;
            for (int j = 0; j < static_cast<int>(x_.cols()); ++j) {
                double left_sum = 0.0;
                int left_count = 0;
                double prev_value = 0.0;
                bool have_prev = false;
                for (int idx : order_[j]) {
                    if (!in_node_[idx]) continue;
                    const double value = x_(idx, j);
                    if (have_prev && value > prev_value && left_count >= params_.min_leaf &&
                        n_rows - left_count >= params_.min_leaf) {
                        const double right_sum = g_sum - left_sum;
                        const double gain = left_sum * left_sum / left_count +
                                            right_sum * right_sum / (n_rows - left_count) - total;
                        const double threshold = prev_value + (value - prev_value) / 2.0;
                        if (gain > best_gain + 1e-12) {
                            best_gain = gain;
                            best_feature = j;
                            best_threshold = threshold;
                        }
                    }
                    left_sum += grad_[idx];
                    ++left_count;
                    prev_value = value;
                    have_prev = true;
                }
            }
            for (int r : rows) in_node_[r] = 0;
        }

        if (best_feature < 0) {
            // Newton leaf value on the logistic loss.
            tree.nodes[node_id].value = h_sum > 0.0 ? g_sum / h_sum : 0.0;
            return node_id;
        }

        std::vector<int> left_rows, right_rows;
        left_rows.reserve(rows.size());
        right_rows.reserve(rows.size());
        for (int r : rows)
            (x_(r, best_feature) <= best_threshold ? left_rows : right_rows).push_back(r);
        const int left_id = grow(tree, left_rows, depth + 1);
        const int right_id = grow(tree, right_rows, depth + 1);
        tree.nodes[node_id].feature = best_feature;
        tree.nodes[node_id].threshold = best_threshold;
        tree.nodes[node_id].left = left_id;
        tree.nodes[node_id].right = right_id;
        return node_id;
    }

    const Matrix& x_;
    const std::vector<std::vector<int>>& order_;
    const Vector& grad_;
    const Vector& hess_;
    const GbtParams& params_;
    std::vector<char> in_node_;
};

}  // namespace

ModelPtr fit_constant(const Matrix& x, const Vector& y) {
    if (y.size() < 1) throw EstimationError("fit_constant: empty data");
    return std::make_shared<ConstantModel>(static_cast<int>(x.cols()), clamp_prob(y.mean()));
}

ModelPtr fit_ridge_logistic(const Matrix& x, const Vector& y, double lambda) {
    const int n = static_cast<int>(x.rows());
    const int p = static_cast<int>(x.cols());
    if (n < 2) throw EstimationError("fit_ridge_logistic: need at least 2 rows");
    if (!(lambda >= 0.0)) throw EstimationError("fit_ridge_logistic: lambda must be >= 0");
    if (!x.allFinite()) throw EstimationError("fit_ridge_logistic: non-finite design values");

    Matrix design(n, p + 1);
    design.col(0).setOnes();
    design.rightCols(p) = x;

    Vector beta = Vector::Zero(p + 1);
    Vector penalty = Vector::Constant(p + 1, lambda);
    penalty[0] = 0.0;  // intercept unpenalized

    const int max_iter = 100;
    const double tol = 1e-8;
    bool converged = false;
    int iter = 0;
    for (; iter < max_iter; ++iter) {
        Vector eta = design * beta;
        Vector mu = eta.unaryExpr([](double t) { return logistic(t); });
        Vector w = mu.array() * (1.0 - mu.array());
        w = w.array().max(1e-10);
        // Newton step in working-response form.
        Vector z = eta.array() + (y - mu).array() / w.array();
        Matrix lhs = design.transpose() * w.asDiagonal() * design;
        lhs.diagonal() += penalty;
        Vector rhs = design.transpose() * (w.asDiagonal() * z);
        Vector next = lhs.ldlt().solve(rhs);
        double delta = (next - beta).cwiseAbs().maxCoeff();
        beta = next;
        if (delta < tol) {
            converged = true;
            ++iter;
            break;
        }
    }
    return std::make_shared<RidgeLogisticModel>(p, std::move(beta), iter, converged);
}

Vector ridge_logistic_coefficients(const FittedModel& model) {
    const auto* ridge = dynamic_cast<const RidgeLogisticModel*>(&model);
    if (!ridge) throw EstimationError("not a ridge_logistic model");
    return ridge->coefficients();
}

ModelPtr fit_gbt(const Matrix& x, const Vector& y, const GbtParams& params) {
    LearnerSpec spec;
    spec.kind = LearnerKind::gbt;
    spec.gbt = params;
    spec.validate();
    const int n = static_cast<int>(x.rows());
    const int p = static_cast<int>(x.cols());
    if (n < 2 * params.min_leaf)
        throw EstimationError("fit_gbt: need at least 2*min_leaf rows");
    if (!x.allFinite()) throw EstimationError("fit_gbt: non-finite design values");

    const double y_mean = y.mean();
    const double base_score = logit(clamp_prob(y_mean));
    std::vector<Tree> trees;
    if (y_mean > 0.0 && y_mean < 1.0) {
        // Per-feature sorted row orders, computed once per fit.
        std::vector<std::vector<int>> order(p);
        for (int j = 0; j < p; ++j) {
            order[j].resize(n);
            std::iota(order[j].begin(), order[j].end(), 0);
            const auto col = x.col(j);
            std::stable_sort(order[j].begin(), order[j].end(),
                             [&col](int a, int b) { return col[a] < col[b]; });
        }

        Vector score = Vector::Constant(n, base_score);
        Vector grad(n), hess(n);
        trees.reserve(params.tree_count);
        std::vector<double> row(p);
        for (int t = 0; t < params.tree_count; ++t) {
            for (int i = 0; i < n; ++i) {
                double pr = logistic(score[i]);
                grad[i] = y[i] - pr;        // negative gradient of logistic loss
                hess[i] = pr * (1.0 - pr);  // curvature for the Newton leaf value
            }
            TreeBuilder builder(x, order, grad, hess, params);
            trees.push_back(builder.build());
            const Tree& tree = trees.back();
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < p; ++j) row[j] = x(i, j);
                score[i] += params.learning_rate * tree.score(row.data());
            }
        }
    }
    return std::make_shared<GbtModel>(p, base_score, params.learning_rate, std::move(trees),
                                      static_cast<int>(trees.size()));
}

ModelPtr fit_learner(const LearnerSpec& spec, const Matrix& x, const Vector& y) {
    spec.validate();
    switch (spec.kind) {
        case LearnerKind::constant:
            return fit_constant(x, y);
        case LearnerKind::ridge_logistic:
            return fit_ridge_logistic(x, y, spec.lambda);
        case LearnerKind::gbt:
            return fit_gbt(x, y, spec.gbt);
    }
    throw ConfigError("unknown learner kind");
}

Vector EnsembleModel::predict(const Matrix& x) const {
    Vector blend = Vector::Zero(x.rows());
    for (std::size_t m = 0; m < members.size(); ++m)
        blend += weights[static_cast<Eigen::Index>(m)] * members[m]->predict(x);
    for (Eigen::Index i = 0; i < blend.size(); ++i) blend[i] = clamp_prob(blend[i]);
    return blend;
}

namespace {

// y-stratified fold assignment: each class is shuffled separately and dealt
// round-robin so every fold sees both classes whenever possible.
std::vector<int> stratified_folds(const Vector& y, int k, std::uint64_t seed) {
    const int n = static_cast<int>(y.size());
    std::vector<int> fold_of(n, 0);
    std::vector<int> ones, zeros;
    for (int i = 0; i < n; ++i) (y[i] > 0.5 ? ones : zeros).push_back(i);
    auto rng = stream_rng(seed, 0x5f0ULL);
    int next = 0;
    for (auto* cls : {&ones, &zeros}) {
        std::shuffle(cls->begin(), cls->end(), rng);
        for (int idx : *cls) {
            fold_of[idx] = next;
            next = (next + 1) % k;
        }
    }
    return fold_of;
}

double simplex_risk(const Matrix& level_one, const Vector& y, const Vector& w) {
    return log_loss(y, level_one * w);
}

Vector simplex_risk_gradient(const Matrix& level_one, const Vector& y, const Vector& w) {
    Vector blend = level_one * w;
    Vector inner(y.size());
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        double p = clamp_prob(blend[i]);
        inner[i] = y[i] > 0.5 ? -1.0 / p : 1.0 / (1.0 - p);
    }
    return level_one.transpose() * inner / static_cast<double>(y.size());
}

// Exponentiated-gradient descent over the simplex with step halving.
Vector optimize_simplex_weights(const Matrix& level_one, const Vector& y) {
    const int m = static_cast<int>(level_one.cols());
    Vector w = Vector::Constant(m, 1.0 / m);
    double risk = simplex_risk(level_one, y, w);
    double step = 1.0;
    const int max_iter = 10000;
    for (int it = 0; it < max_iter; ++it) {
        Vector g = simplex_risk_gradient(level_one, y, w);
        bool improved = false;
        double local = step;
        while (local > 1e-12) {
            Vector cand = w;
            for (int j = 0; j < m; ++j) cand[j] = w[j] * std::exp(-local * g[j]);
            double total = cand.sum();
            if (total <= 0.0 || !std::isfinite(total)) {
                local /= 2.0;
                continue;
            }
            cand /= total;
            double cand_risk = simplex_risk(level_one, y, cand);
            if (cand_risk < risk) {
                improved = true;
                bool done = risk - cand_risk < 1e-10;
                w = cand;
                risk = cand_risk;
                step = local;
                if (done) return w;
                break;
            }
            local /= 2.0;
        }
        if (!improved) break;
    }
    return w;
}

}  // namespace

EnsembleModel fit_super_learner(const std::vector<LearnerSpec>& specs, const Matrix& x,
                                const Vector& y, int k_folds, std::uint64_t seed) {
    if (specs.empty()) throw ConfigError("fit_super_learner: no learner specs");
    const int n = static_cast<int>(x.rows());
    if (k_folds < 2 || k_folds > n)
        throw ConfigError("fit_super_learner: k_folds must lie in [2, n]");
    for (const auto& s : specs) s.validate();

    const std::vector<int> fold_of = stratified_folds(y, k_folds, seed);

    // Level-one out-of-fold predictions, one column per surviving member.
    std::vector<int> alive;
    std::vector<Vector> oof_cols;
    for (int m = 0; m < static_cast<int>(specs.size()); ++m) {
        Vector col = Vector::Zero(n);
        bool ok = true;
        std::string why;
        for (int f = 0; f < k_folds && ok; ++f) {
            std::vector<int> train, test;
            for (int i = 0; i < n; ++i) (fold_of[i] == f ? test : train).push_back(i);
            if (train.empty() || test.empty()) continue;
            Matrix xt(train.size(), x.cols());
            Vector yt(train.size());
            for (std::size_t i = 0; i < train.size(); ++i) {
                xt.row(i) = x.row(train[i]);
                yt[i] = y[train[i]];
            }
            Matrix xv(test.size(), x.cols());
            for (std::size_t i = 0; i < test.size(); ++i) xv.row(i) = x.row(test[i]);
            try {
                ModelPtr model = fit_learner(specs[m], xt, yt);
                Vector pred = model->predict(xv);
                for (std::size_t i = 0; i < test.size(); ++i) col[test[i]] = pred[i];
            } catch (const std::exception& e) {
                ok = false;
                why = e.what();
            }
        }
        if (ok) {
            alive.push_back(m);
            oof_cols.push_back(std::move(col));
        } else {
            std::cerr << "warning: dropping learner " << specs[m].name() << " (" << why << ")\n";
        }
    }
    if (alive.empty()) throw EstimationError("fit_super_learner: every member failed to fit");

    const int m_alive = static_cast<int>(alive.size());
    Matrix level_one(n, m_alive);
    for (int m = 0; m < m_alive; ++m) level_one.col(m) = oof_cols[m];

    Vector weights;
    if (m_alive == 1) {
        weights = Vector::Constant(1, 1.0);
    } else {
        weights = optimize_simplex_weights(level_one, y);
        // The simplex contains every vertex; never do worse than the best member.
        double best_risk = simplex_risk(level_one, y, weights);
        for (int m = 0; m < m_alive; ++m) {
            Vector vertex = Vector::Zero(m_alive);
            vertex[m] = 1.0;
            double r = simplex_risk(level_one, y, vertex);
            if (r < best_risk) {
                best_risk = r;
                weights = vertex;
            }
        }
    }

    EnsembleModel out;
    out.weights = weights;
    out.feature_count = static_cast<int>(x.cols());
    out.ensemble_cv_risk = simplex_risk(level_one, y, weights);
    for (int m = 0; m < m_alive; ++m) {
        out.member_names.push_back(specs[alive[m]].name());
        out.member_cv_risk.push_back(log_loss(y, level_one.col(m)));
        out.members.push_back(fit_learner(specs[alive[m]], x, y));
    }
    return out;
}

}  // namespace ips
