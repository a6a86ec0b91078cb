#pragma once

#include <string>
#include <utility>

#include "ips/common.hpp"
#include "ips/estimator.hpp"

namespace ips {

enum class Multiplier { rademacher, gaussian };

struct BootstrapConfig {
    int replicates = 5000;
    Multiplier multiplier = Multiplier::rademacher;
    double alpha = 0.05;
    std::uint64_t seed = 0;
    int threads = 1;

    void validate() const;
};

// Wald interval psi_hat +/- z_{1-alpha/2} * sigma_hat / sqrt(n).
std::pair<double, double> pointwise_ci(double psi_hat, double sigma_hat, int n, double alpha);

// Multiplier-bootstrap uniform band over the grid. Standardized centered
// influence values are multiplied by i.i.d. mean-0 variance-1 draws; the
// critical value is the inverted-CDF (1-alpha) quantile of the sup statistic.
// Zero-variance columns contribute nothing to the sup and get zero-width
// bands. The per-replicate multiplier stream depends only on (seed, replicate
// index), so results are independent of the thread count.
EffectCurve uniform_band(const InfluenceMatrix& influence, const EffectCurve& curve,
                         const BootstrapConfig& config);

enum class IntervalSource { pointwise, uniform };

struct ContrastResult {
    double delta_lo = 0.0;
    double delta_hi = 0.0;
    double lo_interval_lo = 0.0, lo_interval_hi = 0.0;
    double hi_interval_lo = 0.0, hi_interval_hi = 0.0;
    bool overlap = true;
    bool reject = false;

    bool has_difference = false;
    double difference = 0.0;
    double difference_se = 0.0;
    double difference_lo = 0.0, difference_hi = 0.0;

    std::string to_json() const;
};

// Interval-overlap test: reject when the two intervals are disjoint.
ContrastResult contrast_overlap_test(const EffectCurve& curve, double delta_lo, double delta_hi,
                                     IntervalSource use = IntervalSource::uniform);

// Direct Wald test of psi(delta_hi) - psi(delta_lo) via per-unit influence
// differences; sharper than the interval-overlap check.
ContrastResult contrast_difference(const InfluenceMatrix& influence, double delta_lo,
                                   double delta_hi, double alpha);

}  // namespace ips
