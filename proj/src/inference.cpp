#include "ips/inference.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ips {

void BootstrapConfig::validate() const {
    if (replicates < 100) throw ConfigError("bootstrap: replicates must be >= 100");
    if (!(alpha > 0.0) || !(alpha < 1.0)) throw ConfigError("bootstrap: alpha must lie in (0, 1)");
}

std::pair<double, double> pointwise_ci(double psi_hat, double sigma_hat, int n, double alpha) {
    if (sigma_hat < 0.0) throw EstimationError("pointwise_ci: sigma_hat must be >= 0");
    if (n < 2) throw EstimationError("pointwise_ci: n must be >= 2");
    if (alpha >= 1.0) return {psi_hat, psi_hat};
    const double z = normal_quantile(1.0 - alpha / 2.0);
    const double half = z * sigma_hat / std::sqrt(static_cast<double>(n));
    return {psi_hat - half, psi_hat + half};
}

EffectCurve uniform_band(const InfluenceMatrix& influence, const EffectCurve& curve,
                         const BootstrapConfig& config) {
    config.validate();
    const int n = static_cast<int>(influence.phi.rows());
    const int g = influence.grid.size();
    if (g != static_cast<int>(curve.points.size()))
        throw EstimationError("uniform_band: influence matrix and curve grids differ");
    for (int j = 0; j < g; ++j)
        if (influence.grid.values[j] != curve.points[j].delta)
            throw EstimationError("uniform_band: influence matrix and curve grids differ");

    // Standardized centered influence values; zero-sd columns mapped to zero.
    Matrix z(n, g);
    for (int j = 0; j < g; ++j) {
        const auto& pt = curve.points[j];
        if (pt.sigma > 0.0)
            z.col(j) = (influence.phi.col(j).array() - pt.estimate) / pt.sigma;
        else
            z.col(j).setZero();
    }

    const int B = config.replicates;
    std::vector<double> sup(B);
    const double root_n = std::sqrt(static_cast<double>(n));
    parallel_for(static_cast<std::size_t>(B), config.threads, [&](std::size_t b) {
        auto rng = stream_rng(config.seed, 0xb00ceULL + b);
        Vector xi(n);
        if (config.multiplier == Multiplier::rademacher) {
            for (int i = 0; i < n; ++i) xi[i] = (rng() & 1ULL) ? 1.0 : -1.0;
        } else {
            std::normal_distribution<double> gauss(0.0, 1.0);
            for (int i = 0; i < n; ++i) xi[i] = gauss(rng);
        }
        Vector path = (xi.transpose() * z).transpose() / root_n;
        sup[b] = path.cwiseAbs().maxCoeff();
    });

    // Inverted-CDF quantile: the lowest order statistic m with m/B >= 1-alpha.
    std::sort(sup.begin(), sup.end());
    const int m = static_cast<int>(std::ceil(static_cast<double>(B) * (1.0 - config.alpha)));
    const double critical = sup[std::max(0, m - 1)];

    EffectCurve out = curve;
    out.band_critical_value = critical;
    for (int j = 0; j < g; ++j) {
        auto& pt = out.points[j];
        const double half = critical * pt.sigma / root_n;
        pt.band_lo = pt.estimate - half;
        pt.band_hi = pt.estimate + half;
    }
    return out;
}

namespace {

ContrastResult contrast_base(const EffectCurve& curve, double delta_lo, double delta_hi,
                             IntervalSource use) {
    const int ilo = curve.index_of(delta_lo);
    const int ihi = curve.index_of(delta_hi);
    const auto& plo = curve.points[ilo];
    const auto& phi = curve.points[ihi];
    ContrastResult result;
    result.delta_lo = delta_lo;
    result.delta_hi = delta_hi;
    if (use == IntervalSource::uniform) {
        if (!plo.band_lo || !phi.band_lo)
            throw EstimationError("contrast: uniform bands not computed on this curve");
        result.lo_interval_lo = *plo.band_lo;
        result.lo_interval_hi = *plo.band_hi;
        result.hi_interval_lo = *phi.band_lo;
        result.hi_interval_hi = *phi.band_hi;
    } else {
        result.lo_interval_lo = plo.pointwise_lo;
        result.lo_interval_hi = plo.pointwise_hi;
        result.hi_interval_lo = phi.pointwise_lo;
        result.hi_interval_hi = phi.pointwise_hi;
    }
    return result;
}

}  // namespace

ContrastResult contrast_overlap_test(const EffectCurve& curve, double delta_lo, double delta_hi,
                                     IntervalSource use) {
    ContrastResult result = contrast_base(curve, delta_lo, delta_hi, use);
    result.overlap = !(result.lo_interval_hi < result.hi_interval_lo ||
                       result.hi_interval_hi < result.lo_interval_lo);
    result.reject = !result.overlap;
    return result;
}

ContrastResult contrast_difference(const InfluenceMatrix& influence, double delta_lo,
                                   double delta_hi, double alpha) {
    const int ilo = influence.grid.index_of(delta_lo);
    const int ihi = influence.grid.index_of(delta_hi);
    const int n = static_cast<int>(influence.phi.rows());
    Vector diff = influence.phi.col(ihi) - influence.phi.col(ilo);

    ContrastResult result;
    result.delta_lo = delta_lo;
    result.delta_hi = delta_hi;
    result.has_difference = true;
    result.difference = diff.mean();
    result.difference_se = sample_sd(diff) / std::sqrt(static_cast<double>(n));
    auto ci = pointwise_ci(result.difference, sample_sd(diff), n, alpha);
    result.difference_lo = ci.first;
    result.difference_hi = ci.second;
    result.reject = result.difference_lo > 0.0 || result.difference_hi < 0.0;
    result.overlap = !result.reject;
    return result;
}

std::string ContrastResult::to_json() const {
    std::ostringstream os;
    os << "{\"schema_version\":1,\"delta_lo\":" << format_double(delta_lo)
       << ",\"delta_hi\":" << format_double(delta_hi);
    if (has_difference) {
        os << ",\"difference\":" << format_double(difference)
           << ",\"difference_se\":" << format_double(difference_se) << ",\"difference_interval\":["
           << format_double(difference_lo) << "," << format_double(difference_hi) << "]";
    } else {
        os << ",\"interval_at_delta_lo\":[" << format_double(lo_interval_lo) << ","
           << format_double(lo_interval_hi) << "],\"interval_at_delta_hi\":["
           << format_double(hi_interval_lo) << "," << format_double(hi_interval_hi)
           << "],\"overlap\":" << (overlap ? "true" : "false");
    }
    os << ",\"decision\":\"" << (reject ? "reject" : "fail_to_reject") << "\"}";
    return os.str();
}

}  // namespace ips
