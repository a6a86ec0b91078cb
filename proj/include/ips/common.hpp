#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace ips {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Exit-code taxonomy: config -> 2, data -> 3, estimation -> 4.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct EstimationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Probability clamp shared by every learner prediction path.
inline constexpr double kProbClamp = 1e-6;

inline double clamp_prob(double p) {
    if (p < kProbClamp) return kProbClamp;
    if (p > 1.0 - kProbClamp) return 1.0 - kProbClamp;
    return p;
}

inline double logistic(double t) { return 1.0 / (1.0 + std::exp(-t)); }

inline double logit(double p) { return std::log(p / (1.0 - p)); }

// splitmix64 finalizer; used to derive independent substreams from
// (seed, index) pairs so parallel work is schedule-independent.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t index) {
    return std::mt19937_64(mix_seed(seed, index));
}

// Standard normal quantile (Acklam's rational approximation refined with
// one Halley step through erfc; |error| < 1e-14 on (0,1)).
double normal_quantile(double p);

double sample_mean(const Vector& v);
double sample_sd(const Vector& v);  // n-1 denominator; 0 when n < 2

// Mean logistic loss with the standard probability clamp.
double log_loss(const Vector& y, const Vector& p);

// Static-chunked parallel map; fn(i) must write only to slot i of some
// preallocated output so results do not depend on the schedule.
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& fn);

int hardware_threads();

// FNV-1a over a string; stable across runs and platforms, used for config digests.
std::string fnv1a_hex(const std::string& s);

// Shortest round-trippable decimal rendering of a double.
std::string format_double(double v);

}  // namespace ips
