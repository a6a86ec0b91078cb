#pragma once

#include <optional>
#include <string>

#include "ips/dataset.hpp"
#include "ips/estimator.hpp"
#include "ips/inference.hpp"

namespace ips {

struct GridConfig {
    double min = 0.1;
    double max = 10.0;
    int count = 100;
    GridSpacing spacing = GridSpacing::log;

    DeltaGrid build() const { return DeltaGrid::make(min, max, count, spacing); }
};

struct RunConfig {
    ColumnSchema schema;
    GridConfig grid;
    int k_folds = 2;
    LearnerConfig learners = LearnerConfig::defaults();
    BootstrapConfig bootstrap;
    double alpha = 0.05;
    std::uint64_t seed = 0;  // mandatory in the config file
    bool stratify = false;
    double contrast_lo = 0.1;
    double contrast_hi = 10.0;
    IntervalSource contrast_use = IntervalSource::uniform;
    int threads = 1;
    std::string digest;  // FNV-1a of the canonical config rendering
};

RunConfig parse_run_config(const std::string& path);

// Simulation suite override knobs; unset fields keep the suite defaults.
struct SimOverrides {
    std::optional<int> reps;
    std::optional<int> n;
    std::optional<std::uint64_t> seed;
    int threads = 1;
};

// Exit codes: 0 success, 1 suite threshold failure, 2 config error,
// 3 data validation error, 4 estimation failure.
int cmd_estimate(const std::string& config_path, const std::string& data_path,
                 const std::string& out_dir, int threads);
int cmd_summarize(const std::string& config_path, const std::string& data_path,
                  const std::string& out_dir);
int cmd_simulate(const std::string& suite, const std::string& out_dir,
                 const SimOverrides& overrides);

// Serialization helpers shared by the CLI and the test suites.
std::string curve_to_csv(const EffectCurve& curve);
std::string curve_to_json(const EffectCurve& curve);

}  // namespace ips
