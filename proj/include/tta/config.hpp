#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tta/adapt.hpp"
#include "tta/data.hpp"

// Flat key=value run configuration. '#' starts a comment; whitespace around
// keys and values is ignored; unknown keys are rejected by name.

namespace tta {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    // Adaptation
    std::vector<std::string> methods = {"ours", "erm", "bn", "tent", "pl"};
    double lr = 1e-3;
    double lambda = 0.1;
    int k = 3;
    std::optional<int> m = 20;  // nullopt = entropy filter disabled
    int batch_size = 64;
    double pl_threshold = 0.9;
    UpdateScope update_scope = UpdateScope::all;
    bool sd = true;
    bool ef = true;
    bool cf = true;
    bool mslc = true;
    bool report_post_update = false;
    std::int64_t bank_capacity = 0;

    // Benchmark
    std::string benchmark = "covariate";  // covariate | label-shift
    double shift_strength = 1.0;
    BenchmarkParams bench;
    std::vector<double> label_shift_prior;  // empty = preset prior

    // Source training
    int source_epochs = 30;
    double source_lr = 1e-3;
    double val_fraction = 0.1;

    // Harness
    std::vector<std::uint64_t> seeds = {0, 1, 2};
    std::string output_dir = "out";
};

// Parses `key = value` lines. Throws ConfigError naming the offending key or
// value on any problem.
RunConfig parse_config_text(const std::string& text);
RunConfig parse_config_file(const std::string& path);

// Applies one key=value pair (same keys as the file format). Used for CLI
// overrides; callers re-run validate() afterwards.
void apply_override(RunConfig& cfg, const std::string& key, const std::string& value);

// Cross-field rules (toggle dependencies, ranges). Throws ConfigError.
void validate(const RunConfig& cfg);

// The effective configuration as ordered key/value strings, for echoing into
// summaries. Parsing the echo reproduces the config.
std::vector<std::pair<std::string, std::string>> config_echo(const RunConfig& cfg);

// The adaptation settings for one (method, seed) run.
AdaptConfig to_adapt_config(const RunConfig& cfg, Method method, std::uint64_t seed);

}  // namespace tta
