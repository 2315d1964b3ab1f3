#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tta/adapt.hpp"
#include "tta/config.hpp"

// Experiment orchestration: builds the per-seed pipeline (benchmark data,
// source model, target stream), executes (method x seed) adaptation runs
// sequentially, and emits per-run CSVs plus an aggregate JSON summary.

namespace tta {

// Everything one seed's runs share. Building it is deterministic in
// (config, seed); methods compared under a seed see identical source models
// and identical target streams.
struct SeedContext {
    std::uint64_t seed = 0;
    Model source_model;
    double source_val_accuracy = 0.0;
    std::vector<Sample> target_samples;
    Stream target_stream;
};

// Derived sub-seed for independent pipeline stages.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

std::vector<std::vector<Sample>> build_source_samples(const RunConfig& cfg, std::uint64_t seed);

// Trains the source model (or loads `checkpoint` when nonempty and present)
// and materializes the target stream for the configured benchmark.
SeedContext make_seed_context(const RunConfig& cfg, std::uint64_t seed,
                              const std::string& checkpoint = "");

struct RunResult {
    std::string run_id;  // {label}_s{seed}
    std::string label;   // method name, ablation rung, or sweep point
    Method method = Method::ours;
    std::uint64_t seed = 0;
    Metrics metrics;
};

RunResult execute_run(const SeedContext& ctx, const AdaptConfig& acfg, const std::string& label);

struct MethodSummary {
    double mean = 0.0;
    double stddev = 0.0;  // sample standard deviation; 0 for a single seed
    std::vector<double> per_seed;
    std::vector<int> skipped_per_seed;
    bool flagged = false;  // any seed had skipped batches
};

MethodSummary summarize(const std::vector<const RunResult*>& runs);

void write_run_csv(const std::string& path, const RunResult& run);
void write_summary_json(const std::string& path,
                        const std::vector<std::pair<std::string, MethodSummary>>& rows,
                        const RunConfig& cfg);
void write_metadata_json(const std::string& path, const std::string& command,
                         const RunConfig& cfg);

struct CommandResult {
    std::vector<RunResult> runs;
    std::vector<std::pair<std::string, MethodSummary>> summary;
};

// run: every configured method x seed on the configured benchmark.
CommandResult command_run(const RunConfig& cfg);

// adapt: a single method (the first configured) x seeds; reuses saved source
// checkpoints from output_dir when present.
CommandResult command_adapt(const RunConfig& cfg);

// train-source: train and checkpoint the source model for every seed.
void command_train_source(const RunConfig& cfg);

// ablate: the four-rung component ladder of the full method.
CommandResult command_ablate(const RunConfig& cfg);

// sweep: one run per (value, seed) of the swept parameter (k, m or lambda);
// also writes sweep_<parameter>.csv with value/mean/std rows.
CommandResult command_sweep(const RunConfig& cfg, const std::string& parameter,
                            const std::vector<std::string>& values);

std::string source_checkpoint_path(const RunConfig& cfg, std::uint64_t seed);

}  // namespace tta
