#include <cctype>
#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tta/config.hpp"
#include "tta/harness.hpp"

namespace {

struct CliState {
    std::string config_path;
    std::vector<std::string> overrides;  // key=value pairs, applied in order
    std::string output_dir;
    std::string method;
    long long seed_override = -1;
};

void add_common_options(CLI::App* cmd, CliState& state) {
    cmd->add_option("-c,--config", state.config_path, "Path to a key=value config file");
    cmd->add_option("-s,--set", state.overrides,
                    "Override a config key, e.g. --set lr=1e-4 (repeatable)");
    cmd->add_option("--seed", state.seed_override,
                    "Replace the seed list with this single seed");
    cmd->add_option("-o,--output-dir", state.output_dir,
                    "Output directory (same as --set output_dir=...)");
    cmd->add_option("--method", state.method, "Run a single method: ours|erm|bn|tent|pl");
}

tta::RunConfig load_config(const CliState& state) {
    tta::RunConfig cfg = state.config_path.empty()
                             ? tta::RunConfig{}
                             : tta::parse_config_file(state.config_path);
    for (const std::string& kv : state.overrides) {
        const std::size_t eq = kv.find('=');
        if (eq == std::string::npos) {
            throw tta::ConfigError("--set expects key=value, got '" + kv + "'");
        }
        tta::apply_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!state.method.empty()) tta::apply_override(cfg, "method", state.method);
    if (!state.output_dir.empty()) tta::apply_override(cfg, "output_dir", state.output_dir);
    if (state.seed_override >= 0) {
        cfg.seeds = {static_cast<std::uint64_t>(state.seed_override)};
    }
    tta::validate(cfg);
    return cfg;
}

void print_summary(const tta::CommandResult& result) {
    for (const auto& [label, s] : result.summary) {
        std::printf("%-18s mean %.4f  std %.4f  per-seed [", label.c_str(), s.mean, s.stddev);
        for (std::size_t i = 0; i < s.per_seed.size(); ++i) {
            std::printf("%s%.4f", i ? ", " : "", s.per_seed[i]);
        }
        std::printf("]%s\n", s.flagged ? "  (flagged: skipped batches)" : "");
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Test-time adaptation on synthetic domain-shift benchmarks"};
    app.require_subcommand(1);

    CliState state;
    std::string sweep_parameter;
    std::string sweep_values;

    CLI::App* train = app.add_subcommand("train-source", "Train and checkpoint source models");
    CLI::App* adapt = app.add_subcommand("adapt", "Adapt one method over the configured seeds");
    CLI::App* run = app.add_subcommand("run", "Run every configured method x seed end to end");
    CLI::App* ablate = app.add_subcommand("ablate", "Run the four-rung component ladder");
    CLI::App* sweep = app.add_subcommand("sweep", "Sweep k, m or lambda over a value list");
    for (CLI::App* cmd : {train, adapt, run, ablate, sweep}) add_common_options(cmd, state);
    sweep->add_option("-p,--parameter", sweep_parameter, "Swept parameter: k|m|lambda")
        ->required();
    sweep->add_option("-v,--values", sweep_values, "Comma-separated value list, e.g. 1,3,5")
        ->required();

    CLI11_PARSE(app, argc, argv);

    try {
        const tta::RunConfig cfg = load_config(state);
        if (train->parsed()) {
            tta::command_train_source(cfg);
            std::printf("source checkpoints written to %s\n", cfg.output_dir.c_str());
        } else if (adapt->parsed()) {
            print_summary(tta::command_adapt(cfg));
        } else if (run->parsed()) {
            print_summary(tta::command_run(cfg));
        } else if (ablate->parsed()) {
            print_summary(tta::command_ablate(cfg));
        } else if (sweep->parsed()) {
            std::vector<std::string> values;
            std::string cell;
            for (char ch : sweep_values + ",") {
                if (ch == ',') {
                    if (!cell.empty()) values.push_back(cell);
                    cell.clear();
                } else if (!std::isspace(static_cast<unsigned char>(ch))) {
                    cell += ch;
                }
            }
            print_summary(tta::command_sweep(cfg, sweep_parameter, values));
        }
        return 0;
    } catch (const tta::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
