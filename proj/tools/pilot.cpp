// Calibration pilot: runs the full benchmark pipeline (all methods, the
// ablation ladder, and the label-shift comparison) over the configured seeds
// and prints the margins the acceptance gate depends on. Pass key=value
// overrides as positional arguments, e.g.  tta_pilot lr=0.003 seeds=0,1,2
//
// The committed pilot output lives in calibration/; regenerate it with
// `tta_pilot | tee calibration/pilot.txt` after any generator or default
// change.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "tta/adapt.hpp"
#include "tta/config.hpp"
#include "tta/harness.hpp"

namespace {

double mean_of(const std::vector<tta::RunResult>& runs, const std::string& label) {
    double acc = 0.0;
    int n = 0;
    for (const auto& r : runs) {
        if (r.label != label) continue;
        acc += r.metrics.cumulative_accuracy;
        ++n;
    }
    return n ? 100.0 * acc / n : 0.0;
}

}  // namespace

int main(int argc, char** argv) {
    tta::RunConfig cfg = tta::parse_config_text("");
    cfg.output_dir = "pilot_out";
    for (int i = 1; i < argc; ++i) {
        const std::string kv = argv[i];
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
            std::fprintf(stderr, "expected key=value, got '%s'\n", kv.c_str());
            return 2;
        }
        tta::apply_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    tta::validate(cfg);
    std::filesystem::remove_all(cfg.output_dir);
    std::filesystem::create_directories(cfg.output_dir);

    const auto t0 = std::chrono::steady_clock::now();
    auto elapsed = [&t0] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };

    // Shared covariate contexts + checkpoints.
    std::vector<tta::SeedContext> contexts;
    double source_val = 0.0;
    for (std::uint64_t seed : cfg.seeds) {
        contexts.push_back(tta::make_seed_context(cfg, seed));
        tta::save_checkpoint(contexts.back().source_model,
                             tta::source_checkpoint_path(cfg, seed));
        source_val += contexts.back().source_val_accuracy;
    }
    source_val *= 100.0 / static_cast<double>(contexts.size());
    std::printf("source-val           %6.2f   (train %.1fs)\n", source_val, elapsed());

    std::vector<tta::RunResult> cov;
    for (const char* method : {"erm", "bn", "tent", "pl", "ours"}) {
        for (const auto& ctx : contexts) {
            auto acfg = tta::to_adapt_config(cfg, tta::parse_method(method), ctx.seed);
            cov.push_back(tta::execute_run(ctx, acfg, method));
        }
        std::printf("cov  %-6s          %6.2f\n", method, mean_of(cov, method));
    }

    struct Rung {
        const char* label;
        bool ef, cf, mslc;
    };
    for (const Rung& r : {Rung{"sd", false, false, false}, Rung{"sd+ef", true, false, false},
                          Rung{"sd+ef+cf", true, true, false},
                          Rung{"sd+ef+cf+mslc", true, true, true}}) {
        double acc = 0.0;
        for (const auto& ctx : contexts) {
            auto acfg = tta::to_adapt_config(cfg, tta::Method::ours, ctx.seed);
            acfg.ef = r.ef;
            acfg.cf = r.cf;
            acfg.mslc = r.mslc;
            acc += tta::execute_run(ctx, acfg, r.label).metrics.cumulative_accuracy;
        }
        std::printf("rung %-14s  %6.2f\n", r.label, 100.0 * acc / contexts.size());
    }

    tta::RunConfig ls_cfg = cfg;
    ls_cfg.benchmark = "label-shift";
    tta::validate(ls_cfg);
    std::vector<tta::RunResult> ls;
    for (const auto& ctx : contexts) {
        auto ls_ctx = tta::make_seed_context(ls_cfg, ctx.seed,
                                             tta::source_checkpoint_path(cfg, ctx.seed));
        for (const char* method : {"erm", "tent", "pl", "ours"}) {
            auto acfg = tta::to_adapt_config(ls_cfg, tta::parse_method(method), ctx.seed);
            ls.push_back(tta::execute_run(ls_ctx, acfg, method));
        }
    }
    for (const char* method : {"erm", "tent", "pl", "ours"}) {
        std::printf("ls   %-6s          %6.2f\n", method, mean_of(ls, method));
    }

    const double erm_cov = mean_of(cov, "erm"), erm_ls = mean_of(ls, "erm");
    std::printf("\nmargins:\n");
    std::printf("  erm drop            %6.2f  (need >= 15)\n", source_val - erm_cov);
    std::printf("  ours - erm          %6.2f  (need >= 3)\n", mean_of(cov, "ours") - erm_cov);
    std::printf("  ours - best base    %6.2f  (need >= 0)\n",
                mean_of(cov, "ours") -
                    std::max({mean_of(cov, "bn"), mean_of(cov, "tent"), mean_of(cov, "pl")}));
    for (const char* method : {"ours", "tent", "pl"}) {
        std::printf("  gain %-5s cov/ls   %6.2f / %6.2f  (need cov > ls)\n", method,
                    mean_of(cov, method) - erm_cov, mean_of(ls, method) - erm_ls);
    }
    std::printf("total %.1fs\n", elapsed());
    return 0;
}
