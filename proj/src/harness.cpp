#include "tta/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace tta {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string fmt17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<int> default_layer_dims(int input_dim) { return {input_dim, 64, 64, 32}; }

}  // namespace

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t x = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ULL;
    x ^= x >> 27;
    x *= 0x94D049BB133111EBULL;
    x ^= x >> 31;
    return x;
}

std::vector<std::vector<Sample>> build_source_samples(const RunConfig& cfg, std::uint64_t seed) {
    const CovariateBenchmark bench =
        make_covariate_benchmark(seed, cfg.shift_strength, cfg.bench);
    std::vector<std::vector<Sample>> out;
    out.reserve(bench.sources.size());
    for (const DomainSpec& s : bench.sources) out.push_back(generate_samples(s));
    return out;
}

SeedContext make_seed_context(const RunConfig& cfg, std::uint64_t seed,
                              const std::string& checkpoint) {
    SeedContext ctx;
    ctx.seed = seed;

    const CovariateBenchmark bench =
        make_covariate_benchmark(seed, cfg.shift_strength, cfg.bench);

    if (!checkpoint.empty() && std::filesystem::exists(checkpoint)) {
        ctx.source_model = load_checkpoint(checkpoint);
        std::vector<Sample> pooled;
        for (const DomainSpec& s : bench.sources) {
            const auto samples = generate_samples(s);
            pooled.insert(pooled.end(), samples.begin(), samples.end());
        }
        ctx.source_val_accuracy = evaluate_accuracy(ctx.source_model, pooled);
    } else {
        std::vector<std::vector<Sample>> sources;
        for (const DomainSpec& s : bench.sources) sources.push_back(generate_samples(s));
        const Model init =
            init_model(mix_seed(seed, 1), default_layer_dims(cfg.bench.input_dim),
                       cfg.bench.num_classes);
        SourceTrainConfig tc;
        tc.epochs = cfg.source_epochs;
        tc.lr = cfg.source_lr;
        tc.batch_size = cfg.batch_size;
        tc.val_fraction = cfg.val_fraction;
        tc.seed = mix_seed(seed, 2);
        SourceTrainResult trained = train_source(init, sources, tc);
        ctx.source_model = std::move(trained.model);
        ctx.source_val_accuracy = trained.best_val_accuracy;
    }

    if (cfg.benchmark == "label-shift") {
        const std::vector<double> prior =
            cfg.label_shift_prior.empty() ? label_shift_preset_prior() : cfg.label_shift_prior;
        if (static_cast<int>(prior.size()) != cfg.bench.num_classes) {
            throw ConfigError("label-shift benchmark: preset prior has " +
                              std::to_string(prior.size()) + " classes; set label_shift_prior " +
                              "to match num_classes=" + std::to_string(cfg.bench.num_classes));
        }
        ctx.target_samples = generate_samples(make_label_shift_benchmark(seed, prior, cfg.bench));
    } else {
        ctx.target_samples = generate_samples(bench.target);
    }
    ctx.target_stream = stream_batches(ctx.target_samples, cfg.batch_size, mix_seed(seed, 3));
    return ctx;
}

RunResult execute_run(const SeedContext& ctx, const AdaptConfig& acfg, const std::string& label) {
    RunResult r;
    r.label = label;
    r.method = acfg.method;
    r.seed = ctx.seed;
    r.run_id = label + "_s" + std::to_string(ctx.seed);
    Model model = ctx.source_model;  // each run owns its copy
    r.metrics = adapt_stream(model, ctx.target_stream, acfg);
    return r;
}

MethodSummary summarize(const std::vector<const RunResult*>& runs) {
    if (runs.empty()) throw std::logic_error("summarize: no runs");
    MethodSummary s;
    for (const RunResult* r : runs) {
        s.per_seed.push_back(r->metrics.cumulative_accuracy);
        s.skipped_per_seed.push_back(r->metrics.skipped_batches);
        if (r->metrics.skipped_batches > 0) s.flagged = true;
    }
    double sum = 0.0;
    for (double v : s.per_seed) sum += v;
    s.mean = sum / static_cast<double>(s.per_seed.size());
    if (s.per_seed.size() > 1) {
        double ss = 0.0;
        for (double v : s.per_seed) ss += (v - s.mean) * (v - s.mean);
        s.stddev = std::sqrt(ss / static_cast<double>(s.per_seed.size() - 1));
    }
    return s;
}

void write_run_csv(const std::string& path, const RunResult& run) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
    f << "run_id,method,seed,batch_index,batch_accuracy,cumulative_accuracy,loss,"
         "num_reliable,bank_size\n";
    for (const BatchRecord& b : run.metrics.per_batch) {
        f << run.run_id << ',' << method_name(run.method) << ',' << run.seed << ','
          << b.batch_index << ',' << fmt17(b.batch_accuracy) << ','
          << fmt17(b.cumulative_accuracy) << ',' << fmt17(b.loss) << ',' << b.num_reliable << ','
          << b.bank_size << "\n";
    }
}

namespace {

ordered_json echo_json(const RunConfig& cfg) {
    ordered_json j;
    for (const auto& [k, v] : config_echo(cfg)) j[k] = v;
    return j;
}

}  // namespace

void write_summary_json(const std::string& path,
                        const std::vector<std::pair<std::string, MethodSummary>>& rows,
                        const RunConfig& cfg) {
    ordered_json j;
    const ordered_json echo = echo_json(cfg);
    for (const auto& [label, s] : rows) {
        ordered_json row;
        row["mean"] = s.mean;
        row["std"] = s.stddev;
        row["per_seed"] = s.per_seed;
        row["skipped_batches_per_seed"] = s.skipped_per_seed;
        row["flagged"] = s.flagged;
        row["config_echo"] = echo;
        j[label] = std::move(row);
    }
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
    f << j.dump(2) << "\n";
}

void write_metadata_json(const std::string& path, const std::string& command,
                         const RunConfig& cfg) {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char stamp[64];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));

    ordered_json j;
    j["command"] = command;
    j["created"] = stamp;  // timestamps live here, never in payload files
    j["config"] = echo_json(cfg);
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
    f << j.dump(2) << "\n";
}

std::string source_checkpoint_path(const RunConfig& cfg, std::uint64_t seed) {
    return cfg.output_dir + "/source_s" + std::to_string(seed) + ".ckpt";
}

namespace {

std::vector<SeedContext> build_contexts(const RunConfig& cfg, bool reuse_checkpoints) {
    std::vector<SeedContext> out;
    out.reserve(cfg.seeds.size());
    for (std::uint64_t seed : cfg.seeds) {
        const std::string ck = reuse_checkpoints ? source_checkpoint_path(cfg, seed) : "";
        out.push_back(make_seed_context(cfg, seed, ck));
    }
    return out;
}

struct RunPlan {
    std::string label;
    AdaptConfig acfg;  // seed filled per run
};

CommandResult execute_plan(const RunConfig& cfg, const std::vector<SeedContext>& contexts,
                           const std::vector<RunPlan>& plans, const std::string& command) {
    std::filesystem::create_directories(cfg.output_dir);
    CommandResult result;
    for (const RunPlan& plan : plans) {
        std::vector<const RunResult*> group;
        for (const SeedContext& ctx : contexts) {
            AdaptConfig acfg = plan.acfg;
            acfg.seed = ctx.seed;
            result.runs.push_back(execute_run(ctx, acfg, plan.label));
        }
        for (std::size_t i = result.runs.size() - contexts.size(); i < result.runs.size(); ++i) {
            group.push_back(&result.runs[i]);
        }
        result.summary.emplace_back(plan.label, summarize(group));
    }
    for (const RunResult& r : result.runs) {
        write_run_csv(cfg.output_dir + "/" + r.run_id + ".csv", r);
    }
    write_summary_json(cfg.output_dir + "/summary.json", result.summary, cfg);
    write_metadata_json(cfg.output_dir + "/metadata.json", command, cfg);
    return result;
}

}  // namespace

CommandResult command_run(const RunConfig& cfg) {
    const std::vector<SeedContext> contexts = build_contexts(cfg, /*reuse_checkpoints=*/false);
    std::filesystem::create_directories(cfg.output_dir);
    for (const SeedContext& ctx : contexts) {
        save_checkpoint(ctx.source_model, source_checkpoint_path(cfg, ctx.seed));
    }
    std::vector<RunPlan> plans;
    for (const std::string& name : cfg.methods) {
        plans.push_back({name, to_adapt_config(cfg, parse_method(name), 0)});
    }
    return execute_plan(cfg, contexts, plans, "run");
}

CommandResult command_adapt(const RunConfig& cfg) {
    const std::vector<SeedContext> contexts = build_contexts(cfg, /*reuse_checkpoints=*/true);
    const std::string name = cfg.methods.front();
    std::vector<RunPlan> plans{{name, to_adapt_config(cfg, parse_method(name), 0)}};
    return execute_plan(cfg, contexts, plans, "adapt");
}

void command_train_source(const RunConfig& cfg) {
    std::filesystem::create_directories(cfg.output_dir);
    ordered_json j;
    for (std::uint64_t seed : cfg.seeds) {
        SeedContext ctx = make_seed_context(cfg, seed);
        const std::string path = source_checkpoint_path(cfg, seed);
        save_checkpoint(ctx.source_model, path);
        ordered_json row;
        row["checkpoint"] = path;
        row["source_val_accuracy"] = ctx.source_val_accuracy;
        j["s" + std::to_string(seed)] = std::move(row);
    }
    std::ofstream f(cfg.output_dir + "/train_summary.json");
    if (!f) throw std::runtime_error("cannot write train summary");
    f << j.dump(2) << "\n";
    write_metadata_json(cfg.output_dir + "/metadata.json", "train-source", cfg);
}

CommandResult command_ablate(const RunConfig& cfg) {
    const std::vector<SeedContext> contexts = build_contexts(cfg, /*reuse_checkpoints=*/false);
    struct Rung {
        const char* label;
        bool ef, cf, mslc;
    };
    const Rung ladder[] = {
        {"sd", false, false, false},
        {"sd+ef", true, false, false},
        {"sd+ef+cf", true, true, false},
        {"sd+ef+cf+mslc", true, true, true},
    };
    std::vector<RunPlan> plans;
    for (const Rung& rung : ladder) {
        AdaptConfig acfg = to_adapt_config(cfg, Method::ours, 0);
        acfg.sd = true;
        acfg.ef = rung.ef;
        acfg.cf = rung.cf;
        acfg.mslc = rung.mslc;
        plans.push_back({rung.label, acfg});
    }
    return execute_plan(cfg, contexts, plans, "ablate");
}

CommandResult command_sweep(const RunConfig& cfg, const std::string& parameter,
                            const std::vector<std::string>& values) {
    if (values.empty()) throw ConfigError("sweep: value list must be nonempty");
    if (parameter != "k" && parameter != "m" && parameter != "lambda") {
        throw ConfigError("sweep: parameter must be one of k|m|lambda, got '" + parameter + "'");
    }
    const std::vector<SeedContext> contexts = build_contexts(cfg, /*reuse_checkpoints=*/false);

    std::vector<RunPlan> plans;
    for (const std::string& value : values) {
        RunConfig point = cfg;
        try {
            if (parameter == "k") {
                point.k = static_cast<int>(std::stoll(value));
            } else if (parameter == "m") {
                if (value == "disabled" || value == "na" || value == "none") {
                    point.m = std::nullopt;
                } else {
                    point.m = static_cast<int>(std::stoll(value));
                }
            } else {
                point.lambda = std::stod(value);
            }
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception&) {
            throw ConfigError("sweep: cannot parse value '" + value + "' for parameter '" +
                              parameter + "'");
        }
        validate(point);
        plans.push_back({"ours_" + parameter + "=" + value,
                         to_adapt_config(point, Method::ours, 0)});
    }
    CommandResult result = execute_plan(cfg, contexts, plans, "sweep");

    std::ofstream f(cfg.output_dir + "/sweep_" + parameter + ".csv");
    if (!f) throw std::runtime_error("cannot write sweep csv");
    f << "parameter,value,mean_accuracy,std_accuracy\n";
    for (std::size_t i = 0; i < values.size(); ++i) {
        f << parameter << ',' << values[i] << ',' << fmt17(result.summary[i].second.mean) << ','
          << fmt17(result.summary[i].second.stddev) << "\n";
    }
    return result;
}

}  // namespace tta
