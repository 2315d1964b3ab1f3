#include "tta/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

namespace tta {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a])) != 0) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1])) != 0) --b;
    return s.substr(a, b - a);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        cell = trim(cell);
        if (!cell.empty()) out.push_back(cell);
    }
    return out;
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing characters");
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': cannot parse '" + v + "' as a number");
    }
}

long long parse_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const long long x = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing characters");
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': cannot parse '" + v + "' as an integer");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "off" || v == "no") return false;
    throw ConfigError("config key '" + key + "': cannot parse '" + v + "' as a boolean");
}

void apply(RunConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "methods") {
        cfg.methods = split_list(value);
        if (cfg.methods.empty()) throw ConfigError("config key 'methods': empty list");
    } else if (key == "method") {
        cfg.methods = {value};
    } else if (key == "lr") {
        cfg.lr = parse_double(key, value);
    } else if (key == "lambda") {
        cfg.lambda = parse_double(key, value);
    } else if (key == "k") {
        cfg.k = static_cast<int>(parse_int(key, value));
    } else if (key == "m") {
        if (value == "disabled" || value == "na" || value == "none") {
            cfg.m = std::nullopt;
        } else {
            cfg.m = static_cast<int>(parse_int(key, value));
        }
    } else if (key == "batch_size") {
        cfg.batch_size = static_cast<int>(parse_int(key, value));
    } else if (key == "pl_threshold") {
        cfg.pl_threshold = parse_double(key, value);
    } else if (key == "update_scope") {
        if (value == "all") {
            cfg.update_scope = UpdateScope::all;
        } else if (value == "affine-only" || value == "affine_only") {
            cfg.update_scope = UpdateScope::affine_only;
        } else {
            throw ConfigError("config key 'update_scope': expected all|affine-only, got '" +
                              value + "'");
        }
    } else if (key == "sd") {
        cfg.sd = parse_bool(key, value);
    } else if (key == "ef") {
        cfg.ef = parse_bool(key, value);
    } else if (key == "cf") {
        cfg.cf = parse_bool(key, value);
    } else if (key == "mslc") {
        cfg.mslc = parse_bool(key, value);
    } else if (key == "report_post_update") {
        cfg.report_post_update = parse_bool(key, value);
    } else if (key == "bank_capacity") {
        cfg.bank_capacity = parse_int(key, value);
    } else if (key == "benchmark") {
        if (value != "covariate" && value != "label-shift") {
            throw ConfigError("config key 'benchmark': expected covariate|label-shift, got '" +
                              value + "'");
        }
        cfg.benchmark = value;
    } else if (key == "shift_strength") {
        cfg.shift_strength = parse_double(key, value);
    } else if (key == "num_classes") {
        cfg.bench.num_classes = static_cast<int>(parse_int(key, value));
    } else if (key == "input_dim") {
        cfg.bench.input_dim = static_cast<int>(parse_int(key, value));
    } else if (key == "num_source_domains") {
        cfg.bench.num_source_domains = static_cast<int>(parse_int(key, value));
    } else if (key == "source_size") {
        cfg.bench.source_size = static_cast<int>(parse_int(key, value));
    } else if (key == "target_size") {
        cfg.bench.target_size = static_cast<int>(parse_int(key, value));
    } else if (key == "class_cov_scale") {
        cfg.bench.class_cov_scale = parse_double(key, value);
    } else if (key == "label_shift_prior") {
        cfg.label_shift_prior.clear();
        for (const std::string& cell : split_list(value)) {
            cfg.label_shift_prior.push_back(parse_double(key, cell));
        }
    } else if (key == "source_epochs") {
        cfg.source_epochs = static_cast<int>(parse_int(key, value));
    } else if (key == "source_lr") {
        cfg.source_lr = parse_double(key, value);
    } else if (key == "val_fraction") {
        cfg.val_fraction = parse_double(key, value);
    } else if (key == "seeds") {
        cfg.seeds.clear();
        for (const std::string& cell : split_list(value)) {
            cfg.seeds.push_back(static_cast<std::uint64_t>(parse_int(key, cell)));
        }
        if (cfg.seeds.empty()) throw ConfigError("config key 'seeds': empty list");
    } else if (key == "output_dir") {
        cfg.output_dir = value;
    } else {
        throw ConfigError("unknown config key '" + key + "'");
    }
}

}  // namespace

void apply_override(RunConfig& cfg, const std::string& key, const std::string& value) {
    apply(cfg, trim(key), trim(value));
}

RunConfig parse_config_text(const std::string& text) {
    RunConfig cfg;
    std::istringstream ss(text);
    std::string line;
    int line_no = 0;
    while (std::getline(ss, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(line_no) +
                              ": expected key = value, got '" + line + "'");
        }
        apply(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    validate(cfg);
    return cfg;
}

RunConfig parse_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream buf;
    buf << f.rdbuf();
    return parse_config_text(buf.str());
}

void validate(const RunConfig& cfg) {
    for (const std::string& m : cfg.methods) {
        try {
            parse_method(m);
        } catch (const std::exception& e) {
            throw ConfigError("config key 'methods': " + std::string(e.what()));
        }
    }
    if (cfg.lr <= 0.0) throw ConfigError("config key 'lr': must be > 0");
    if (cfg.lambda < 0.0) throw ConfigError("config key 'lambda': must be >= 0");
    if (cfg.k < 1) throw ConfigError("config key 'k': must be >= 1");
    if (cfg.m && *cfg.m < 0) throw ConfigError("config key 'm': must be >= 0 or disabled");
    if (cfg.batch_size < 1) throw ConfigError("config key 'batch_size': must be >= 1");
    if (cfg.pl_threshold <= 0.0 || cfg.pl_threshold >= 1.0) {
        throw ConfigError("config key 'pl_threshold': must lie in (0,1)");
    }
    if (cfg.mslc && !cfg.sd) {
        throw ConfigError("config key 'mslc': requires sd=true (no distillation, no clustering)");
    }
    if (cfg.cf && !cfg.sd) {
        throw ConfigError("config key 'cf': requires sd=true (the mask filters distillation)");
    }
    if (cfg.shift_strength < 0.0 || cfg.shift_strength > 1.0) {
        throw ConfigError("config key 'shift_strength': must lie in [0,1]");
    }
    if (cfg.bench.num_classes < 2) throw ConfigError("config key 'num_classes': must be >= 2");
    if (cfg.bench.input_dim < cfg.bench.num_classes) {
        throw ConfigError("config key 'input_dim': must be >= num_classes");
    }
    if (cfg.bench.num_source_domains < 2) {
        throw ConfigError("config key 'num_source_domains': must be >= 2");
    }
    if (cfg.bench.source_size < 10 || cfg.bench.target_size < 10) {
        throw ConfigError("config: domain sizes must be >= 10");
    }
    if (cfg.bench.class_cov_scale <= 0.0) {
        throw ConfigError("config key 'class_cov_scale': must be > 0");
    }
    if (!cfg.label_shift_prior.empty()) {
        if (static_cast<int>(cfg.label_shift_prior.size()) != cfg.bench.num_classes) {
            throw ConfigError("config key 'label_shift_prior': length must equal num_classes");
        }
        double s = 0.0;
        for (double p : cfg.label_shift_prior) {
            if (p < 0.0) throw ConfigError("config key 'label_shift_prior': negative entry");
            s += p;
        }
        if (std::abs(s - 1.0) > 1e-9) {
            throw ConfigError("config key 'label_shift_prior': entries must sum to 1");
        }
    }
    if (cfg.source_epochs < 1) throw ConfigError("config key 'source_epochs': must be >= 1");
    if (cfg.source_lr <= 0.0) throw ConfigError("config key 'source_lr': must be > 0");
    if (cfg.val_fraction <= 0.0 || cfg.val_fraction >= 0.5) {
        throw ConfigError("config key 'val_fraction': must lie in (0, 0.5)");
    }
    if (cfg.seeds.empty()) throw ConfigError("config key 'seeds': must be nonempty");
    if (cfg.output_dir.empty()) throw ConfigError("config key 'output_dir': must be nonempty");
}

std::vector<std::pair<std::string, std::string>> config_echo(const RunConfig& cfg) {
    auto join = [](const auto& list) {
        std::string out;
        for (std::size_t i = 0; i < list.size(); ++i) {
            if (i) out += ",";
            std::ostringstream ss;
            ss << list[i];
            out += ss.str();
        }
        return out;
    };
    auto fmt = [](double v) {
        std::ostringstream ss;
        ss << v;
        return ss.str();
    };
    std::vector<std::pair<std::string, std::string>> out;
    out.emplace_back("methods", join(cfg.methods));
    out.emplace_back("lr", fmt(cfg.lr));
    out.emplace_back("lambda", fmt(cfg.lambda));
    out.emplace_back("k", std::to_string(cfg.k));
    out.emplace_back("m", cfg.m ? std::to_string(*cfg.m) : "disabled");
    out.emplace_back("batch_size", std::to_string(cfg.batch_size));
    out.emplace_back("pl_threshold", fmt(cfg.pl_threshold));
    out.emplace_back("update_scope",
                     cfg.update_scope == UpdateScope::all ? "all" : "affine-only");
    out.emplace_back("sd", cfg.sd ? "true" : "false");
    out.emplace_back("ef", cfg.ef ? "true" : "false");
    out.emplace_back("cf", cfg.cf ? "true" : "false");
    out.emplace_back("mslc", cfg.mslc ? "true" : "false");
    out.emplace_back("report_post_update", cfg.report_post_update ? "true" : "false");
    out.emplace_back("bank_capacity", std::to_string(cfg.bank_capacity));
    out.emplace_back("benchmark", cfg.benchmark);
    out.emplace_back("shift_strength", fmt(cfg.shift_strength));
    out.emplace_back("num_classes", std::to_string(cfg.bench.num_classes));
    out.emplace_back("input_dim", std::to_string(cfg.bench.input_dim));
    out.emplace_back("num_source_domains", std::to_string(cfg.bench.num_source_domains));
    out.emplace_back("source_size", std::to_string(cfg.bench.source_size));
    out.emplace_back("target_size", std::to_string(cfg.bench.target_size));
    out.emplace_back("class_cov_scale", fmt(cfg.bench.class_cov_scale));
    if (!cfg.label_shift_prior.empty()) {
        out.emplace_back("label_shift_prior", join(cfg.label_shift_prior));
    }
    out.emplace_back("source_epochs", std::to_string(cfg.source_epochs));
    out.emplace_back("source_lr", fmt(cfg.source_lr));
    out.emplace_back("val_fraction", fmt(cfg.val_fraction));
    out.emplace_back("seeds", join(cfg.seeds));
    out.emplace_back("output_dir", cfg.output_dir);
    return out;
}

AdaptConfig to_adapt_config(const RunConfig& cfg, Method method, std::uint64_t seed) {
    AdaptConfig a;
    a.method = method;
    a.lr = cfg.lr;
    a.lambda = cfg.lambda;
    a.k = cfg.k;
    a.m = cfg.m;
    a.batch_size = cfg.batch_size;
    a.pl_threshold = cfg.pl_threshold;
    a.update_scope = cfg.update_scope;
    a.seed = seed;
    a.sd = cfg.sd;
    a.ef = cfg.ef;
    a.cf = cfg.cf;
    a.mslc = cfg.mslc;
    a.report_post_update = cfg.report_post_update;
    a.bank_capacity = cfg.bank_capacity;
    return a;
}

}  // namespace tta
