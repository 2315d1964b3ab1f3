#include "tta/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "tta/rng.hpp"
#include "tta/vecmath.hpp"

namespace tta {

namespace {

// Input-noise standard deviation contributed per unit of noise_severity.
// Calibrated by the committed pilot run: large enough that severity-1 targets
// stay clearly harder than the sources, small enough that the class structure
// survives and adaptation has headroom over a statistics-only fix.
constexpr double kNoiseStdPerSeverity = 0.2;

// Class means with unit pairwise separation: orthonormal directions q_k
// (modified Gram-Schmidt on a seeded Gaussian matrix) scaled by 1/sqrt(2),
// so |q_i/√2 − q_j/√2| = 1 for all i ≠ j.
//
// The directions are drawn inside the leading num_classes coordinates, with
// the remaining coordinates carrying noise only. This mirrors real data,
// where class identity lives on a low-dimensional manifold, and it makes the
// rotation distortion (which acts on the first two coordinates) a genuine
// distortion of class geometry rather than a near-no-op on isotropically
// spread means.
std::vector<std::vector<double>> draw_class_means(Rng& rng, int num_classes, int dim) {
    if (num_classes > dim) {
        throw std::invalid_argument("benchmark: num_classes (" + std::to_string(num_classes) +
                                    ") must not exceed input_dim (" + std::to_string(dim) + ")");
    }
    std::vector<std::vector<double>> q;
    q.reserve(static_cast<std::size_t>(num_classes));
    for (int k = 0; k < num_classes; ++k) {
        std::vector<double> v(static_cast<std::size_t>(dim), 0.0);
        for (int j = 0; j < num_classes; ++j) v[static_cast<std::size_t>(j)] = rng.normal();
        for (const auto& prev : q) {
            const double proj = dot(v, prev);
            for (int j = 0; j < dim; ++j) v[static_cast<std::size_t>(j)] -= proj * prev[static_cast<std::size_t>(j)];
        }
        const double n = l2_norm(v);
        if (n < 1e-9) {
            throw std::runtime_error("benchmark: degenerate direction draw");  // practically unreachable
        }
        for (double& x : v) x /= n;
        q.push_back(std::move(v));
    }
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    for (auto& m : q) {
        for (double& x : m) x *= inv_sqrt2;
    }
    return q;
}

std::vector<double> random_unit_vector(Rng& rng, int dim) {
    std::vector<double> v(static_cast<std::size_t>(dim));
    double n = 0.0;
    do {
        for (double& x : v) x = rng.normal();
        n = l2_norm(v);
    } while (n < 1e-9);
    for (double& x : v) x /= n;
    return v;
}

std::vector<double> scaled(std::vector<double> v, double c) {
    for (double& x : v) x *= c;
    return v;
}

void check_params(const BenchmarkParams& p) {
    if (p.num_classes < 2) throw std::invalid_argument("benchmark: num_classes must be >= 2");
    if (p.num_source_domains < 2) {
        throw std::invalid_argument("benchmark: need at least 2 source domains");
    }
    if (p.source_size < 1 || p.target_size < 1) {
        throw std::invalid_argument("benchmark: domain sizes must be positive");
    }
    if (p.class_cov_scale <= 0.0) {
        throw std::invalid_argument("benchmark: class_cov_scale must be positive");
    }
}

}  // namespace

CovariateBenchmark make_covariate_benchmark(std::uint64_t seed, double shift_strength,
                                            const BenchmarkParams& params) {
    if (shift_strength < 0.0 || shift_strength > 1.0) {
        throw std::invalid_argument("make_covariate_benchmark: shift_strength must lie in [0,1]");
    }
    check_params(params);

    Rng rng(seed);
    const auto means = draw_class_means(rng, params.num_classes, params.input_dim);
    const std::vector<double> uniform_prior(static_cast<std::size_t>(params.num_classes),
                                            1.0 / params.num_classes);

    DomainSpec base;
    base.num_classes = params.num_classes;
    base.input_dim = params.input_dim;
    base.class_means = means;
    base.class_cov_scale = params.class_cov_scale;
    base.label_prior = uniform_prior;

    CovariateBenchmark bench;
    for (int i = 0; i < params.num_source_domains; ++i) {
        DomainSpec s = base;
        s.transform.rotation = rng.uniform(-0.1, 0.1);
        s.transform.translation = scaled(random_unit_vector(rng, params.input_dim), 0.2);
        s.noise_severity = 0.05;
        s.size = params.source_size;
        s.seed = rng.next_u64();
        bench.sources.push_back(std::move(s));
    }

    DomainSpec t = base;
    t.transform.rotation = shift_strength * std::numbers::pi / 4.0;
    t.transform.translation =
        scaled(random_unit_vector(rng, params.input_dim), shift_strength * 2.0);
    t.noise_severity = shift_strength * 1.0;
    t.size = params.target_size;
    t.seed = rng.next_u64();
    bench.target = std::move(t);
    return bench;
}

DomainSpec make_label_shift_benchmark(std::uint64_t seed, const std::vector<double>& prior,
                                      const BenchmarkParams& params) {
    check_params(params);
    if (static_cast<int>(prior.size()) != params.num_classes) {
        throw std::invalid_argument("make_label_shift_benchmark: prior length " +
                                    std::to_string(prior.size()) + " != num_classes " +
                                    std::to_string(params.num_classes));
    }
    double psum = 0.0;
    for (double p : prior) {
        if (p < 0.0) throw std::invalid_argument("make_label_shift_benchmark: negative prior entry");
        psum += p;
    }
    if (std::abs(psum - 1.0) > 1e-12) {
        throw std::invalid_argument("make_label_shift_benchmark: prior sums to " +
                                    std::to_string(psum) + ", expected 1");
    }

    Rng rng(seed);
    DomainSpec t;
    t.num_classes = params.num_classes;
    t.input_dim = params.input_dim;
    t.class_means = draw_class_means(rng, params.num_classes, params.input_dim);
    t.class_cov_scale = params.class_cov_scale;
    t.transform.rotation = std::numbers::pi / 16.0;
    t.transform.translation = scaled(random_unit_vector(rng, params.input_dim), 0.3);
    t.noise_severity = 0.3;
    t.label_prior = prior;
    t.size = params.target_size;
    t.seed = rng.next_u64();
    return t;
}

std::vector<double> label_shift_preset_prior() {
    // Five-class prior with nearly all mass on two classes, normalized from
    // the counts 80/1209/88/42/1237.
    const double counts[5] = {80.0, 1209.0, 88.0, 42.0, 1237.0};
    const double total = 80.0 + 1209.0 + 88.0 + 42.0 + 1237.0;
    std::vector<double> prior(5);
    for (int i = 0; i < 5; ++i) prior[static_cast<std::size_t>(i)] = counts[i] / total;
    return prior;
}

std::vector<Sample> generate_samples(const DomainSpec& spec) {
    if (spec.num_classes < 2 || spec.input_dim < 1 || spec.size < 0) {
        throw std::invalid_argument("generate_samples: malformed spec");
    }
    if (static_cast<int>(spec.class_means.size()) != spec.num_classes ||
        static_cast<int>(spec.label_prior.size()) != spec.num_classes) {
        throw std::invalid_argument("generate_samples: class_means/label_prior length mismatch");
    }
    double psum = 0.0;
    for (double p : spec.label_prior) psum += p;
    if (std::abs(psum - 1.0) > 1e-12) {
        throw std::invalid_argument("generate_samples: label_prior sums to " +
                                    std::to_string(psum));
    }
    if (!spec.transform.translation.empty() &&
        static_cast<int>(spec.transform.translation.size()) != spec.input_dim) {
        throw std::invalid_argument("generate_samples: translation length mismatch");
    }

    std::vector<double> cum(spec.label_prior.size());
    double acc = 0.0;
    for (std::size_t k = 0; k < cum.size(); ++k) {
        acc += spec.label_prior[k];
        cum[k] = acc;
    }
    int last_supported = 0;
    for (int k = 0; k < spec.num_classes; ++k) {
        if (spec.label_prior[static_cast<std::size_t>(k)] > 0.0) last_supported = k;
    }

    Rng rng(spec.seed);
    const double cos_a = std::cos(spec.transform.rotation);
    const double sin_a = std::sin(spec.transform.rotation);

    std::vector<Sample> out;
    out.reserve(static_cast<std::size_t>(spec.size));
    for (int i = 0; i < spec.size; ++i) {
        const double u = rng.uniform();
        int y = last_supported;
        for (int k = 0; k < spec.num_classes; ++k) {
            if (u < cum[static_cast<std::size_t>(k)]) {
                y = k;
                break;
            }
        }
        if (spec.label_prior[static_cast<std::size_t>(y)] == 0.0) y = last_supported;

        std::vector<double> x(static_cast<std::size_t>(spec.input_dim));
        const auto& mean = spec.class_means[static_cast<std::size_t>(y)];
        for (int j = 0; j < spec.input_dim; ++j) {
            x[static_cast<std::size_t>(j)] =
                mean[static_cast<std::size_t>(j)] + spec.class_cov_scale * rng.normal();
        }
        if (spec.input_dim >= 2) {
            const double x0 = x[0], x1 = x[1];
            x[0] = cos_a * x0 - sin_a * x1;
            x[1] = sin_a * x0 + cos_a * x1;
        }
        for (double& v : x) v *= spec.transform.scale;
        if (!spec.transform.translation.empty()) {
            for (int j = 0; j < spec.input_dim; ++j) {
                x[static_cast<std::size_t>(j)] += spec.transform.translation[static_cast<std::size_t>(j)];
            }
        }
        for (int j = 0; j < spec.input_dim; ++j) {
            x[static_cast<std::size_t>(j)] += kNoiseStdPerSeverity * spec.noise_severity * rng.normal();
        }
        out.push_back({std::move(x), y});
    }
    return out;
}

Stream stream_batches(const std::vector<Sample>& samples, int batch_size, std::uint64_t seed) {
    if (samples.empty()) throw std::invalid_argument("stream_batches: empty sample set");
    if (batch_size < 1) throw std::invalid_argument("stream_batches: batch_size must be >= 1");
    const int dim = static_cast<int>(samples.front().x.size());

    std::vector<std::size_t> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);

    Stream stream;
    stream.input_dim = dim;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
        const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
        StreamBatch batch;
        batch.size = static_cast<int>(end - start);
        batch.x.reserve(static_cast<std::size_t>(batch.size) * dim);
        std::vector<int> labels;
        labels.reserve(end - start);
        for (std::size_t i = start; i < end; ++i) {
            const Sample& s = samples[order[i]];
            if (static_cast<int>(s.x.size()) != dim) {
                throw std::invalid_argument("stream_batches: ragged sample dimensions");
            }
            batch.x.insert(batch.x.end(), s.x.begin(), s.x.end());
            labels.push_back(s.y);
        }
        stream.batches.push_back(std::move(batch));
        stream.hidden_labels.push_back(std::move(labels));
    }
    return stream;
}

void export_csv(const std::vector<Sample>& samples, const std::string& path) {
    if (samples.empty()) throw std::invalid_argument("export_csv: empty sample set");
    std::ofstream f(path);
    if (!f) throw std::runtime_error("export_csv: cannot open '" + path + "'");
    const std::size_t dim = samples.front().x.size();
    f << "y";
    for (std::size_t j = 0; j < dim; ++j) f << ",x" << j;
    f << "\n";
    char buf[32];
    for (const Sample& s : samples) {
        f << s.y;
        for (double v : s.x) {
            std::snprintf(buf, sizeof buf, "%.17g", v);
            f << ',' << buf;
        }
        f << "\n";
    }
}

std::vector<Sample> import_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("import_csv: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(f, line)) throw std::runtime_error("import_csv: empty file");
    if (line.rfind("y,", 0) != 0) {
        throw std::runtime_error("import_csv: expected header starting with 'y,'");
    }
    const std::size_t dim = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));

    std::vector<Sample> out;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string cell;
        Sample s;
        if (!std::getline(ss, cell, ',')) throw std::runtime_error("import_csv: bad row");
        s.y = std::stoi(cell);
        while (std::getline(ss, cell, ',')) s.x.push_back(std::stod(cell));
        if (s.x.size() != dim) {
            throw std::runtime_error("import_csv: row with " + std::to_string(s.x.size()) +
                                     " coordinates, expected " + std::to_string(dim));
        }
        out.push_back(std::move(s));
    }
    if (out.empty()) throw std::runtime_error("import_csv: no samples");
    return out;
}

}  // namespace tta
