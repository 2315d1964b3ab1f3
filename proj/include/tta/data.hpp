#pragma once

#include <cstdint>
#include <string>
#include <vector>

// Synthetic multi-domain generators. Every domain draws class-conditional
// Gaussians around shared class means, then applies an affine domain
// transform (rotation of the first two coordinates, uniform scale,
// translation) plus isotropic noise. Covariate benchmarks vary the transform;
// label-shift benchmarks vary the class prior.

namespace tta {

struct DomainTransform {
    double rotation = 0.0;               // radians, first two coordinates
    std::vector<double> translation;     // length input_dim (empty = zero)
    double scale = 1.0;
};

struct DomainSpec {
    int num_classes = 0;
    int input_dim = 0;
    std::vector<std::vector<double>> class_means;  // per class, length input_dim
    double class_cov_scale = 0.3;
    DomainTransform transform;
    double noise_severity = 0.0;
    std::vector<double> label_prior;  // length num_classes, sums to 1
    int size = 0;
    std::uint64_t seed = 0;
};

struct Sample {
    std::vector<double> x;
    int y = 0;  // evaluation-only; the adaptation path never sees it
};

struct BenchmarkParams {
    int num_classes = 5;
    int input_dim = 16;
    int num_source_domains = 3;
    int source_size = 2000;
    int target_size = 5000;
    double class_cov_scale = 0.3;
};

struct CovariateBenchmark {
    std::vector<DomainSpec> sources;
    DomainSpec target;
};

// Sources share class means (unit pairwise separation, seeded rotation) and
// carry small per-domain transforms; the target's rotation/translation/noise
// scale linearly with shift_strength up to the calibrated anchors
// (pi/4, magnitude 2, severity 1) at strength 1. Strength 0 leaves the target
// transform-free and noise-free.
CovariateBenchmark make_covariate_benchmark(std::uint64_t seed, double shift_strength,
                                            const BenchmarkParams& params = {});

// Target with the given class prior and a mild fixed covariate transform,
// sharing class means with the covariate benchmark of the same seed. Zero
// prior entries are allowed (absent classes).
DomainSpec make_label_shift_benchmark(std::uint64_t seed, const std::vector<double>& prior,
                                      const BenchmarkParams& params = {});

// Concentrated two-class-heavy prior over five classes used as the default
// label-shift setting.
std::vector<double> label_shift_preset_prior();

std::vector<Sample> generate_samples(const DomainSpec& spec);

struct StreamBatch {
    std::vector<double> x;  // row-major {size, input_dim}
    int size = 0;
};

struct Stream {
    int input_dim = 0;
    std::vector<StreamBatch> batches;
    // Parallel to batches; consumed only by the metrics scorer.
    std::vector<std::vector<int>> hidden_labels;
};

// One fixed shuffle of the samples, then contiguous batches (last may be
// short). Deterministic per seed.
Stream stream_batches(const std::vector<Sample>& samples, int batch_size, std::uint64_t seed);

// CSV with header y,x0,x1,... so external data can ride the same harness.
void export_csv(const std::vector<Sample>& samples, const std::string& path);
std::vector<Sample> import_csv(const std::string& path);

}  // namespace tta
