#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tta/tensor.hpp"

// Toy classifier: a fully-connected backbone of [linear -> feature-norm ->
// relu] blocks producing an embedding z, plus a plain linear head mapping z to
// class logits p. FeatureNorm is a per-feature standardization layer (1-D
// batch-norm analog) with running statistics so statistics-refresh baselines
// are expressible.

namespace tta {

struct Linear {
    int in = 0;
    int out = 0;
    std::vector<double> W;  // {out, in}, row-major
    std::vector<double> b;  // {out}
};

struct FeatureNorm {
    int dim = 0;
    std::vector<double> gamma;  // trainable scale, init 1
    std::vector<double> beta;   // trainable shift, init 0
    std::vector<double> running_mean;  // init 0
    std::vector<double> running_var;   // init 1, biased batch variance
};

struct Model {
    std::vector<int> layer_dims;  // [input, hidden..., feature_dim]
    int num_classes = 0;
    double norm_eps = 1e-12;
    double norm_momentum = 0.1;  // weight of the new batch stat in the EMA

    std::vector<Linear> linears;     // one per consecutive layer_dims pair
    std::vector<FeatureNorm> norms;  // one after each backbone linear
    Linear head;                     // {num_classes, feature_dim}

    int input_dim() const { return layer_dims.front(); }
    int feature_dim() const { return layer_dims.back(); }
};

// frozen: normalize with running stats, mutate nothing.
// refresh: normalize with current-batch stats and fold them into the running
// stats by exponential moving average.
enum class StatsMode { frozen, refresh };

enum class UpdateScope { all, affine_only };

// Handle to one trainable array. `values` points into the owning Model.
struct ParamRef {
    std::string name;
    Shape shape;
    std::vector<double>* values = nullptr;
    bool affine = false;  // true for feature-norm gamma/beta
};

// Every trainable array exactly once, in a fixed deterministic order:
// per backbone block W, b, gamma, beta; then head W, head b.
std::vector<ParamRef> parameters(Model& m);

Model init_model(std::uint64_t seed, const std::vector<int>& layer_dims, int num_classes);

struct ForwardResult {
    Tensor z;  // {batch, feature_dim}
    Tensor p;  // {batch, num_classes}
    std::vector<Tensor> params;  // leaf tensors, parallel to parameters(m); empty if not bound
};

// Builds the forward graph for a batch x of shape {batch, input_dim} on
// `tape`. With bind_params, trainable arrays enter the tape as gradient
// leaves; otherwise as constants (cheap evaluation). Refresh mode mutates the
// running statistics as a side effect.
ForwardResult forward(Tape& tape, Model& m, const Tensor& x, StatsMode mode,
                      bool bind_params = true);

// Value-only frozen-mode forward; no tape interaction, model untouched.
struct EvalResult {
    std::vector<double> z;  // {batch, feature_dim}
    std::vector<double> p;  // {batch, num_classes}
    int batch = 0;
};
EvalResult eval_forward(const Model& m, const std::vector<double>& x, int batch);

// Replaces every FeatureNorm's running stats with the batch statistics of x
// (full replacement, the statistics-refresh baseline). Trainable arrays are
// untouched. Requires batch >= 2.
void update_norm_stats(Model& m, const Tensor& x);

// Versioned binary container of named arrays; write -> read is bit-exact.
void save_checkpoint(const Model& m, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace tta
