#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tta/bank.hpp"
#include "tta/data.hpp"
#include "tta/model.hpp"

// Source-domain training, the Adam optimizer, and the online adaptation loop:
// one gradient step (or statistics refresh) per arriving unlabeled batch, with
// predictions scored before the update by default.

namespace tta {

enum class Method { ours, erm, bn, tent, pl };

const char* method_name(Method m);
Method parse_method(const std::string& name);

struct AdamState {
    std::vector<std::vector<double>> m;  // first moments, parallel to the param list
    std::vector<std::vector<double>> v;  // second moments
    std::int64_t t = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

AdamState make_adam_state(const std::vector<ParamRef>& params);

// Standard bias-corrected Adam. Returns false and leaves parameters, moments
// and the step counter untouched when any gradient entry is NaN/Inf.
bool adam_step(const std::vector<ParamRef>& params,
               const std::vector<std::vector<double>>& grads, AdamState& state, double lr);

struct AdaptConfig {
    Method method = Method::ours;
    double lr = 1e-3;
    double lambda = 0.1;
    int k = 3;                    // MSLC neighbors
    std::optional<int> m = 20;    // entropy-filter count; nullopt = disabled
    int batch_size = 64;
    double pl_threshold = 0.9;
    UpdateScope update_scope = UpdateScope::all;
    std::uint64_t seed = 0;

    // Component toggles for method `ours` (the full method enables all four).
    bool sd = true;
    bool ef = true;
    bool cf = true;
    bool mslc = true;

    bool report_post_update = false;  // score predictions after the step instead
    std::int64_t bank_capacity = 0;   // 0 = unbounded
};

struct BatchRecord {
    int batch_index = 0;
    double batch_accuracy = 0.0;
    double cumulative_accuracy = 0.0;
    double loss = 0.0;          // objective value for the step; 0 where no objective
    int num_reliable = 0;       // samples contributing supervision this batch
    std::int64_t bank_size = 0; // 0 for bankless methods
};

struct Metrics {
    std::vector<BatchRecord> per_batch;
    std::int64_t total_seen = 0;
    std::int64_t total_correct = 0;
    double cumulative_accuracy = 0.0;
    int skipped_batches = 0;       // batches where the method performed no update
    std::int64_t optimizer_steps = 0;
};

// Runs the online protocol over the whole stream, mutating `model` in place.
Metrics adapt_stream(Model& model, const Stream& stream, const AdaptConfig& cfg);

struct SourceTrainConfig {
    int epochs = 40;
    double lr = 1e-3;
    int batch_size = 64;
    double val_fraction = 0.1;
    std::uint64_t seed = 0;
};

struct SourceTrainResult {
    Model model;  // checkpoint with the best held-out source accuracy
    double best_val_accuracy = 0.0;
    int best_epoch = -1;
    double first_batch_loss = 0.0;
    std::vector<double> epoch_val_accuracy;
};

// Pooled cross-entropy training over the source domains with refresh-mode
// normalization; selects the checkpoint by training-domain validation.
SourceTrainResult train_source(const Model& init, const std::vector<std::vector<Sample>>& sources,
                               const SourceTrainConfig& cfg);

// Frozen-stats accuracy of the model on labeled samples.
double evaluate_accuracy(const Model& model, const std::vector<Sample>& samples,
                         int batch_size = 256);

}  // namespace tta
