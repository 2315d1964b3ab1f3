#include "tta/adapt.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>

#include "tta/losses.hpp"
#include "tta/rng.hpp"
#include "tta/vecmath.hpp"

namespace tta {

const char* method_name(Method m) {
    switch (m) {
        case Method::ours: return "ours";
        case Method::erm: return "erm";
        case Method::bn: return "bn";
        case Method::tent: return "tent";
        case Method::pl: return "pl";
    }
    return "?";
}

Method parse_method(const std::string& name) {
    if (name == "ours") return Method::ours;
    if (name == "erm") return Method::erm;
    if (name == "bn") return Method::bn;
    if (name == "tent") return Method::tent;
    if (name == "pl") return Method::pl;
    throw std::invalid_argument("unknown method '" + name +
                                "' (expected ours|erm|bn|tent|pl)");
}

AdamState make_adam_state(const std::vector<ParamRef>& params) {
    AdamState st;
    st.m.reserve(params.size());
    st.v.reserve(params.size());
    for (const ParamRef& p : params) {
        st.m.emplace_back(p.values->size(), 0.0);
        st.v.emplace_back(p.values->size(), 0.0);
    }
    return st;
}

bool adam_step(const std::vector<ParamRef>& params,
               const std::vector<std::vector<double>>& grads, AdamState& state, double lr) {
    if (params.size() != grads.size() || params.size() != state.m.size()) {
        throw std::invalid_argument("adam_step: params/grads/state size mismatch");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (grads[i].size() != params[i].values->size()) {
            throw std::invalid_argument("adam_step: gradient shape mismatch for " + params[i].name);
        }
        for (double g : grads[i]) {
            if (!std::isfinite(g)) return false;
        }
    }
    state.t += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = *params[i].values;
        auto& m = state.m[i];
        auto& v = state.v[i];
        const auto& g = grads[i];
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p[j] -= lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
    return true;
}

namespace {

// Trainable parameters restricted to the update scope, paired with their
// positions in the full parameters() order.
std::vector<std::size_t> scoped_indices(const std::vector<ParamRef>& all, UpdateScope scope) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < all.size(); ++i) {
        if (scope == UpdateScope::all || all[i].affine) idx.push_back(i);
    }
    return idx;
}

int count_correct(const std::vector<double>& logits, int batch, int c,
                  const std::vector<int>& labels) {
    int correct = 0;
    for (int i = 0; i < batch; ++i) {
        const std::span<const double> row(&logits[static_cast<std::size_t>(i) * c],
                                          static_cast<std::size_t>(c));
        if (argmax_lowest_tie(row) == labels[static_cast<std::size_t>(i)]) ++correct;
    }
    return correct;
}

}  // namespace

double evaluate_accuracy(const Model& model, const std::vector<Sample>& samples, int batch_size) {
    if (samples.empty()) throw std::invalid_argument("evaluate_accuracy: no samples");
    const int dim = static_cast<int>(samples.front().x.size());
    const int c = model.num_classes;
    std::int64_t correct = 0;
    for (std::size_t start = 0; start < samples.size();
         start += static_cast<std::size_t>(batch_size)) {
        const std::size_t end =
            std::min(samples.size(), start + static_cast<std::size_t>(batch_size));
        const int b = static_cast<int>(end - start);
        std::vector<double> x;
        x.reserve(static_cast<std::size_t>(b) * dim);
        std::vector<int> labels;
        labels.reserve(static_cast<std::size_t>(b));
        for (std::size_t i = start; i < end; ++i) {
            x.insert(x.end(), samples[i].x.begin(), samples[i].x.end());
            labels.push_back(samples[i].y);
        }
        const EvalResult r = eval_forward(model, x, b);
        correct += count_correct(r.p, b, c, labels);
    }
    return static_cast<double>(correct) / static_cast<double>(samples.size());
}

// ---------------------------------------------------------------------------
// Source training
// ---------------------------------------------------------------------------

SourceTrainResult train_source(const Model& init, const std::vector<std::vector<Sample>>& sources,
                               const SourceTrainConfig& cfg) {
    if (sources.empty()) throw std::invalid_argument("train_source: no source domains");
    for (const auto& s : sources) {
        if (s.empty()) throw std::invalid_argument("train_source: empty source stream");
    }
    if (cfg.epochs < 1 || cfg.lr <= 0.0 || cfg.batch_size < 2 || cfg.val_fraction <= 0.0 ||
        cfg.val_fraction >= 1.0) {
        throw std::invalid_argument("train_source: bad training configuration");
    }

    std::vector<Sample> pooled;
    for (const auto& s : sources) pooled.insert(pooled.end(), s.begin(), s.end());
    Rng rng(cfg.seed);
    rng.shuffle(pooled);
    const std::size_t val_count = std::max<std::size_t>(
        1, static_cast<std::size_t>(static_cast<double>(pooled.size()) * cfg.val_fraction));
    if (val_count >= pooled.size()) {
        throw std::invalid_argument("train_source: validation split leaves no training data");
    }
    const std::vector<Sample> val(pooled.end() - static_cast<std::ptrdiff_t>(val_count),
                                  pooled.end());
    std::vector<Sample> train(pooled.begin(),
                              pooled.end() - static_cast<std::ptrdiff_t>(val_count));

    Model model = init;
    const int dim = model.input_dim();
    std::vector<ParamRef> params = parameters(model);
    AdamState adam = make_adam_state(params);

    SourceTrainResult result;
    result.model = model;
    result.best_val_accuracy = -1.0;

    bool first_batch = true;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(train);
        for (std::size_t start = 0; start < train.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end =
                std::min(train.size(), start + static_cast<std::size_t>(cfg.batch_size));
            const int b = static_cast<int>(end - start);
            if (b < 2) continue;  // refresh-mode stats need at least two rows
            std::vector<double> x;
            x.reserve(static_cast<std::size_t>(b) * dim);
            std::vector<int> labels;
            for (std::size_t i = start; i < end; ++i) {
                x.insert(x.end(), train[i].x.begin(), train[i].x.end());
                labels.push_back(train[i].y);
            }
            Tape tape;
            ForwardResult fwd =
                forward(tape, model, Tensor({b, dim}, std::move(x)), StatsMode::refresh);
            Tensor loss = cross_entropy_loss(fwd.p, labels);
            if (first_batch) {
                result.first_batch_loss = loss.item();
                first_batch = false;
            }
            tape.backward(loss);
            std::vector<std::vector<double>> grads;
            grads.reserve(params.size());
            for (const Tensor& pt : fwd.params) grads.push_back(tape.grad(pt).values);
            adam_step(params, grads, adam, cfg.lr);
        }
        const double val_acc = evaluate_accuracy(model, val);
        result.epoch_val_accuracy.push_back(val_acc);
        if (val_acc > result.best_val_accuracy) {
            result.best_val_accuracy = val_acc;
            result.best_epoch = epoch;
            result.model = model;
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Online adaptation
// ---------------------------------------------------------------------------

namespace {

struct StepOutcome {
    double loss = 0.0;
    int num_reliable = 0;
    bool stepped = false;
    bool had_objective = false;
};

StepOutcome ours_step(Model& model, MemoryBank& bank, const Tensor& x, const AdaptConfig& cfg,
                      const std::vector<std::size_t>& scope, std::vector<ParamRef>& scoped_params,
                      AdamState& adam) {
    const int b = x.shape[0];
    // Batch statistics first (as in the bn baseline), then the gradient step
    // on top: the method's learning signal refines an already stats-aligned
    // network rather than fighting stale normalization. Reported predictions
    // are still scored before any of this touches the model.
    if (b >= 2) update_norm_stats(model, x);
    Tape tape;
    ForwardResult fwd = forward(tape, model, x, StatsMode::frozen);

    const std::int64_t first_index = bank.next_insert_index();
    bank.insert_batch(fwd.z, fwd.p);

    const PrototypeSet protos = prototypes(bank, cfg.ef ? cfg.m : std::nullopt);
    const int c = model.num_classes;
    const int d = model.feature_dim();
    // A row whose embedding is exactly zero (every relu unit dead) has no
    // direction: it gets a uniform soft label, never passes the mask, and
    // contributes no clustering term.
    std::vector<bool> row_ok(static_cast<std::size_t>(b), false);
    std::vector<double> y_flat(static_cast<std::size_t>(b) * c, 1.0 / static_cast<double>(c));
    for (int i = 0; i < b; ++i) {
        const std::vector<double> zi(fwd.z.values.begin() + static_cast<std::ptrdiff_t>(i) * d,
                                     fwd.z.values.begin() + static_cast<std::ptrdiff_t>(i + 1) * d);
        for (double v : zi) row_ok[static_cast<std::size_t>(i)] = row_ok[static_cast<std::size_t>(i)] || v != 0.0;
        if (!row_ok[static_cast<std::size_t>(i)]) continue;
        const std::vector<double> yi = proto_classify(zi, protos);
        std::copy(yi.begin(), yi.end(), y_flat.begin() + static_cast<std::ptrdiff_t>(i) * c);
    }

    LossBundle bundle;
    bundle.mask = cfg.cf ? consistency_mask(fwd.p, y_flat)
                         : std::vector<bool>(static_cast<std::size_t>(b), true);
    for (int i = 0; i < b; ++i) {
        bundle.mask[static_cast<std::size_t>(i)] =
            bundle.mask[static_cast<std::size_t>(i)] && row_ok[static_cast<std::size_t>(i)];
        bundle.num_reliable += bundle.mask[static_cast<std::size_t>(i)] ? 1 : 0;
    }

    if (cfg.sd) {
        TsdResult tsd = tsd_loss(fwd.p, y_flat, bundle.mask);
        bundle.tsd = tsd.loss;
        bundle.tsd_skipped = tsd.skipped;
    } else {
        bundle.tsd = tape.constant({}, {0.0});
    }

    if (cfg.mslc) {
        Tensor acc = tape.constant({}, {0.0});
        for (int i = 0; i < b; ++i) {
            if (!row_ok[static_cast<std::size_t>(i)]) continue;
            const std::vector<double> zi(
                fwd.z.values.begin() + static_cast<std::ptrdiff_t>(i) * d,
                fwd.z.values.begin() + static_cast<std::ptrdiff_t>(i + 1) * d);
            const std::vector<Neighbor> nbs = knn(bank, zi, cfg.k, {first_index + i});
            std::vector<NeighborVal> vals;
            vals.reserve(nbs.size());
            for (const Neighbor& nb : nbs) vals.push_back({&nb.entry->z, &nb.entry->p});
            acc = add(acc, mslc_loss(row(fwd.z, i), row(fwd.p, i), vals));
        }
        bundle.mslc = scalar_mul(acc, 1.0 / static_cast<double>(b));
    } else {
        bundle.mslc = tape.constant({}, {0.0});
    }
    bundle.total = total_loss(bundle.tsd, bundle.mslc, cfg.lambda);

    StepOutcome out;
    out.loss = bundle.total.item();
    out.num_reliable = bundle.num_reliable;
    out.had_objective = bundle.total.requires_grad;
    if (out.had_objective) {
        tape.backward(bundle.total);
        std::vector<std::vector<double>> grads;
        grads.reserve(scope.size());
        for (std::size_t idx : scope) grads.push_back(tape.grad(fwd.params[idx]).values);
        out.stepped = adam_step(scoped_params, grads, adam, cfg.lr);
    }
    return out;
}

StepOutcome gradient_step(Model& model, const Tensor& x, const AdaptConfig& cfg,
                          const std::vector<std::size_t>& scope,
                          std::vector<ParamRef>& scoped_params, AdamState& adam) {
    // Same stats-then-gradient structure as ours_step: these baselines are
    // defined on top of test-time batch statistics.
    if (x.shape[0] >= 2) update_norm_stats(model, x);
    Tape tape;
    ForwardResult fwd = forward(tape, model, x, StatsMode::frozen);

    StepOutcome out;
    Tensor loss;
    if (cfg.method == Method::tent) {
        loss = tent_entropy_loss(fwd.p);
        out.num_reliable = x.shape[0];
        out.had_objective = true;
    } else {  // pl
        PlResult pl = pl_loss(fwd.p, cfg.pl_threshold);
        loss = pl.loss;
        out.num_reliable = pl.num_confident;
        out.had_objective = !pl.skipped;
    }
    out.loss = loss.item();
    if (out.had_objective) {
        tape.backward(loss);
        std::vector<std::vector<double>> grads;
        grads.reserve(scope.size());
        for (std::size_t idx : scope) grads.push_back(tape.grad(fwd.params[idx]).values);
        out.stepped = adam_step(scoped_params, grads, adam, cfg.lr);
    }
    return out;
}

}  // namespace

Metrics adapt_stream(Model& model, const Stream& stream, const AdaptConfig& cfg) {
    if (stream.batches.empty()) throw std::invalid_argument("adapt_stream: empty stream");
    if (stream.input_dim != model.input_dim()) {
        throw std::invalid_argument("adapt_stream: stream dim " + std::to_string(stream.input_dim) +
                                    " != model input dim " + std::to_string(model.input_dim()));
    }
    if (cfg.lr < 0.0 || cfg.lambda < 0.0 || cfg.k < 1 || (cfg.m && *cfg.m < 0)) {
        throw std::invalid_argument("adapt_stream: bad configuration value");
    }

    std::vector<ParamRef> all_params = parameters(model);
    const std::vector<std::size_t> scope = scoped_indices(all_params, cfg.update_scope);
    std::vector<ParamRef> scoped_params;
    for (std::size_t idx : scope) scoped_params.push_back(all_params[idx]);
    AdamState adam = make_adam_state(scoped_params);

    std::optional<MemoryBank> bank;
    if (cfg.method == Method::ours) {
        bank = MemoryBank::init_from_classifier(
            Tensor({model.head.out, model.head.in}, model.head.W));
        if (cfg.bank_capacity > 0) bank->set_capacity(cfg.bank_capacity);
    }

    Metrics metrics;
    const int c = model.num_classes;
    for (std::size_t bi = 0; bi < stream.batches.size(); ++bi) {
        const StreamBatch& sb = stream.batches[bi];
        const std::vector<int>& labels = stream.hidden_labels[bi];
        const Tensor x({sb.size, stream.input_dim}, sb.x);

        int correct_pre = 0;
        {
            const EvalResult ev = eval_forward(model, sb.x, sb.size);
            correct_pre = count_correct(ev.p, sb.size, c, labels);
        }

        StepOutcome outcome;
        switch (cfg.method) {
            case Method::erm:
                break;
            case Method::bn:
                if (sb.size >= 2) {  // variance needs two rows; a size-1 tail is skipped
                    update_norm_stats(model, x);
                    outcome.stepped = true;
                    outcome.had_objective = true;
                }
                break;
            case Method::tent:
            case Method::pl:
                outcome = gradient_step(model, x, cfg, scope, scoped_params, adam);
                break;
            case Method::ours:
                outcome = ours_step(model, *bank, x, cfg, scope, scoped_params, adam);
                break;
        }

        int correct = correct_pre;
        if (cfg.report_post_update) {
            const EvalResult ev = eval_forward(model, sb.x, sb.size);
            correct = count_correct(ev.p, sb.size, c, labels);
        }

        metrics.total_seen += sb.size;
        metrics.total_correct += correct;
        if (outcome.stepped && cfg.method != Method::bn) {
            metrics.optimizer_steps += 1;
        }
        // erm never updates by design; every other method that fails to update
        // on a batch counts it as skipped.
        if (cfg.method != Method::erm && !outcome.stepped) metrics.skipped_batches += 1;

        BatchRecord rec;
        rec.batch_index = static_cast<int>(bi);
        rec.batch_accuracy = static_cast<double>(correct) / sb.size;
        rec.cumulative_accuracy =
            static_cast<double>(metrics.total_correct) / static_cast<double>(metrics.total_seen);
        rec.loss = outcome.loss;
        rec.num_reliable = outcome.num_reliable;
        rec.bank_size = bank ? bank->size() : 0;
        metrics.per_batch.push_back(rec);
    }
    metrics.cumulative_accuracy =
        static_cast<double>(metrics.total_correct) / static_cast<double>(metrics.total_seen);
    return metrics;
}

}  // namespace tta
