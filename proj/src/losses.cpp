#include "tta/losses.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>

#include "tta/vecmath.hpp"

namespace tta {

namespace {

Tape& tape_of(const Tensor& t, const char* who) {
    if (t.tape == nullptr) {
        throw std::logic_error(std::string(who) + ": logits must be recorded on a tape");
    }
    return *t.tape;
}

void check_batch(const Tensor& p, const char* who) {
    if (p.rank() != 2) {
        throw std::invalid_argument(std::string(who) + ": expected {batch, C} logits, got " +
                                    shape_str(p.shape));
    }
}

}  // namespace

std::vector<bool> consistency_mask(const Tensor& p_batch, const std::vector<double>& y_flat) {
    check_batch(p_batch, "consistency_mask");
    const int b = p_batch.shape[0], c = p_batch.shape[1];
    if (y_flat.size() != p_batch.values.size()) {
        throw std::invalid_argument("consistency_mask: target size mismatch");
    }
    std::vector<bool> mask(static_cast<std::size_t>(b));
    for (int i = 0; i < b; ++i) {
        const std::span<const double> pr(&p_batch.values[static_cast<std::size_t>(i) * c],
                                         static_cast<std::size_t>(c));
        const std::span<const double> yr(&y_flat[static_cast<std::size_t>(i) * c],
                                         static_cast<std::size_t>(c));
        mask[static_cast<std::size_t>(i)] = argmax_lowest_tie(pr) == argmax_lowest_tie(yr);
    }
    return mask;
}

TsdResult tsd_loss(const Tensor& p_batch, const std::vector<double>& y_flat,
                   const std::vector<bool>& mask) {
    check_batch(p_batch, "tsd_loss");
    Tape& tape = tape_of(p_batch, "tsd_loss");
    const int b = p_batch.shape[0], c = p_batch.shape[1];
    if (y_flat.size() != p_batch.values.size() || mask.size() != static_cast<std::size_t>(b)) {
        throw std::invalid_argument("tsd_loss: target or mask size mismatch");
    }
    int reliable = 0;
    for (bool m : mask) reliable += m ? 1 : 0;
    if (reliable == 0) {
        return {tape.constant({}, {0.0}), true};
    }

    std::vector<double> log_y(y_flat.size());
    for (std::size_t i = 0; i < y_flat.size(); ++i) log_y[i] = std::log(y_flat[i] + 1e-12);
    std::vector<double> mask_val(static_cast<std::size_t>(b));
    for (int i = 0; i < b; ++i) mask_val[static_cast<std::size_t>(i)] = mask[static_cast<std::size_t>(i)] ? 1.0 : 0.0;

    Tensor s = softmax(p_batch);                                    // {b, c}
    Tensor ly = tape.constant({b, c}, std::move(log_y));
    Tensor per_sample = rowsum(mul(s, ly));                         // {b}: sum_k softmax * log y
    Tensor masked = mul(per_sample, tape.constant({b}, std::move(mask_val)));
    return {scalar_mul(sum(masked), -1.0 / static_cast<double>(reliable)), false};
}

Tensor mslc_loss(const Tensor& z_i, const Tensor& p_i, const std::vector<NeighborVal>& neighbors) {
    if (z_i.rank() != 1 || p_i.rank() != 1) {
        throw std::invalid_argument("mslc_loss: expected rank-1 z and p for one sample");
    }
    Tape& tape = tape_of(p_i, "mslc_loss");
    if (neighbors.empty()) {
        return tape.constant({}, {0.0});
    }
    const int d = z_i.shape[0], c = p_i.shape[0], k = static_cast<int>(neighbors.size());

    std::vector<double> nb_z(static_cast<std::size_t>(k) * d);
    std::vector<double> nb_soft(static_cast<std::size_t>(k) * c);
    for (int j = 0; j < k; ++j) {
        const NeighborVal& nb = neighbors[static_cast<std::size_t>(j)];
        if (static_cast<int>(nb.z->size()) != d || static_cast<int>(nb.p->size()) != c) {
            throw std::invalid_argument("mslc_loss: neighbor dimension mismatch");
        }
        std::copy(nb.z->begin(), nb.z->end(), nb_z.begin() + static_cast<std::ptrdiff_t>(j) * d);
        const std::vector<double> soft = softmax_values(*nb.p);
        std::copy(soft.begin(), soft.end(), nb_soft.begin() + static_cast<std::ptrdiff_t>(j) * c);
    }

    // Replicate z over the neighbor rows, compute rowwise cosine similarity,
    // and detach it: the similarity weights are constants under the gradient.
    Tensor ones = tape.constant({k, d}, std::vector<double>(static_cast<std::size_t>(k) * d, 1.0));
    Tensor z_rep = mul(ones, z_i);                                   // {k, d}
    Tensor sims = stop_gradient(cosine_sim_rows(z_rep, tape.constant({k, d}, std::move(nb_z))));

    Tensor sp = softmax(p_i);                                        // {c}
    Tensor diff = sub(tape.constant({k, c}, std::move(nb_soft)), sp);  // {k, c}
    Tensor per_neighbor = rowsum(square(diff));                      // {k}
    return scalar_mul(sum(mul(sims, per_neighbor)), 1.0 / static_cast<double>(k));
}

Tensor total_loss(const Tensor& tsd, const Tensor& mslc, double lambda) {
    if (lambda < 0.0) throw std::invalid_argument("total_loss: lambda must be >= 0");
    return add(tsd, scalar_mul(mslc, lambda));
}

Tensor tent_entropy_loss(const Tensor& p_batch) {
    check_batch(p_batch, "tent_entropy_loss");
    Tensor s = softmax(p_batch);
    Tensor ls = log_softmax(p_batch);
    return scalar_mul(mean(rowsum(mul(s, ls))), -1.0);
}

PlResult pl_loss(const Tensor& p_batch, double threshold) {
    check_batch(p_batch, "pl_loss");
    if (threshold <= 0.0 || threshold >= 1.0) {
        throw std::invalid_argument("pl_loss: threshold must lie in (0,1)");
    }
    Tape& tape = tape_of(p_batch, "pl_loss");
    const int b = p_batch.shape[0], c = p_batch.shape[1];

    std::vector<double> pick(static_cast<std::size_t>(b) * c, 0.0);
    int confident = 0;
    for (int i = 0; i < b; ++i) {
        const std::span<const double> pr(&p_batch.values[static_cast<std::size_t>(i) * c],
                                         static_cast<std::size_t>(c));
        const std::vector<double> sp = softmax_values(pr);
        const int label = argmax_lowest_tie(sp);
        if (sp[static_cast<std::size_t>(label)] >= threshold) {
            pick[static_cast<std::size_t>(i) * c + label] = 1.0;
            ++confident;
        }
    }
    if (confident == 0) {
        return {tape.constant({}, {0.0}), true, 0};
    }
    Tensor ls = log_softmax(p_batch);
    Tensor picked = mul(ls, tape.constant({b, c}, std::move(pick)));
    return {scalar_mul(sum(picked), -1.0 / static_cast<double>(confident)), false, confident};
}

Tensor cross_entropy_loss(const Tensor& logits, const std::vector<int>& labels) {
    check_batch(logits, "cross_entropy_loss");
    Tape& tape = tape_of(logits, "cross_entropy_loss");
    const int b = logits.shape[0], c = logits.shape[1];
    if (labels.size() != static_cast<std::size_t>(b)) {
        throw std::invalid_argument("cross_entropy_loss: label count mismatch");
    }
    std::vector<double> onehot(static_cast<std::size_t>(b) * c, 0.0);
    for (int i = 0; i < b; ++i) {
        const int y = labels[static_cast<std::size_t>(i)];
        if (y < 0 || y >= c) {
            throw std::invalid_argument("cross_entropy_loss: label " + std::to_string(y) +
                                        " outside [0," + std::to_string(c) + ")");
        }
        onehot[static_cast<std::size_t>(i) * c + y] = 1.0;
    }
    Tensor ls = log_softmax(logits);
    Tensor picked = mul(ls, tape.constant({b, c}, std::move(onehot)));
    return scalar_mul(sum(picked), -1.0 / static_cast<double>(b));
}

}  // namespace tta
