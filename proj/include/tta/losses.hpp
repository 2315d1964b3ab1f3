#pragma once

#include <vector>

#include "tta/tensor.hpp"

// Adaptation objectives. Tensors named p_* are logits recorded on a live tape
// (gradients flow through them); targets, masks and neighbor values enter the
// graph as constants. Scalar results are recorded on the same tape as their
// inputs.

namespace tta {

// Element i is true iff argmax p_i == argmax y_i (lowest-index tie-break on
// both sides). y_flat is row-major {batch, C}, matching p's shape.
std::vector<bool> consistency_mask(const Tensor& p_batch, const std::vector<double>& y_flat);

struct TsdResult {
    Tensor loss;           // scalar; a gradient-free zero when skipped
    bool skipped = false;  // no sample passed the mask
};

// Masked self-distillation: mean over mask-passing samples of the
// cross-entropy between softmax(p_i) and the constant soft target y_i.
// Targets are clamped as log(y + 1e-12).
TsdResult tsd_loss(const Tensor& p_batch, const std::vector<double>& y_flat,
                   const std::vector<bool>& mask);

struct NeighborVal {
    const std::vector<double>* z = nullptr;  // embedding, length d
    const std::vector<double>* p = nullptr;  // logits, length C
};

// Local-clustering term for one sample: mean over neighbors of
// sim(z, z_j) * sum_k (softmax(p)_k - softmax(p_j)_k)^2, with the similarity
// factor detached so gradients flow only through softmax(p). Empty neighbor
// list yields a gradient-free zero.
Tensor mslc_loss(const Tensor& z_i, const Tensor& p_i, const std::vector<NeighborVal>& neighbors);

// total = tsd + lambda * mslc.
Tensor total_loss(const Tensor& tsd, const Tensor& mslc, double lambda);

// Mean Shannon entropy of softmax(p_i) over the batch.
Tensor tent_entropy_loss(const Tensor& p_batch);

struct PlResult {
    Tensor loss;           // scalar; gradient-free zero when skipped
    bool skipped = false;  // no sample reached the confidence threshold
    int num_confident = 0;
};

// Hard pseudo-label cross-entropy averaged over samples whose max softmax
// probability reaches `threshold`.
PlResult pl_loss(const Tensor& p_batch, double threshold);

// Mean cross-entropy of logits against integer labels (source training).
Tensor cross_entropy_loss(const Tensor& logits, const std::vector<int>& labels);

// Everything the adaptation step needs to log about its objective.
struct LossBundle {
    Tensor tsd;
    Tensor mslc;
    Tensor total;
    std::vector<bool> mask;
    int num_reliable = 0;
    bool tsd_skipped = false;
};

}  // namespace tta
