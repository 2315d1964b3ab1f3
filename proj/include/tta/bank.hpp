#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tta/tensor.hpp"

// Memory bank of (embedding, logits) pairs with entropy filtering, per-class
// prototypes, prototype-based soft classification, and exhaustive K-nearest-
// neighbor retrieval. All values stored here are plain numbers; nothing in
// the bank ever carries gradients.

namespace tta {

struct BankEntry {
    std::vector<double> z;  // length d
    std::vector<double> p;  // length C
    double entropy = 0.0;   // nats, of softmax(p)
    int pseudo_label = 0;   // argmax p, lowest-index tie-break
    std::int64_t insert_index = 0;
    enum class Origin { classifier_init, stream } origin = Origin::stream;
};

class MemoryBank {
public:
    MemoryBank(int d, int num_classes);

    // One low-entropy entry per class: z = row k of the head weight matrix,
    // logits = one-hot scaled by 10. Rejects a weight matrix with a zero row.
    static MemoryBank init_from_classifier(const Tensor& head_w);

    // Appends one entry per row of z/p, in batch order. Only values are
    // stored. An empty batch is a no-op.
    void insert_batch(const Tensor& z_batch, const Tensor& p_batch);

    // FIFO cap over stream-origin entries; classifier-init entries are never
    // evicted. Zero means unbounded (the default).
    void set_capacity(std::int64_t cap) { capacity_ = cap; }

    const std::vector<BankEntry>& entries() const { return entries_; }
    std::int64_t next_insert_index() const { return next_index_; }
    int dim() const { return d_; }
    int num_classes() const { return num_classes_; }
    std::int64_t size() const { return static_cast<std::int64_t>(entries_.size()); }

    // Debug dump, one row per entry: insert_index, pseudo_label, entropy,
    // z0..z{d-1}, p0..p{C-1}.
    void dump_csv(const std::string& path) const;

private:
    int d_ = 0;
    int num_classes_ = 0;
    std::int64_t next_index_ = 0;
    std::int64_t capacity_ = 0;
    std::vector<BankEntry> entries_;

    void push_entry(std::vector<double> z, std::vector<double> p, BankEntry::Origin origin);
};

struct PrototypeSet {
    std::vector<std::vector<double>> c;  // per class, length d
    std::vector<int> support_count;      // entries contributing per class
};

// Per class: drop the filter_m highest-entropy entries of that class (ties
// dropped newest-first), then average the surviving embeddings. If the filter
// would empty a class, its single lowest-entropy entry is kept instead.
// nullopt disables the filter entirely.
PrototypeSet prototypes(const MemoryBank& bank, std::optional<int> filter_m);

// Soft label over classes: softmax of cosine similarity between z and each
// prototype. Rejects an exactly-zero z.
std::vector<double> proto_classify(const std::vector<double>& z, const PrototypeSet& protos);

struct Neighbor {
    const BankEntry* entry = nullptr;
    double sim = 0.0;
};

// The k entries most cosine-similar to z, excluding the given insert
// indices, in descending similarity (ties: smaller insert_index first).
// Returns fewer than k when the bank is short; never fails on that.
std::vector<Neighbor> knn(const MemoryBank& bank, const std::vector<double>& z, int k,
                          const std::vector<std::int64_t>& exclude);

}  // namespace tta
