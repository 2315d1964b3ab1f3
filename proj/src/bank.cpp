#include "tta/bank.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>

#include "tta/vecmath.hpp"

namespace tta {

MemoryBank::MemoryBank(int d, int num_classes) : d_(d), num_classes_(num_classes) {
    if (d < 1 || num_classes < 2) {
        throw std::invalid_argument("bank: need d >= 1 and num_classes >= 2");
    }
}

MemoryBank MemoryBank::init_from_classifier(const Tensor& head_w) {
    if (head_w.rank() != 2) {
        throw std::invalid_argument("bank init: head weights must be rank-2, got " +
                                    shape_str(head_w.shape));
    }
    const int C = head_w.shape[0], d = head_w.shape[1];
    MemoryBank bank(d, C);
    for (int k = 0; k < C; ++k) {
        std::vector<double> z(head_w.values.begin() + static_cast<std::ptrdiff_t>(k) * d,
                              head_w.values.begin() + static_cast<std::ptrdiff_t>(k + 1) * d);
        if (l2_norm(z) == 0.0) {
            throw std::invalid_argument("bank init: head weight row " + std::to_string(k) +
                                        " is zero; cosine similarity undefined");
        }
        std::vector<double> p(static_cast<std::size_t>(C), 0.0);
        p[static_cast<std::size_t>(k)] = 10.0;
        bank.push_entry(std::move(z), std::move(p), BankEntry::Origin::classifier_init);
    }
    return bank;
}

void MemoryBank::push_entry(std::vector<double> z, std::vector<double> p,
                            BankEntry::Origin origin) {
    BankEntry e;
    e.entropy = shannon_entropy(p);
    e.pseudo_label = argmax_lowest_tie(p);
    e.insert_index = next_index_++;
    e.origin = origin;
    e.z = std::move(z);
    e.p = std::move(p);
    entries_.push_back(std::move(e));

    if (capacity_ > 0 && size() > capacity_) {
        const auto victim = std::find_if(entries_.begin(), entries_.end(), [](const BankEntry& b) {
            return b.origin == BankEntry::Origin::stream;
        });
        if (victim != entries_.end()) entries_.erase(victim);
    }
}

void MemoryBank::insert_batch(const Tensor& z_batch, const Tensor& p_batch) {
    if (z_batch.rank() != 2 || p_batch.rank() != 2 || z_batch.shape[0] != p_batch.shape[0] ||
        z_batch.shape[1] != d_ || p_batch.shape[1] != num_classes_) {
        throw std::invalid_argument("insert_batch: shapes " + shape_str(z_batch.shape) + " / " +
                                    shape_str(p_batch.shape) + " do not match bank (d=" +
                                    std::to_string(d_) + ", C=" + std::to_string(num_classes_) +
                                    ")");
    }
    const int b = z_batch.shape[0];
    for (int i = 0; i < b; ++i) {
        std::vector<double> z(z_batch.values.begin() + static_cast<std::ptrdiff_t>(i) * d_,
                              z_batch.values.begin() + static_cast<std::ptrdiff_t>(i + 1) * d_);
        std::vector<double> p(
            p_batch.values.begin() + static_cast<std::ptrdiff_t>(i) * num_classes_,
            p_batch.values.begin() + static_cast<std::ptrdiff_t>(i + 1) * num_classes_);
        push_entry(std::move(z), std::move(p), BankEntry::Origin::stream);
    }
}

void MemoryBank::dump_csv(const std::string& path) const {
    std::unique_ptr<std::FILE, int (*)(std::FILE*)> f(std::fopen(path.c_str(), "w"), &std::fclose);
    if (!f) throw std::runtime_error("bank dump: cannot open '" + path + "'");
    std::fprintf(f.get(), "insert_index,pseudo_label,entropy");
    for (int j = 0; j < d_; ++j) std::fprintf(f.get(), ",z%d", j);
    for (int k = 0; k < num_classes_; ++k) std::fprintf(f.get(), ",p%d", k);
    std::fprintf(f.get(), "\n");
    for (const BankEntry& e : entries_) {
        std::fprintf(f.get(), "%lld,%d,%.17g", static_cast<long long>(e.insert_index),
                     e.pseudo_label, e.entropy);
        for (double v : e.z) std::fprintf(f.get(), ",%.17g", v);
        for (double v : e.p) std::fprintf(f.get(), ",%.17g", v);
        std::fprintf(f.get(), "\n");
    }
}

PrototypeSet prototypes(const MemoryBank& bank, std::optional<int> filter_m) {
    if (filter_m && *filter_m < 0) {
        throw std::invalid_argument("prototypes: filter count must be >= 0");
    }
    const auto& entries = bank.entries();
    const int C = bank.num_classes(), d = bank.dim();

    PrototypeSet out;
    out.c.assign(static_cast<std::size_t>(C), std::vector<double>(static_cast<std::size_t>(d), 0.0));
    out.support_count.assign(static_cast<std::size_t>(C), 0);

    for (int k = 0; k < C; ++k) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < entries.size(); ++i) {
            if (entries[i].pseudo_label == k) members.push_back(i);
        }
        if (members.empty()) {
            throw std::logic_error("prototypes: class " + std::to_string(k) +
                                   " has no bank entries (bank not initialized?)");
        }
        if (filter_m && *filter_m > 0) {
            // Order by (entropy asc, insert_index asc): the tail holds the
            // highest-entropy entries with ties on the newer ones, which is
            // exactly the drop set. Keeping at least one entry per class.
            std::sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
                if (entries[a].entropy != entries[b].entropy) {
                    return entries[a].entropy < entries[b].entropy;
                }
                return entries[a].insert_index < entries[b].insert_index;
            });
            const std::size_t drop = std::min<std::size_t>(static_cast<std::size_t>(*filter_m),
                                                           members.size() - 1);
            members.resize(members.size() - drop);
        }
        // Accumulate in insertion order so the result does not depend on the
        // sort above.
        std::sort(members.begin(), members.end());
        auto& ck = out.c[static_cast<std::size_t>(k)];
        for (std::size_t i : members) {
            for (int j = 0; j < d; ++j) ck[static_cast<std::size_t>(j)] += entries[i].z[static_cast<std::size_t>(j)];
        }
        const double inv = 1.0 / static_cast<double>(members.size());
        for (double& v : ck) v *= inv;
        out.support_count[static_cast<std::size_t>(k)] = static_cast<int>(members.size());
    }
    return out;
}

std::vector<double> proto_classify(const std::vector<double>& z, const PrototypeSet& protos) {
    if (l2_norm(z) == 0.0) {
        throw std::invalid_argument("proto_classify: zero embedding has no direction");
    }
    std::vector<double> sims(protos.c.size());
    for (std::size_t k = 0; k < protos.c.size(); ++k) {
        sims[k] = cosine_similarity(z, protos.c[k]);
    }
    return softmax_values(sims);
}

std::vector<Neighbor> knn(const MemoryBank& bank, const std::vector<double>& z, int k,
                          const std::vector<std::int64_t>& exclude) {
    if (k < 1) throw std::invalid_argument("knn: k must be >= 1");
    if (static_cast<int>(z.size()) != bank.dim()) {
        throw std::invalid_argument("knn: query length " + std::to_string(z.size()) +
                                    " does not match bank dim " + std::to_string(bank.dim()));
    }
    std::vector<Neighbor> cands;
    cands.reserve(bank.entries().size());
    for (const BankEntry& e : bank.entries()) {
        if (std::find(exclude.begin(), exclude.end(), e.insert_index) != exclude.end()) continue;
        cands.push_back({&e, cosine_similarity(z, e.z)});
    }
    const std::size_t keep = std::min<std::size_t>(static_cast<std::size_t>(k), cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                      [](const Neighbor& a, const Neighbor& b) {
                          if (a.sim != b.sim) return a.sim > b.sim;
                          return a.entry->insert_index < b.entry->insert_index;
                      });
    cands.resize(keep);
    return cands;
}

}  // namespace tta
