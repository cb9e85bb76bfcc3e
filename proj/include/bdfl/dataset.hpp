#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "bdfl/common.hpp"

namespace bdfl {

enum class Provenance { synthetic, mnist_subset, poisoned };

inline const char* provenance_name(Provenance p) {
    switch (p) {
        case Provenance::synthetic: return "synthetic";
        case Provenance::mnist_subset: return "mnist-subset";
        case Provenance::poisoned: return "poisoned";
    }
    return "?";
}

// Labeled feature matrix, one sample per row.
struct Dataset {
    Eigen::MatrixXd features;  // n x dim
    std::vector<int> labels;
    int num_classes = 0;
    Provenance provenance = Provenance::synthetic;

    Eigen::Index size() const { return features.rows(); }
    Eigen::Index dim() const { return features.cols(); }
    bool empty() const { return features.rows() == 0; }

    Dataset take(const std::vector<Eigen::Index>& idx) const {
        Dataset out;
        out.features.resize(static_cast<Eigen::Index>(idx.size()), features.cols());
        out.labels.resize(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            out.features.row(static_cast<Eigen::Index>(i)) = features.row(idx[i]);
            out.labels[i] = labels[static_cast<std::size_t>(idx[i])];
        }
        out.num_classes = num_classes;
        out.provenance = provenance;
        return out;
    }
};

// Gaussian clusters with distinct means: class mean = spread * (random unit
// vector), unit per-coordinate noise. Samples are emitted class-major.
inline Dataset gen_synthetic_blobs(int num_classes, int per_class, int dim, double spread,
                                   std::uint64_t seed) {
    if (num_classes < 1 || per_class < 1 || dim < 1)
        throw std::invalid_argument("gen_synthetic_blobs: sizes must be positive");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    Eigen::MatrixXd means(num_classes, dim);
    for (int c = 0; c < num_classes; ++c) {
        Eigen::VectorXd m(dim);
        for (int d = 0; d < dim; ++d) m(d) = normal(rng);
        means.row(c) = spread * m.normalized();
    }

    Dataset ds;
    ds.num_classes = num_classes;
    ds.features.resize(static_cast<Eigen::Index>(num_classes) * per_class, dim);
    ds.labels.resize(static_cast<std::size_t>(num_classes) * static_cast<std::size_t>(per_class));
    Eigen::Index row = 0;
    for (int c = 0; c < num_classes; ++c) {
        for (int i = 0; i < per_class; ++i, ++row) {
            for (int d = 0; d < dim; ++d) ds.features(row, d) = means(c, d) + normal(rng);
            ds.labels[static_cast<std::size_t>(row)] = c;
        }
    }
    return ds;
}

enum class PartitionScheme { iid, label_skew };

// Splits a dataset into per-client local datasets. Partitions are disjoint
// and exhaustive. iid: seeded shuffle, near-equal contiguous chunks.
// label_skew: label-pure shards (shards_per_client each), so a client sees at
// most shards_per_client distinct labels.
inline std::vector<Dataset> partition_dataset(const Dataset& ds, int num_clients,
                                              PartitionScheme scheme, std::uint64_t seed,
                                              int shards_per_client = 2) {
    if (num_clients < 1) throw std::invalid_argument("partition_dataset: num_clients must be >= 1");
    if (static_cast<Eigen::Index>(num_clients) > ds.size())
        throw std::invalid_argument("partition_dataset: more clients than samples");
    std::mt19937_64 rng(seed);

    std::vector<std::vector<Eigen::Index>> assigned(static_cast<std::size_t>(num_clients));
    if (scheme == PartitionScheme::iid) {
        std::vector<Eigen::Index> idx(static_cast<std::size_t>(ds.size()));
        std::iota(idx.begin(), idx.end(), 0);
        std::shuffle(idx.begin(), idx.end(), rng);
        const std::size_t base = idx.size() / static_cast<std::size_t>(num_clients);
        const std::size_t extra = idx.size() % static_cast<std::size_t>(num_clients);
        std::size_t pos = 0;
        for (std::size_t c = 0; c < static_cast<std::size_t>(num_clients); ++c) {
            std::size_t count = base + (c < extra ? 1 : 0);
            assigned[c].assign(idx.begin() + static_cast<std::ptrdiff_t>(pos),
                               idx.begin() + static_cast<std::ptrdiff_t>(pos + count));
            pos += count;
        }
    } else {
        if (shards_per_client < 1)
            throw std::invalid_argument("partition_dataset: shards_per_client must be >= 1");
        // Label-pure shards: slice each label's index list into a quota of
        // near-equal chunks, then deal shuffled shards to clients.
        std::vector<std::vector<Eigen::Index>> by_label(static_cast<std::size_t>(ds.num_classes));
        for (Eigen::Index i = 0; i < ds.size(); ++i)
            by_label[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(i)])].push_back(i);
        int present_labels = 0;
        for (const auto& v : by_label)
            if (!v.empty()) ++present_labels;
        const int total_shards = num_clients * shards_per_client;
        if (total_shards < present_labels)
            throw std::invalid_argument(
                "partition_dataset: need at least one shard per present label");

        // Proportional quotas by largest remainder, each present label >= 1.
        std::vector<int> quota(by_label.size(), 0);
        std::vector<std::pair<double, int>> rem;
        int assigned_quota = 0;
        for (std::size_t l = 0; l < by_label.size(); ++l) {
            if (by_label[l].empty()) continue;
            double exact = static_cast<double>(by_label[l].size()) * total_shards /
                           static_cast<double>(ds.size());
            quota[l] = std::max(1, static_cast<int>(exact));
            quota[l] = std::min<int>(quota[l], static_cast<int>(by_label[l].size()));
            assigned_quota += quota[l];
            rem.emplace_back(exact - quota[l], static_cast<int>(l));
        }
        std::sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        for (std::size_t k = 0; assigned_quota < total_shards; k = (k + 1) % rem.size()) {
            int l = rem[k].second;
            if (quota[static_cast<std::size_t>(l)] <
                static_cast<int>(by_label[static_cast<std::size_t>(l)].size())) {
                ++quota[static_cast<std::size_t>(l)];
                ++assigned_quota;
            } else {
                // label exhausted (one sample per shard already); skip
                bool any = false;
                for (const auto& [_, ll] : rem)
                    if (quota[static_cast<std::size_t>(ll)] <
                        static_cast<int>(by_label[static_cast<std::size_t>(ll)].size()))
                        any = true;
                if (!any)
                    throw std::invalid_argument("partition_dataset: more shards than samples");
            }
        }
        while (assigned_quota > total_shards) {
            // shrink the largest quota; keeps every label >= 1
            auto it = std::max_element(quota.begin(), quota.end());
            if (*it <= 1) break;
            --*it;
            --assigned_quota;
        }

        std::vector<std::vector<Eigen::Index>> shards;
        for (std::size_t l = 0; l < by_label.size(); ++l) {
            if (by_label[l].empty()) continue;
            const auto& pool = by_label[l];
            int q = quota[l];
            std::size_t base = pool.size() / static_cast<std::size_t>(q);
            std::size_t extra = pool.size() % static_cast<std::size_t>(q);
            std::size_t pos = 0;
            for (int s = 0; s < q; ++s) {
                std::size_t count = base + (static_cast<std::size_t>(s) < extra ? 1 : 0);
                shards.emplace_back(pool.begin() + static_cast<std::ptrdiff_t>(pos),
                                    pool.begin() + static_cast<std::ptrdiff_t>(pos + count));
                pos += count;
            }
        }
        std::shuffle(shards.begin(), shards.end(), rng);
        for (std::size_t c = 0, s = 0; c < static_cast<std::size_t>(num_clients); ++c) {
            for (int k = 0; k < shards_per_client && s < shards.size(); ++k, ++s) {
                auto& a = assigned[c];
                a.insert(a.end(), shards[s].begin(), shards[s].end());
            }
        }
    }

    std::vector<Dataset> out;
    out.reserve(static_cast<std::size_t>(num_clients));
    for (const auto& idx : assigned) out.push_back(ds.take(idx));
    return out;
}

// Deterministic train/holdout split (holdout gets ceil(fraction*n), at least
// 0; train keeps the rest).
inline std::pair<Dataset, Dataset> split_holdout(const Dataset& ds, double fraction,
                                                 std::uint64_t seed) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(ds.size()));
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    std::size_t hold = static_cast<std::size_t>(fraction * static_cast<double>(idx.size()));
    if (hold >= idx.size() && !idx.empty()) hold = idx.size() - 1;  // keep at least 1 train sample
    std::vector<Eigen::Index> hold_idx(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(hold));
    std::vector<Eigen::Index> train_idx(idx.begin() + static_cast<std::ptrdiff_t>(hold), idx.end());
    return {ds.take(train_idx), ds.take(hold_idx)};
}

}  // namespace bdfl
