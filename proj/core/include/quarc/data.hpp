// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "quarc/tensor.hpp"

namespace quarc {

/// Immutable-after-load dataset: [N x D] features (or [N x C x H x W] for
/// images) plus integer labels in [0, classes).
struct Dataset {
    Tensor features;
    std::vector<int> labels;
    int classes = 0;
    std::string split = "full";  // "train" | "eval" | "full"
    // Per-feature normalization stats, set by fit_normalization on the
    // train split and copied to the eval split.
    std::vector<real> feat_mean;
    std::vector<real> feat_std;

    std::size_t size() const { return labels.size(); }
    bool is_image() const { return features.ndim() == 4; }
    std::size_t feature_dim() const { return features.size() / std::max<std::size_t>(size(), 1); }
    void validate() const;
};

enum class Generator { GaussianBlobs, TwoSpirals };

struct SyntheticSpec {
    Generator gen = Generator::GaussianBlobs;
    int classes = 2;
    int per_class = 100;
    real noise = 0.5;
    std::uint64_t seed = 0;
};

/// Gaussian blobs place class means on a circle of radius 3; two-spirals
/// are interleaved arms, one per class. Deterministic under the seed.
Dataset generate_synthetic(const SyntheticSpec& spec);

/// MNIST-style IDX pair (big-endian, magic 0x803 images / 0x801 labels).
/// Pixels are scaled to [0,1]; features come out [N x 1 x H x W].
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

/// CSV with header "label,f0,f1,...".
Dataset load_csv(const std::string& path);

struct SplitResult {
    Dataset train;
    Dataset eval;
};

/// Stratified per-class split; eval gets floor(eval_fraction * class count)
/// of each class. Deterministic under the seed.
SplitResult split_dataset(const Dataset& ds, double eval_fraction, std::uint64_t seed);

/// Computes per-feature mean/std on `train` and applies (x - mean) / std
/// to both splits. Stds are floored at 1e-8.
void normalize_splits(SplitResult& split);

/// Inverse of the normalization recorded in `ds` (round-trip support).
Tensor denormalize(const Dataset& ds, const Tensor& x);

/// Shuffled id order for one epoch, chopped into batches; the last partial
/// batch is kept. Order depends on (seed, epoch) only.
std::vector<std::vector<int>> epoch_batches(std::span<const int> ids, std::size_t batch_size,
                                            std::uint64_t seed, int epoch);

/// Fixed-order (ascending position) batches, for scoring and evaluation.
std::vector<std::vector<int>> sequential_batches(std::span<const int> ids,
                                                 std::size_t batch_size);

Tensor gather_features(const Dataset& ds, std::span<const int> ids);
std::vector<int> gather_labels(const Dataset& ds, std::span<const int> ids);
std::vector<int> all_ids(const Dataset& ds);

/// One-call convenience: stratified split plus per-epoch batch plan over
/// the train split.
class BatchPlan {
public:
    BatchPlan(const Dataset& ds, double eval_fraction, std::size_t batch_size,
              std::uint64_t seed);

    const Dataset& train() const { return split_.train; }
    const Dataset& eval() const { return split_.eval; }
    /// Batches of train ids for the given epoch.
    std::vector<std::vector<int>> batches(int epoch) const;

private:
    SplitResult split_;
    std::size_t batch_size_;
    std::uint64_t seed_;
};

}  // namespace quarc
