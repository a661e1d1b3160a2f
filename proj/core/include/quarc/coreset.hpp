// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "quarc/data.hpp"
#include "quarc/model.hpp"

namespace quarc {

/// Per-sample selection scores; evs and ds are L2 distances between
/// probability vectors (bounded by sqrt(2)), res is a KL divergence
/// (non-negative, unbounded).
struct SampleScore {
    int sample_id = 0;
    double evs = 0;
    double ds = 0;
    double res = 0;
    double combined = 0;
    int epoch_computed = 0;
};

struct SelectionRound {
    int epoch = 0;
    double fraction = 1.0;
    double alpha = 1.0;               // cos(t*pi/(2T)) at the selection epoch
    std::vector<int> selected_ids;    // ascending ids, exactly the top-k set
};

/// Which terms participate in the combined metric; all three on is the
/// full method, {evs, ds} is the gradient-only baseline.
struct MetricMask {
    bool evs = true;
    bool ds = true;
    bool res = true;
};

/// ||p_q - onehot(y)||_2
double score_evs(std::span<const real> p_q, int y);
/// ||p_q - p_t||_2
double score_ds(std::span<const real> p_q, std::span<const real> p_t);
/// sum_m p_q[m] * log((p_q[m]+eps) / (p_f[m]+eps))
double score_res(std::span<const real> p_q, std::span<const real> p_f, double eps = 1e-12);

/// cos(t*pi/(2T)); strictly decreasing from 1 at t=0 to 0 at t=T.
double cosine_alpha(int t, int total_epochs);

/// alpha*evs + (1-alpha)*ds + res, with masked-out terms dropped.
double combine_scores(double evs, double ds, double res, int t, int total_epochs,
                      const MetricMask& mask = {});

struct ScoreDatasetResult {
    std::vector<SampleScore> scores;       // one per id, in id order
    std::size_t forward_batches = 0;       // 2 * ceil(N / batch): one per model per batch
};

/// Scores every listed sample with frozen models: one student and one
/// teacher forward per batch. Deterministic given weights and ids.
/// With normalize_res set, the res term entering the combined score is
/// min-max rescaled over the scored set (experimentation mode; the
/// stored res stays raw and the default keeps the unnormalized sum).
ScoreDatasetResult score_dataset(ModelInstance& student, ModelInstance& teacher,
                                 const Dataset& data, std::span<const int> ids, int t,
                                 int total_epochs, std::size_t batch_size,
                                 const MetricMask& mask = {}, bool normalize_res = false);

/// Descending sort by combined score, ties broken by ascending sample_id;
/// keeps max(1, floor(fraction * N)) ids. The selected set is a pure
/// function of (scores, fraction); epoch/total only fill in metadata.
SelectionRound select_top(const std::vector<SampleScore>& scores, double fraction,
                          int epoch = 0, int total_epochs = 1);

/// Classes with no selected sample (used for a diagnostic warning only;
/// selection itself is global top-S%).
std::vector<int> uncovered_classes(const Dataset& data, std::span<const int> selected);

/// CSV dump with header sample_id,evs,ds,res,combined,epoch.
void write_scores_csv(const std::string& path, const std::vector<SampleScore>& scores);

}  // namespace quarc
