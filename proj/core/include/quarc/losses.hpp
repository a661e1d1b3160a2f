// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "quarc/graph.hpp"
#include "quarc/model.hpp"

namespace quarc {

inline constexpr real kLogEps = 1e-12;

/// A graph-connected scalar loss; value() is the 64-bit reduction result.
struct LossTerm {
    Tensor node;
    double value() const { return node.item(); }
};

struct ClcTerm {
    Tensor node;
    std::vector<std::pair<std::string, double>> per_tap;
    double value() const { return node.item(); }
};

/// Per-batch loss summary; total == kd + beta * clc within 1e-9.
struct LossReport {
    double kd = 0;
    double clc = 0;
    double total = 0;
    std::vector<std::pair<std::string, double>> per_tap;
};

/// Distillation cross-entropy: mean over the batch of
/// -sum_m p_T[m] * log(p_Q[m] + eps). The teacher rows must be detached
/// by the caller; both arguments must be probability rows (sum 1 +- 1e-3).
LossTerm kd_loss(Graph& g, const Tensor& teacher_probs, const Tensor& student_probs);

/// Layer-correction loss: per tap, flattened outputs are normalized to
/// per-sample distributions via softmax, then KL(Q||F) summed over taps
/// and averaged over the batch. Teacher taps must be detached.
ClcTerm clc_loss(Graph& g, const TapSet& teacher_taps, const TapSet& student_taps);

/// kd + beta * clc, graph-connected through both terms.
LossTerm total_loss(Graph& g, const LossTerm& kd, const Tensor& clc_node, real beta);

/// Plain cross-entropy on probability rows: mean -log(probs[b, y_b] + eps).
LossTerm ce_loss(Graph& g, const Tensor& probs, const std::vector<int>& labels);

LossReport make_report(const LossTerm& kd, const ClcTerm& clc, real beta);

}  // namespace quarc
