// SPDX-License-Identifier: Apache-2.0
#include "quarc/losses.hpp"

#include <cmath>

namespace quarc {

namespace {

void check_prob_rows(const Tensor& t, const char* who) {
    if (t.ndim() != 2) throw ContractError(std::string(who) + ": expected [B x M] probabilities");
    const std::size_t b = t.dim(0), m = t.dim(1);
    auto v = t.values();
    for (std::size_t i = 0; i < b; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < m; ++j) s += double(v[i * m + j]);
        if (std::abs(s - 1.0) > 1e-3)
            throw ContractError(std::string(who) + ": row " + std::to_string(i) +
                                " sums to " + std::to_string(s) + ", not a distribution");
    }
}

}  // namespace

LossTerm kd_loss(Graph& g, const Tensor& teacher_probs, const Tensor& student_probs) {
    check_prob_rows(teacher_probs, "kd_loss teacher");
    check_prob_rows(student_probs, "kd_loss student");
    if (teacher_probs.shape() != student_probs.shape())
        throw ContractError("kd_loss: teacher/student shapes differ");

    const real inv_b = real(1) / real(student_probs.dim(0));
    Tensor lp = g.log_eps(student_probs, kLogEps);
    Tensor prod = g.mul(teacher_probs, lp);
    Tensor s = g.sum(prod);
    return {g.mul_scalar(s, -inv_b)};
}

ClcTerm clc_loss(Graph& g, const TapSet& teacher_taps, const TapSet& student_taps) {
    if (!teacher_taps.same_names(student_taps))
        throw ContractError("clc_loss: tap sets do not match");

    ClcTerm out;
    Tensor acc;
    for (std::size_t i = 0; i < student_taps.items.size(); ++i) {
        const auto& [name, tq] = student_taps.items[i];
        const Tensor& tf = teacher_taps.items[i].second;
        if (tq.shape() != tf.shape())
            throw ContractError("clc_loss: tap '" + name + "' shapes differ");

        const real inv_b = real(1) / real(tq.dim(0));
        Tensor q = g.softmax(tq);
        Tensor f = g.softmax(tf);
        // KL(Q||F) = sum q * (log(q+eps) - log(f+eps)), mean over batch
        Tensor diff = g.sub(g.log_eps(q, kLogEps), g.log_eps(f, kLogEps));
        Tensor term = g.mul_scalar(g.sum(g.mul(q, diff)), inv_b);
        out.per_tap.emplace_back(name, term.item());
        acc = acc.defined() ? g.add(acc, term) : term;
    }
    out.node = acc.defined() ? acc : Tensor::scalar(real(0));
    return out;
}

LossTerm total_loss(Graph& g, const LossTerm& kd, const Tensor& clc_node, real beta) {
    if (beta < real(0)) throw ConfigError("total_loss: beta must be >= 0");
    return {g.add(kd.node, g.mul_scalar(clc_node, beta))};
}

LossTerm ce_loss(Graph& g, const Tensor& probs, const std::vector<int>& labels) {
    check_prob_rows(probs, "ce_loss");
    if (labels.size() != probs.dim(0))
        throw ContractError("ce_loss: one label per row required");
    const real inv_b = real(1) / real(probs.dim(0));
    Tensor picked = g.gather_rows(probs, labels);  // validates label range
    Tensor lp = g.log_eps(picked, kLogEps);
    return {g.mul_scalar(g.sum(lp), -inv_b)};
}

LossReport make_report(const LossTerm& kd, const ClcTerm& clc, real beta) {
    LossReport rep;
    rep.kd = kd.value();
    rep.clc = clc.node.defined() ? clc.value() : 0.0;
    rep.total = rep.kd + double(beta) * rep.clc;
    rep.per_tap = clc.per_tap;
    return rep;
}

}  // namespace quarc
