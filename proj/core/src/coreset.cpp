// SPDX-License-Identifier: Apache-2.0
#include "quarc/coreset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

namespace quarc {

double score_evs(std::span<const real> p_q, int y) {
    if (y < 0 || std::size_t(y) >= p_q.size())
        throw ContractError("score_evs: label " + std::to_string(y) + " out of range");
    double acc = 0.0;
    for (std::size_t m = 0; m < p_q.size(); ++m) {
        const double d = double(p_q[m]) - (std::size_t(y) == m ? 1.0 : 0.0);
        acc += d * d;
    }
    return std::sqrt(acc);
}

double score_ds(std::span<const real> p_q, std::span<const real> p_t) {
    if (p_q.size() != p_t.size()) throw ContractError("score_ds: size mismatch");
    double acc = 0.0;
    for (std::size_t m = 0; m < p_q.size(); ++m) {
        const double d = double(p_q[m]) - double(p_t[m]);
        acc += d * d;
    }
    return std::sqrt(acc);
}

double score_res(std::span<const real> p_q, std::span<const real> p_f, double eps) {
    if (p_q.size() != p_f.size()) throw ContractError("score_res: size mismatch");
    double acc = 0.0;
    for (std::size_t m = 0; m < p_q.size(); ++m) {
        const double q = double(p_q[m]);
        if (q == 0.0) continue;  // 0 * log 0 := 0
        acc += q * std::log((q + eps) / (double(p_f[m]) + eps));
    }
    return acc;
}

double cosine_alpha(int t, int total_epochs) {
    if (total_epochs <= 0) throw ConfigError("cosine_alpha: total epochs must be > 0");
    if (t < 0 || t > total_epochs)
        throw ContractError("cosine_alpha: epoch outside [0, T]");
    return std::cos(double(t) * std::numbers::pi / (2.0 * double(total_epochs)));
}

double combine_scores(double evs, double ds, double res, int t, int total_epochs,
                      const MetricMask& mask) {
    const double alpha = cosine_alpha(t, total_epochs);
    double out = 0.0;
    if (mask.evs) out += alpha * evs;
    if (mask.ds) out += (1.0 - alpha) * ds;
    if (mask.res) out += res;
    return out;
}

ScoreDatasetResult score_dataset(ModelInstance& student, ModelInstance& teacher,
                                 const Dataset& data, std::span<const int> ids, int t,
                                 int total_epochs, std::size_t batch_size,
                                 const MetricMask& mask, bool normalize_res) {
    if (ids.empty()) throw ConfigError("score_dataset: empty dataset");
    ScoreDatasetResult out;
    out.scores.reserve(ids.size());

    for (const auto& batch_ids : sequential_batches(ids, batch_size)) {
        Tensor xb = gather_features(data, batch_ids);
        std::vector<int> yb = gather_labels(data, batch_ids);

        Graph gs, gt;
        ForwardResult sres = forward(gs, student, xb);
        ForwardResult tres = forward(gt, teacher, xb);
        out.forward_batches += 2;

        const std::size_t m = sres.probs.dim(1);
        auto sp = sres.probs.values();
        auto tp = tres.probs.values();
        for (std::size_t i = 0; i < batch_ids.size(); ++i) {
            std::span<const real> pq(&sp[i * m], m);
            std::span<const real> pt(&tp[i * m], m);
            SampleScore s;
            s.sample_id = batch_ids[i];
            s.evs = score_evs(pq, yb[i]);
            s.ds = score_ds(pq, pt);
            s.res = score_res(pq, pt);
            s.combined = combine_scores(s.evs, s.ds, s.res, t, total_epochs, mask);
            s.epoch_computed = t;
            out.scores.push_back(s);
        }
    }
    if (normalize_res) {
        double lo = out.scores.front().res, hi = lo;
        for (const auto& s : out.scores) {
            lo = std::min(lo, s.res);
            hi = std::max(hi, s.res);
        }
        const double span = hi - lo;
        for (auto& s : out.scores) {
            const double scaled = span > 0 ? (s.res - lo) / span : 0.0;
            s.combined = combine_scores(s.evs, s.ds, scaled, t, total_epochs, mask);
        }
    }
    return out;
}

SelectionRound select_top(const std::vector<SampleScore>& scores, double fraction, int epoch,
                          int total_epochs) {
    if (!(fraction > 0.0 && fraction <= 1.0))
        throw ConfigError("select_top: fraction must lie in (0, 1]");
    if (scores.empty()) throw ConfigError("select_top: empty score table");
    const std::size_t n = scores.size();
    const std::size_t keep = std::max<std::size_t>(1, std::size_t(std::floor(fraction * double(n))));

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a].combined != scores[b].combined)
            return scores[a].combined > scores[b].combined;
        return scores[a].sample_id < scores[b].sample_id;
    });

    SelectionRound round;
    round.epoch = epoch;
    round.fraction = fraction;
    round.alpha = cosine_alpha(epoch, total_epochs);
    round.selected_ids.reserve(keep);
    for (std::size_t i = 0; i < keep && i < n; ++i)
        round.selected_ids.push_back(scores[order[i]].sample_id);
    std::sort(round.selected_ids.begin(), round.selected_ids.end());
    return round;
}

std::vector<int> uncovered_classes(const Dataset& data, std::span<const int> selected) {
    std::set<int> seen;
    for (int id : selected) seen.insert(data.labels[std::size_t(id)]);
    std::vector<int> missing;
    for (int c = 0; c < data.classes; ++c)
        if (!seen.count(c)) missing.push_back(c);
    return missing;
}

void write_scores_csv(const std::string& path, const std::vector<SampleScore>& scores) {
    std::ofstream out(path);
    if (!out) throw FormatError("scores csv: cannot open " + path);
    out << "sample_id,evs,ds,res,combined,epoch\n";
    out.precision(17);
    for (const auto& s : scores) {
        out << s.sample_id << ',' << s.evs << ',' << s.ds << ',' << s.res << ',' << s.combined
            << ',' << s.epoch_computed << '\n';
    }
    if (!out) throw FormatError("scores csv: write failed for " + path);
}

}  // namespace quarc
