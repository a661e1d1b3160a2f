// SPDX-License-Identifier: Apache-2.0
//
// Independent reference implementations used as test oracles. Everything
// here is plain scalar code in double / long double, written separately
// from the engine paths it checks.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace oracle {

// --------------------------------------------------------------------------
// relative error with a carve-out when both values are effectively zero
// --------------------------------------------------------------------------
inline double rel_err(double a, double b) {
    const double m = std::max(std::abs(a), std::abs(b));
    if (m < 1e-8) return 0.0;
    return std::abs(a - b) / m;
}

// --------------------------------------------------------------------------
// triple-loop matmul
// --------------------------------------------------------------------------
inline std::vector<double> matmul(const std::vector<double>& a, const std::vector<double>& b,
                                  std::size_t m, std::size_t k, std::size_t n) {
    std::vector<double> c(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t p = 0; p < k; ++p) c[i * n + j] += a[i * k + p] * b[p * n + j];
    return c;
}

// --------------------------------------------------------------------------
// softmax row in extended precision
// --------------------------------------------------------------------------
inline std::vector<double> softmax_row(const std::vector<double>& x) {
    long double mx = x[0];
    for (double v : x) mx = std::max(mx, (long double)v);
    long double denom = 0;
    for (double v : x) denom += expl((long double)v - mx);
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        out[i] = double(expl((long double)x[i] - mx) / denom);
    return out;
}

// --------------------------------------------------------------------------
// scalar-loop score and loss references (eps = 1e-12 inside each log)
// --------------------------------------------------------------------------
inline double evs(const std::vector<double>& p, int y) {
    double acc = 0;
    for (std::size_t m = 0; m < p.size(); ++m) {
        const double d = p[m] - (int(m) == y ? 1.0 : 0.0);
        acc += d * d;
    }
    return std::sqrt(acc);
}

inline double l2(const std::vector<double>& p, const std::vector<double>& q) {
    double acc = 0;
    for (std::size_t m = 0; m < p.size(); ++m) acc += (p[m] - q[m]) * (p[m] - q[m]);
    return std::sqrt(acc);
}

inline double kl(const std::vector<double>& q, const std::vector<double>& f) {
    double acc = 0;
    for (std::size_t m = 0; m < q.size(); ++m) {
        if (q[m] == 0.0) continue;
        acc += q[m] * std::log((q[m] + 1e-12) / (f[m] + 1e-12));
    }
    return acc;
}

// mean over rows of -sum_m t[m] log(q[m] + eps)
inline double kd(const std::vector<std::vector<double>>& t,
                 const std::vector<std::vector<double>>& q) {
    double acc = 0;
    for (std::size_t b = 0; b < t.size(); ++b)
        for (std::size_t m = 0; m < t[b].size(); ++m)
            acc += -t[b][m] * std::log(q[b][m] + 1e-12);
    return acc / double(t.size());
}

inline double ce(const std::vector<std::vector<double>>& probs, const std::vector<int>& labels) {
    double acc = 0;
    for (std::size_t b = 0; b < probs.size(); ++b)
        acc += -std::log(probs[b][std::size_t(labels[b])] + 1e-12);
    return acc / double(probs.size());
}

// CLC reference: softmax-normalize each sample's tap vector, KL(Q||F),
// mean over batch (one tap)
inline double clc_tap(const std::vector<std::vector<double>>& tap_f,
                      const std::vector<std::vector<double>>& tap_q) {
    double acc = 0;
    for (std::size_t b = 0; b < tap_f.size(); ++b)
        acc += kl(softmax_row(tap_q[b]), softmax_row(tap_f[b]));
    return acc / double(tap_f.size());
}

// --------------------------------------------------------------------------
// quantizer scalar reference
// --------------------------------------------------------------------------
inline double round_half_even_ref(double v) {
    const double f = std::floor(v);
    const double r = v - f;
    if (r > 0.5) return f + 1;
    if (r < 0.5) return f;
    return std::fmod(f, 2.0) == 0.0 ? f : f + 1;
}

inline double quantize_ref(double x, double s, int qn, int qp) {
    double t = x / s;
    t = std::clamp(t, double(-qn), double(qp));
    return s * round_half_even_ref(t);
}

// STE mask reference
inline bool in_range_ref(double x, double s, int qn, int qp) {
    const double t = x / s;
    return t >= double(-qn) && t <= double(qp);
}

// LSQ scale-gradient reference: sum over elements of upstream * dq/ds, * g
inline double scale_grad_ref(const std::vector<double>& up, const std::vector<double>& x,
                             double s, int qn, int qp, double g) {
    double acc = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double t = x[i] / s;
        if (t >= double(-qn) && t <= double(qp))
            acc += up[i] * (round_half_even_ref(t) - t);
        else
            acc += up[i] * (t < double(-qn) ? double(-qn) : double(qp));
    }
    return acc * g;
}

// --------------------------------------------------------------------------
// independent 2-layer MLP in plain double: x -> W1,b1 -> relu -> W2,b2
// -> softmax -> cross-entropy. Used for central finite differences.
// --------------------------------------------------------------------------
struct MlpRef {
    std::size_t d, h, m;
    std::vector<double> w1, b1, w2, b2;  // w1[d*h], w2[h*m]

    double loss(const std::vector<double>& x, const std::vector<int>& y) const {
        const std::size_t batch = y.size();
        double total = 0;
        std::vector<double> hid(h), logits(m);
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t j = 0; j < h; ++j) {
                double acc = b1[j];
                for (std::size_t i = 0; i < d; ++i) acc += x[b * d + i] * w1[i * h + j];
                hid[j] = acc > 0 ? acc : 0;
            }
            for (std::size_t k = 0; k < m; ++k) {
                double acc = b2[k];
                for (std::size_t j = 0; j < h; ++j) acc += hid[j] * w2[j * m + k];
                logits[k] = acc;
            }
            const auto probs = softmax_row(logits);
            total += -std::log(probs[std::size_t(y[b])] + 1e-12);
        }
        return total / double(batch);
    }

    // pointer into the flat parameter block: 0..d*h-1 -> w1, then b1, w2, b2
    double* param_at(std::size_t idx) {
        if (idx < w1.size()) return &w1[idx];
        idx -= w1.size();
        if (idx < b1.size()) return &b1[idx];
        idx -= b1.size();
        if (idx < w2.size()) return &w2[idx];
        idx -= w2.size();
        return &b2[idx];
    }
    std::size_t param_count() const { return w1.size() + b1.size() + w2.size() + b2.size(); }

    double fd_grad(std::size_t idx, const std::vector<double>& x, const std::vector<int>& y,
                   double hstep = 1e-4) {
        double* p = param_at(idx);
        const double orig = *p;
        *p = orig + hstep;
        const double up = loss(x, y);
        *p = orig - hstep;
        const double down = loss(x, y);
        *p = orig;
        return (up - down) / (2 * hstep);
    }
};

// --------------------------------------------------------------------------
// depth-3 axis-aligned decision tree (greedy) for separability checks
// --------------------------------------------------------------------------
struct Stump {
    struct Node {
        int feature = -1;     // -1 = leaf
        double threshold = 0;
        int label = 0;
        int left = -1, right = -1;
    };
    std::vector<Node> nodes;

    static int majority(const std::vector<int>& ys, const std::vector<std::size_t>& idx) {
        std::vector<int> counts;
        for (std::size_t i : idx) {
            if (ys[i] >= int(counts.size())) counts.resize(std::size_t(ys[i]) + 1, 0);
            ++counts[std::size_t(ys[i])];
        }
        return int(std::max_element(counts.begin(), counts.end()) - counts.begin());
    }

    int build(const std::vector<double>& xs, const std::vector<int>& ys, std::size_t dim,
              std::vector<std::size_t> idx, int depth) {
        Node node;
        node.label = majority(ys, idx);
        if (depth == 0 || idx.size() < 2) {
            nodes.push_back(node);
            return int(nodes.size()) - 1;
        }
        // greedy best split by accuracy over 32 candidate thresholds/feature
        double best_acc = -1;
        int best_f = -1;
        double best_t = 0;
        for (std::size_t f = 0; f < dim; ++f) {
            double lo = xs[idx[0] * dim + f], hi = lo;
            for (std::size_t i : idx) {
                lo = std::min(lo, xs[i * dim + f]);
                hi = std::max(hi, xs[i * dim + f]);
            }
            for (int c = 1; c < 32; ++c) {
                const double t = lo + (hi - lo) * c / 32.0;
                std::vector<std::size_t> l, r;
                for (std::size_t i : idx) (xs[i * dim + f] < t ? l : r).push_back(i);
                if (l.empty() || r.empty()) continue;
                const int ml = majority(ys, l), mr = majority(ys, r);
                std::size_t ok = 0;
                for (std::size_t i : l) ok += (ys[i] == ml);
                for (std::size_t i : r) ok += (ys[i] == mr);
                const double acc = double(ok) / double(idx.size());
                if (acc > best_acc) {
                    best_acc = acc;
                    best_f = int(f);
                    best_t = t;
                }
            }
        }
        if (best_f < 0) {
            nodes.push_back(node);
            return int(nodes.size()) - 1;
        }
        std::vector<std::size_t> l, r;
        for (std::size_t i : idx) (xs[i * dim + std::size_t(best_f)] < best_t ? l : r).push_back(i);
        node.feature = best_f;
        node.threshold = best_t;
        const int self = int(nodes.size());
        nodes.push_back(node);
        const int li = build(xs, ys, dim, std::move(l), depth - 1);
        const int ri = build(xs, ys, dim, std::move(r), depth - 1);
        nodes[std::size_t(self)].left = li;
        nodes[std::size_t(self)].right = ri;
        return self;
    }

    void fit(const std::vector<double>& xs, const std::vector<int>& ys, std::size_t dim,
             int depth = 3) {
        nodes.clear();
        std::vector<std::size_t> idx(ys.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        build(xs, ys, dim, std::move(idx), depth);
    }

    int predict(const double* x) const {
        std::size_t cur = 0;
        while (nodes[cur].feature >= 0) {
            cur = std::size_t(x[nodes[cur].feature] < nodes[cur].threshold ? nodes[cur].left
                                                                           : nodes[cur].right);
        }
        return nodes[cur].label;
    }
};

}  // namespace oracle
