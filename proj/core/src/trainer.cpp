// SPDX-License-Identifier: Apache-2.0
#include "quarc/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numbers>
#include <random>

#include <json.hpp>

namespace quarc {

void RunConfig::validate() const {
    if (bits_w < 2) throw ConfigError("bits_w must be >= 2");
    if (bits_a && *bits_a < 2) throw ConfigError("bits_a must be >= 2");
    if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("fraction S must lie in (0, 1]");
    if (epochs < 1) throw ConfigError("epochs T must be >= 1");
    if (interval < 1 || interval > epochs) throw ConfigError("interval R must satisfy 1 <= R <= T");
    if (beta < real(0)) throw ConfigError("beta must be >= 0");
    if (optim.lr <= real(0)) throw ConfigError("learning rate must be > 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
}

void sgd_step(std::vector<Tensor>& params, SgdState& state, const OptimConfig& cfg, real lr) {
    if (state.velocity.size() != params.size()) state.velocity.resize(params.size());
    for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor& w = params[p];
        auto& vel = state.velocity[p];
        if (vel.size() != w.size()) vel.assign(w.size(), real(0));
        auto wv = w.values();
        const bool has_grad = w.has_grad();
        auto gv = has_grad ? w.grad() : std::span<const real>{};
        for (std::size_t i = 0; i < w.size(); ++i) {
            const real g = (has_grad ? gv[i] : real(0)) + cfg.weight_decay * wv[i];
            vel[i] = cfg.momentum * vel[i] + g;
            wv[i] -= lr * vel[i];
        }
        w.check_finite("sgd_step");
    }
}

Optimizer::Optimizer(std::vector<Tensor> params, OptimConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {}

void Optimizer::zero_grad() {
    for (Tensor& p : params_) p.zero_grad();
}

void Optimizer::step(real lr) {
    if (cfg_.kind == OptimKind::Sgd) {
        sgd_step(params_, sgd_, cfg_, lr);
        return;
    }
    // Adam with bias correction
    ++steps_;
    if (adam_m_.size() != params_.size()) {
        adam_m_.resize(params_.size());
        adam_v_.resize(params_.size());
    }
    const real c1 = real(1) - std::pow(cfg_.adam_beta1, real(steps_));
    const real c2 = real(1) - std::pow(cfg_.adam_beta2, real(steps_));
    for (std::size_t p = 0; p < params_.size(); ++p) {
        Tensor& w = params_[p];
        auto& m = adam_m_[p];
        auto& v = adam_v_[p];
        if (m.size() != w.size()) m.assign(w.size(), real(0));
        if (v.size() != w.size()) v.assign(w.size(), real(0));
        auto wv = w.values();
        const bool has_grad = w.has_grad();
        auto gv = has_grad ? w.grad() : std::span<const real>{};
        for (std::size_t i = 0; i < w.size(); ++i) {
            const real g = (has_grad ? gv[i] : real(0)) + cfg_.weight_decay * wv[i];
            m[i] = cfg_.adam_beta1 * m[i] + (real(1) - cfg_.adam_beta1) * g;
            v[i] = cfg_.adam_beta2 * v[i] + (real(1) - cfg_.adam_beta2) * g * g;
            const real mh = m[i] / c1;
            const real vh = v[i] / c2;
            wv[i] -= lr * mh / (std::sqrt(vh) + cfg_.adam_eps);
        }
        w.check_finite("adam_step");
    }
}

std::pair<double, double> evaluate(ModelInstance& m, const Dataset& eval_data,
                                   std::size_t batch_size, std::size_t* forward_batches) {
    if (eval_data.size() == 0) throw ContractError("evaluate: empty eval set");
    const std::size_t k5 = std::min<std::size_t>(5, m.def.classes);
    std::size_t hit1 = 0, hit5 = 0;

    auto ids = all_ids(eval_data);
    for (const auto& batch : sequential_batches(ids, batch_size)) {
        Tensor xb = gather_features(eval_data, batch);
        std::vector<int> yb = gather_labels(eval_data, batch);
        Graph g;
        ForwardResult res = forward(g, m, xb);
        if (forward_batches) ++*forward_batches;

        const std::size_t mcls = res.logits.dim(1);
        auto lv = res.logits.values();
        for (std::size_t i = 0; i < batch.size(); ++i) {
            std::vector<std::size_t> order(mcls);
            for (std::size_t c = 0; c < mcls; ++c) order[c] = c;
            std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                return lv[i * mcls + a] > lv[i * mcls + b];
            });
            const std::size_t y = std::size_t(yb[i]);
            if (order[0] == y) ++hit1;
            for (std::size_t r = 0; r < k5; ++r) {
                if (order[r] == y) {
                    ++hit5;
                    break;
                }
            }
        }
    }
    const double n = double(eval_data.size());
    return {double(hit1) / n, double(hit5) / n};
}

PretrainResult pretrain_fp(const ModelDef& def, const Dataset& train, const Dataset& eval_data,
                           int epochs, const OptimConfig& optim, std::size_t batch_size,
                           std::uint64_t seed) {
    if (epochs < 0) throw ConfigError("pretrain_fp: epochs must be >= 0");
    PretrainResult out;
    out.model = init_model(def, seed);
    Optimizer opt(out.model.parameters(), optim);
    auto ids = all_ids(train);

    for (int epoch = 0; epoch < epochs; ++epoch) {
        const auto start = std::chrono::steady_clock::now();
        EpochMetrics em;
        em.epoch = epoch;
        em.coreset_size = train.size();
        double loss_sum = 0;
        std::size_t seen = 0;
        try {
            for (const auto& batch : epoch_batches(ids, batch_size, seed, epoch)) {
                Tensor xb = gather_features(train, batch);
                std::vector<int> yb = gather_labels(train, batch);
                Graph g;
                ForwardResult res = forward(g, out.model, xb);
                ++em.train_forward_batches;
                LossTerm loss = ce_loss(g, res.probs, yb);
                opt.zero_grad();
                g.backward(loss.node);
                ++em.backward_batches;
                opt.step(optim.lr);
                loss_sum += loss.value() * double(batch.size());
                seen += batch.size();
            }
        } catch (const NumericError& e) {
            throw NumericError("pretrain diverged at epoch " + std::to_string(epoch) + ": " +
                               e.what());
        }
        em.total = seen ? loss_sum / double(seen) : 0.0;
        std::tie(em.top1, em.top5) = evaluate(out.model, eval_data, batch_size,
                                              &em.eval_forward_batches);
        em.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        out.metrics.push_back(em);
    }
    return out;
}

namespace {

real scheduled_lr(const RunConfig& cfg, int epoch) {
    if (cfg.lr_schedule == LrSchedule::Constant) return cfg.optim.lr;
    return cfg.optim.lr * real(0.5) *
           (real(1) + std::cos(std::numbers::pi_v<real> * real(epoch) / real(cfg.epochs)));
}

std::vector<int> random_coreset(const std::vector<int>& ids, double fraction,
                                std::uint64_t seed, int epoch) {
    std::vector<int> pool = ids;
    std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), 0x5e1ec7u,
                      std::uint32_t(epoch)};
    std::mt19937_64 rng(seq);
    std::shuffle(pool.begin(), pool.end(), rng);
    const std::size_t keep =
        std::max<std::size_t>(1, std::size_t(std::floor(fraction * double(pool.size()))));
    pool.resize(keep);
    std::sort(pool.begin(), pool.end());
    return pool;
}

}  // namespace

QatResult run_quarc(ModelInstance& fp_teacher, const Dataset& train, const Dataset& eval_data,
                    const RunConfig& cfg) {
    cfg.validate();
    if (train.size() == 0) throw ConfigError("run_quarc: empty train set");

    // calibration batch: first batch of the train set in id order
    auto ids = all_ids(train);
    std::vector<int> calib(ids.begin(),
                           ids.begin() + std::ptrdiff_t(std::min(cfg.batch_size, train.size())));
    Tensor calib_batch = gather_features(train, calib);

    QatResult out;
    out.student = clone_as_quantized(fp_teacher, cfg.bits_w, cfg.bits_a, cfg.quant, calib_batch);
    Optimizer opt(out.student.parameters(), cfg.optim);

    std::vector<int> coreset;
    if (cfg.method == Method::FullData) coreset = ids;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto start = std::chrono::steady_clock::now();
        EpochMetrics em;
        em.epoch = epoch;

        if (cfg.method != Method::FullData && epoch % cfg.interval == 0) {
            em.selection = true;
            if (cfg.method == Method::Quarc) {
                ScoreDatasetResult sc =
                    score_dataset(out.student, fp_teacher, train, ids, epoch, cfg.epochs,
                                  cfg.batch_size, cfg.metrics, cfg.normalize_res);
                em.selection_forward_batches = sc.forward_batches;
                SelectionRound round = select_top(sc.scores, cfg.fraction, epoch, cfg.epochs);
                coreset = round.selected_ids;
                out.last_scores = std::move(sc.scores);
            } else {
                coreset = random_coreset(ids, cfg.fraction, cfg.seed, epoch);
            }
            auto missing = uncovered_classes(train, coreset);
            if (!missing.empty()) {
                std::cerr << "[quarc] warning: coreset at epoch " << epoch << " covers no samples"
                          << " of " << missing.size() << " class(es)\n";
            }
        }
        if (coreset.empty()) throw ConfigError("run_quarc: empty coreset");
        em.coreset_size = coreset.size();

        double kd_sum = 0, clc_sum = 0, total_sum = 0;
        std::size_t seen = 0;
        const real lr = scheduled_lr(cfg, epoch);
        int batch_index = 0;
        try {
            for (const auto& batch : epoch_batches(coreset, cfg.batch_size, cfg.seed, epoch)) {
                Tensor xb = gather_features(train, batch);

                // teacher forward on its own graph; outputs enter the
                // student's graph as constants
                Graph tg;
                ForwardResult tres = forward(tg, fp_teacher, xb);
                ++em.train_forward_batches;
                Tensor teacher_probs = tres.probs.detached();
                TapSet teacher_taps;
                for (const auto& [name, t] : tres.taps.items)
                    teacher_taps.items.emplace_back(name, t.detached());

                Graph g;
                ForwardResult sres = forward(g, out.student, xb);
                ++em.train_forward_batches;

                LossTerm kd = kd_loss(g, teacher_probs, sres.probs);
                ClcTerm clc;
                Tensor clc_node = Tensor::scalar(real(0));
                if (cfg.clc) {
                    clc = clc_loss(g, teacher_taps, sres.taps);
                    clc_node = clc.node;
                }
                LossTerm total = total_loss(g, kd, clc_node, cfg.beta);

                opt.zero_grad();
                g.backward(total.node);
                ++em.backward_batches;
                opt.step(lr);
                out.student.project_quant_scales();

                kd_sum += kd.value() * double(batch.size());
                clc_sum += (cfg.clc ? clc.value() : 0.0) * double(batch.size());
                total_sum += total.value() * double(batch.size());
                seen += batch.size();
                ++batch_index;
            }
        } catch (const NumericError& e) {
            throw NumericError("run aborted at epoch " + std::to_string(epoch) + ", batch " +
                               std::to_string(batch_index) + ": " + e.what());
        }

        em.kd = seen ? kd_sum / double(seen) : 0.0;
        em.clc = seen ? clc_sum / double(seen) : 0.0;
        em.total = seen ? total_sum / double(seen) : 0.0;
        std::tie(em.top1, em.top5) = evaluate(out.student, eval_data, cfg.batch_size,
                                              &em.eval_forward_batches);
        em.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        out.metrics.push_back(em);
    }
    out.last_coreset = coreset;
    return out;
}

void append_metrics_jsonl(const std::string& path, const std::string& run_name,
                          std::uint64_t seed, const std::vector<EpochMetrics>& metrics) {
    std::ofstream out(path, std::ios::app);
    if (!out) throw FormatError("metrics jsonl: cannot open " + path);
    for (const auto& em : metrics) {
        nlohmann::json j;
        j["run"] = run_name;
        j["seed"] = seed;
        j["epoch"] = em.epoch;
        j["kd"] = em.kd;
        j["clc"] = em.clc;
        j["total"] = em.total;
        j["top1"] = em.top1;
        j["top5"] = em.top5;
        j["seconds"] = em.seconds;
        j["coreset_size"] = em.coreset_size;
        j["selection"] = em.selection;
        j["backward_batches"] = em.backward_batches;
        j["selection_forward_batches"] = em.selection_forward_batches;
        j["train_forward_batches"] = em.train_forward_batches;
        j["eval_forward_batches"] = em.eval_forward_batches;
        out << j.dump() << '\n';
    }
    if (!out) throw FormatError("metrics jsonl: write failed for " + path);
}

LossTrend loss_trend(const std::vector<EpochMetrics>& metrics, int window) {
    if (window < 1) throw ConfigError("loss_trend: window must be >= 1");
    std::vector<double> means;
    for (std::size_t i = 0; i + std::size_t(window) <= metrics.size(); ++i) {
        double s = 0;
        for (int j = 0; j < window; ++j) s += metrics[i + std::size_t(j)].total;
        means.push_back(s / window);
    }
    LossTrend trend;
    for (std::size_t i = 0; i + 1 < means.size(); ++i) {
        ++trend.pairs;
        if (means[i + 1] <= means[i]) ++trend.non_increasing;
    }
    return trend;
}

bool deterministic_equal(const std::vector<EpochMetrics>& a, const std::vector<EpochMetrics>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const auto& x = a[i];
        const auto& y = b[i];
        // seconds is wall-clock and legitimately differs between runs
        if (x.epoch != y.epoch || x.kd != y.kd || x.clc != y.clc || x.total != y.total ||
            x.top1 != y.top1 || x.top5 != y.top5 || x.coreset_size != y.coreset_size ||
            x.selection != y.selection || x.backward_batches != y.backward_batches ||
            x.selection_forward_batches != y.selection_forward_batches ||
            x.train_forward_batches != y.train_forward_batches ||
            x.eval_forward_batches != y.eval_forward_batches)
            return false;
    }
    return true;
}

}  // namespace quarc
