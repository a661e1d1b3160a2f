// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "quarc/trainer.hpp"

using namespace quarc;

namespace {

SplitResult blob_splits(int classes, int per_class, real noise, std::uint64_t seed) {
    SyntheticSpec spec{Generator::GaussianBlobs, classes, per_class, noise, seed};
    Dataset ds = generate_synthetic(spec);
    SplitResult split = split_dataset(ds, 0.2, seed);
    normalize_splits(split);
    return split;
}

}  // namespace

TEST_CASE("run config validation") {
    RunConfig cfg;
    cfg.validate();
    RunConfig bad = cfg;
    bad.fraction = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.interval = cfg.epochs + 1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.beta = -1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.optim.lr = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.bits_w = 1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("sgd step hand cases") {
    SUBCASE("plain step") {
        std::vector<Tensor> params = {Tensor::from({1}, {1.0}).set_requires_grad(true)};
        params[0].zero_grad();
        params[0].grad_data()[0] = 1.0;
        SgdState state;
        OptimConfig cfg;
        cfg.momentum = 0;
        cfg.weight_decay = 0;
        sgd_step(params, state, cfg, 0.1);
        CHECK(params[0].at(0) == doctest::Approx(0.9).epsilon(1e-12));
    }
    SUBCASE("zero gradient leaves parameters unchanged") {
        std::vector<Tensor> params = {Tensor::from({3}, {1, 2, 3}).set_requires_grad(true)};
        params[0].zero_grad();
        SgdState state;
        OptimConfig cfg;
        cfg.weight_decay = 0;
        sgd_step(params, state, cfg, 0.5);
        CHECK(params[0].at(0) == 1.0);
        CHECK(params[0].at(2) == 3.0);
    }
    SUBCASE("momentum recurrence matches hand-rolled oracle") {
        std::vector<Tensor> params = {Tensor::from({1}, {0.0}).set_requires_grad(true)};
        SgdState state;
        OptimConfig cfg;
        cfg.momentum = 0.9;
        cfg.weight_decay = 0;
        const double lr = 0.1;
        double w = 0.0, v = 0.0;
        const double grads[2] = {1.0, -0.5};
        for (double g : grads) {
            params[0].zero_grad();
            params[0].grad_data()[0] = real(g);
            sgd_step(params, state, cfg, lr);
            v = 0.9 * v + g;
            w -= lr * v;
            CHECK(params[0].at(0) == doctest::Approx(w).epsilon(1e-9));
        }
    }
}

TEST_CASE("evaluate: constant predictor, small-M top5, ranking oracle") {
    // model that always emits the same logits -> predicts class 0 by tie-break
    ModelDef def = ModelDef::mlp(2, {4}, 4);
    ModelInstance m = init_model(def, 1);
    for (auto& [name, t] : m.params)
        for (real& v : t.values()) v = 0;

    SyntheticSpec spec{Generator::GaussianBlobs, 4, 25, 0.5, 2};
    Dataset ds = generate_synthetic(spec);  // balanced, 100 samples
    auto [top1, top5] = evaluate(m, ds, 16);
    CHECK(top1 == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(top5 == doctest::Approx(1.0).epsilon(1e-12));  // top-min(5,4)=top-4 covers all

    // randomized logits versus a brute-force ranking oracle
    ModelDef def2 = ModelDef::mlp(2, {6}, 6);
    ModelInstance m2 = init_model(def2, 3);
    SyntheticSpec spec2{Generator::GaussianBlobs, 6, 10, 1.0, 4};
    Dataset ds2 = generate_synthetic(spec2);
    auto [t1, t5] = evaluate(m2, ds2, 13);

    std::size_t hit1 = 0, hit5 = 0;
    auto ids = all_ids(ds2);
    for (const auto& batch : sequential_batches(ids, 13)) {
        Tensor xb = gather_features(ds2, batch);
        Graph g;
        ForwardResult res = forward(g, m2, xb);
        for (std::size_t i = 0; i < batch.size(); ++i) {
            const int y = ds2.labels[std::size_t(batch[i])];
            int better_or_tied_earlier = 0;
            const real ly = res.logits.at(i * 6 + std::size_t(y));
            for (int c = 0; c < 6; ++c) {
                if (c == y) continue;
                const real lc = res.logits.at(i * 6 + std::size_t(c));
                if (lc > ly || (lc == ly && c < y)) ++better_or_tied_earlier;
            }
            if (better_or_tied_earlier == 0) ++hit1;
            if (better_or_tied_earlier < 5) ++hit5;
        }
    }
    CHECK(t1 == doctest::Approx(double(hit1) / double(ds2.size())).epsilon(1e-12));
    CHECK(t5 == doctest::Approx(double(hit5) / double(ds2.size())).epsilon(1e-12));
}

TEST_CASE("pretrain: zero epochs returns the initialized model") {
    auto split = blob_splits(2, 50, 0.5, 7);
    ModelDef def = ModelDef::mlp(2, {8}, 2);
    PretrainResult r = pretrain_fp(def, split.train, split.eval, 0, {}, 16, 9);
    ModelInstance fresh = init_model(def, 9);
    for (const auto& [name, t] : r.model.params) {
        const Tensor& u = fresh.param(name);
        for (std::size_t i = 0; i < t.size(); ++i) CHECK(t.at(i) == u.at(i));
    }
    CHECK(r.metrics.empty());
}

TEST_CASE("pretrain separable blobs reaches 95% top1") {
    auto split = blob_splits(2, 200, 0.5, 17);
    ModelDef def = ModelDef::mlp(2, {16}, 2);
    OptimConfig optim;
    optim.lr = 0.1;
    PretrainResult r = pretrain_fp(def, split.train, split.eval, 20, optim, 32, 5);
    CHECK(r.metrics.back().top1 >= 0.95);
}

TEST_CASE("pretrain determinism: same seed, identical models and metrics") {
    auto split = blob_splits(3, 40, 0.8, 23);
    ModelDef def = ModelDef::mlp(2, {8}, 3);
    OptimConfig optim;
    PretrainResult a = pretrain_fp(def, split.train, split.eval, 5, optim, 16, 77);
    PretrainResult b = pretrain_fp(def, split.train, split.eval, 5, optim, 16, 77);
    for (const auto& [name, t] : a.model.params) {
        const Tensor& u = b.model.param(name);
        for (std::size_t i = 0; i < t.size(); ++i) CHECK(t.at(i) == u.at(i));
    }
    CHECK(deterministic_equal(a.metrics, b.metrics));
}

TEST_CASE("algorithm accounting: selection rounds, backward and forward counts") {
    auto split = blob_splits(4, 50, 0.8, 31);  // train 160, eval 40
    ModelDef def = ModelDef::mlp(2, {8, 8}, 4);
    OptimConfig optim;
    optim.lr = 0.05;
    PretrainResult fp = pretrain_fp(def, split.train, split.eval, 5, optim, 32, 3);

    RunConfig cfg;
    cfg.epochs = 10;
    cfg.interval = 3;
    cfg.fraction = 0.25;
    cfg.batch_size = 32;
    cfg.bits_w = 2;
    cfg.seed = 11;

    QatResult r = run_quarc(fp.model, split.train, split.eval, cfg);
    REQUIRE(r.metrics.size() == 10);

    const std::size_t n = split.train.size();
    const std::size_t full_batches = (n + cfg.batch_size - 1) / cfg.batch_size;
    std::vector<int> selection_epochs;
    for (const auto& em : r.metrics) {
        if (em.selection) {
            selection_epochs.push_back(em.epoch);
            CHECK(em.selection_forward_batches == 2 * full_batches);
        } else {
            CHECK(em.selection_forward_batches == 0);
        }
        const std::size_t coreset_batches =
            (em.coreset_size + cfg.batch_size - 1) / cfg.batch_size;
        CHECK(em.backward_batches == coreset_batches);
        // teacher + student forward per train batch
        CHECK(em.train_forward_batches == 2 * coreset_batches);
        CHECK(em.coreset_size == std::size_t(std::floor(0.25 * double(n))));
        CHECK(em.top1 <= em.top5);
        CHECK(em.top5 <= 1.0);
    }
    CHECK(selection_epochs == std::vector<int>{0, 3, 6, 9});
}

TEST_CASE("interval equal to epochs selects exactly once") {
    auto split = blob_splits(2, 30, 0.6, 37);
    ModelDef def = ModelDef::mlp(2, {6}, 2);
    PretrainResult fp = pretrain_fp(def, split.train, split.eval, 3, {}, 16, 5);
    RunConfig cfg;
    cfg.epochs = 6;
    cfg.interval = 6;
    cfg.fraction = 0.5;
    cfg.batch_size = 16;
    QatResult r = run_quarc(fp.model, split.train, split.eval, cfg);
    int rounds = 0;
    for (const auto& em : r.metrics) rounds += em.selection;
    CHECK(rounds == 1);
    CHECK(r.metrics[0].selection);
}

TEST_CASE("full-data method disables selection and covers all samples") {
    auto split = blob_splits(2, 30, 0.6, 41);
    ModelDef def = ModelDef::mlp(2, {6}, 2);
    PretrainResult fp = pretrain_fp(def, split.train, split.eval, 3, {}, 16, 5);
    RunConfig cfg;
    cfg.epochs = 4;
    cfg.interval = 2;
    cfg.method = Method::FullData;
    cfg.batch_size = 16;
    QatResult r = run_quarc(fp.model, split.train, split.eval, cfg);
    for (const auto& em : r.metrics) {
        CHECK(!em.selection);
        CHECK(em.selection_forward_batches == 0);
        CHECK(em.coreset_size == split.train.size());
    }
}

TEST_CASE("coreset is frozen between selection rounds") {
    auto split = blob_splits(3, 40, 0.8, 43);
    ModelDef def = ModelDef::mlp(2, {8}, 3);
    PretrainResult fp = pretrain_fp(def, split.train, split.eval, 4, {}, 16, 5);
    RunConfig cfg;
    cfg.epochs = 6;
    cfg.interval = 3;
    cfg.fraction = 0.3;
    cfg.batch_size = 8;
    cfg.seed = 13;

    // instrument via two identical runs: the per-epoch drawn id sets are
    // deterministic, so freezing shows up as identical coreset sizes and
    // bit-identical losses between reselection epochs of both runs
    QatResult a = run_quarc(fp.model, split.train, split.eval, cfg);
    QatResult b = run_quarc(fp.model, split.train, split.eval, cfg);
    CHECK(deterministic_equal(a.metrics, b.metrics));
    CHECK(a.last_coreset == b.last_coreset);
    CHECK(a.last_coreset.size() == std::size_t(std::floor(0.3 * double(split.train.size()))));
}

TEST_CASE("random-coreset method draws seeded subsets without scoring cost") {
    auto split = blob_splits(3, 40, 0.8, 47);
    ModelDef def = ModelDef::mlp(2, {8}, 3);
    PretrainResult fp = pretrain_fp(def, split.train, split.eval, 3, {}, 16, 5);
    RunConfig cfg;
    cfg.epochs = 4;
    cfg.interval = 2;
    cfg.fraction = 0.25;
    cfg.method = Method::RandomCoreset;
    QatResult r = run_quarc(fp.model, split.train, split.eval, cfg);
    for (const auto& em : r.metrics) {
        CHECK(em.selection_forward_batches == 0);
        CHECK(em.coreset_size == std::size_t(std::floor(0.25 * double(split.train.size()))));
    }
    CHECK(r.metrics[0].selection);
    CHECK(!r.metrics[1].selection);
}

TEST_CASE("quantized training with KD+CLC improves over the initial clone") {
    auto split = blob_splits(4, 100, 0.9, 53);
    ModelDef def = ModelDef::mlp(2, {16, 16}, 4);
    OptimConfig optim;
    optim.lr = 0.1;
    PretrainResult fp = pretrain_fp(def, split.train, split.eval, 25, optim, 32, 5);
    REQUIRE(fp.metrics.back().top1 > 0.8);

    RunConfig cfg;
    cfg.epochs = 15;
    cfg.interval = 5;
    cfg.fraction = 0.25;
    cfg.bits_w = 2;
    cfg.beta = 1.0;
    cfg.quant.quantize_first_last = true;
    cfg.optim.lr = 0.01;

    Tensor calib = gather_features(split.train, std::vector<int>{0, 1, 2, 3});
    ModelInstance clone = clone_as_quantized(fp.model, 2, std::nullopt, cfg.quant, calib);
    auto [clone_top1, clone_top5] = evaluate(clone, split.eval, 32);

    QatResult r = run_quarc(fp.model, split.train, split.eval, cfg);
    CHECK(r.metrics.back().total < r.metrics.front().total);
    CHECK(r.metrics.back().top1 >= clone_top1);
    (void)clone_top5;
}

TEST_CASE("metrics jsonl appends one object per epoch") {
    namespace fs = std::filesystem;
    const std::string path = (fs::temp_directory_path() / "quarc_metrics_test.jsonl").string();
    std::error_code ec;
    fs::remove(path, ec);

    std::vector<EpochMetrics> ms(3);
    for (int i = 0; i < 3; ++i) {
        ms[std::size_t(i)].epoch = i;
        ms[std::size_t(i)].total = 1.0 / (i + 1);
    }
    append_metrics_jsonl(path, "demo", 7, ms);
    append_metrics_jsonl(path, "demo", 8, ms);

    std::ifstream in(path);
    std::string line;
    int lines = 0;
    while (std::getline(in, line)) {
        ++lines;
        CHECK(line.find("\"run\":\"demo\"") != std::string::npos);
        CHECK(line.find("\"epoch\":") != std::string::npos);
    }
    CHECK(lines == 6);
    fs::remove(path, ec);
}
