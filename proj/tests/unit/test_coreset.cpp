// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "quarc/coreset.hpp"
#include "support/oracles.hpp"

using namespace quarc;

namespace {

std::vector<real> random_dist(std::size_t m, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> d(-3, 3);
    std::vector<double> row(m);
    for (double& x : row) x = d(rng);
    auto p = oracle::softmax_row(row);
    return std::vector<real>(p.begin(), p.end());
}

}  // namespace

TEST_CASE("score_evs hand values and oracle") {
    std::vector<real> onehot = {0, 1, 0};
    CHECK(score_evs(onehot, 1) == doctest::Approx(0.0));
    std::vector<real> p = {0.6, 0.4};
    CHECK(score_evs(p, 0) == doctest::Approx(std::sqrt(0.32)).epsilon(1e-9));
    CHECK_THROWS_AS(score_evs(p, 2), ContractError);
    CHECK_THROWS_AS(score_evs(p, -1), ContractError);

    std::mt19937_64 rng(3);
    for (int i = 0; i < 200; ++i) {
        auto q = random_dist(6, rng);
        int y = int(rng() % 6);
        std::vector<double> qd(q.begin(), q.end());
        CHECK(std::abs(score_evs(q, y) - oracle::evs(qd, y)) < 1e-9);
        CHECK(score_evs(q, y) <= std::sqrt(2.0) + 1e-12);
    }
}

TEST_CASE("score_ds hand values and oracle") {
    std::vector<real> a = {1, 0}, b = {0, 1};
    CHECK(score_ds(a, a) == doctest::Approx(0.0));
    CHECK(score_ds(a, b) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));

    std::mt19937_64 rng(4);
    for (int i = 0; i < 200; ++i) {
        auto q = random_dist(5, rng);
        auto t = random_dist(5, rng);
        std::vector<double> qd(q.begin(), q.end()), td(t.begin(), t.end());
        CHECK(std::abs(score_ds(q, t) - oracle::l2(qd, td)) < 1e-9);
    }
}

TEST_CASE("score_res hand values, asymmetry, oracle") {
    std::vector<real> p = {1, 0}, u = {0.5, 0.5};
    CHECK(score_res(p, p) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(score_res(p, u) == doctest::Approx(std::log(2.0)).epsilon(1e-6));

    // the implemented direction is KL(Q||F): asymmetric in general
    std::vector<real> q = {0.8, 0.2}, f = {0.3, 0.7};
    CHECK(score_res(q, f) != doctest::Approx(score_res(f, q)).epsilon(1e-6));
    std::vector<double> qd(q.begin(), q.end()), fd(f.begin(), f.end());
    CHECK(score_res(q, f) == doctest::Approx(oracle::kl(qd, fd)).epsilon(1e-12));

    std::mt19937_64 rng(5);
    for (int i = 0; i < 200; ++i) {
        auto a = random_dist(7, rng);
        auto b = random_dist(7, rng);
        std::vector<double> ad(a.begin(), a.end()), bd(b.begin(), b.end());
        CHECK(std::abs(score_res(a, b) - oracle::kl(ad, bd)) < 1e-9);
        CHECK(score_res(a, b) >= -1e-9);
    }
}

TEST_CASE("cosine annealing weight") {
    CHECK(cosine_alpha(0, 10) == doctest::Approx(1.0));
    CHECK(cosine_alpha(10, 10) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(cosine_alpha(5, 10) == doctest::Approx(std::cos(std::numbers::pi / 4)).epsilon(1e-12));
    // strictly decreasing
    double prev = 2;
    for (int t = 0; t <= 20; ++t) {
        const double a = cosine_alpha(t, 20);
        CHECK(a < prev);
        prev = a;
    }
    CHECK_THROWS_AS(cosine_alpha(0, 0), ConfigError);
}

TEST_CASE("combine_scores endpoints and mask") {
    // t=0: alpha=1 -> evs + res
    CHECK(combine_scores(0.5, 0.9, 0.2, 0, 10) == doctest::Approx(0.7).epsilon(1e-12));
    // t=T: alpha=0 -> ds + res
    CHECK(combine_scores(0.5, 0.9, 0.2, 10, 10) == doctest::Approx(1.1).epsilon(1e-9));
    // t=T/2 with evs=ds=1, res=0 -> 1.0
    CHECK(combine_scores(1, 1, 0, 5, 10) == doctest::Approx(1.0).epsilon(1e-12));

    MetricMask no_res{true, true, false};
    CHECK(combine_scores(1, 1, 5, 5, 10, no_res) == doctest::Approx(1.0).epsilon(1e-12));
    MetricMask res_only{false, false, true};
    CHECK(combine_scores(1, 1, 5, 5, 10, res_only) == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("select_top ordering, tie-break, size floor") {
    auto mk = [](int id, double combined) {
        SampleScore s;
        s.sample_id = id;
        s.combined = combined;
        return s;
    };
    std::vector<SampleScore> scores = {mk(0, 3), mk(1, 1), mk(2, 2)};
    SelectionRound r = select_top(scores, 1.0 / 3.0, 0, 10);
    CHECK(r.selected_ids == std::vector<int>{0});
    CHECK(r.alpha == doctest::Approx(1.0));

    // all-equal scores: id tie-break keeps {0,1}
    std::vector<SampleScore> equal = {mk(0, 1), mk(1, 1), mk(2, 1), mk(3, 1)};
    CHECK(select_top(equal, 0.5, 0, 10).selected_ids == std::vector<int>{0, 1});

    // floor at one sample
    CHECK(select_top(scores, 0.01, 0, 10).selected_ids.size() == 1);
    CHECK_THROWS_AS(select_top(scores, 0.0, 0, 10), ConfigError);
    CHECK_THROWS_AS(select_top(scores, 1.5, 0, 10), ConfigError);

    // shift invariance: adding a constant leaves the set unchanged
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> d(0, 1);
    std::vector<SampleScore> table;
    for (int i = 0; i < 50; ++i) table.push_back(mk(i, d(rng)));
    auto before = select_top(table, 0.2, 0, 10).selected_ids;
    for (auto& s : table) s.combined += 17.5;
    auto after = select_top(table, 0.2, 0, 10).selected_ids;
    CHECK(before == after);

    // agreement with a full-sort reference
    std::vector<int> ids_sorted(50);
    for (int i = 0; i < 50; ++i) ids_sorted[i] = i;
    std::sort(ids_sorted.begin(), ids_sorted.end(), [&](int a, int b) {
        if (table[std::size_t(a)].combined != table[std::size_t(b)].combined)
            return table[std::size_t(a)].combined > table[std::size_t(b)].combined;
        return a < b;
    });
    std::vector<int> expect(ids_sorted.begin(), ids_sorted.begin() + 10);
    std::sort(expect.begin(), expect.end());
    CHECK(after == expect);

    // pure function: repeated call identical
    CHECK(select_top(table, 0.2, 0, 10).selected_ids == after);
}

TEST_CASE("score_dataset on sibling models with bypass gives zero ds/res") {
    ModelDef def = ModelDef::mlp(2, {8}, 3);
    ModelInstance fp = init_model(def, 51);
    SyntheticSpec spec{Generator::GaussianBlobs, 3, 10, 0.4, 6};
    Dataset ds = generate_synthetic(spec);
    Tensor calib = gather_features(ds, std::vector<int>{0, 1, 2, 3});

    ModelInstance q = clone_as_quantized(fp, 2, std::nullopt, {}, calib);
    q.bypass_quant = true;

    auto ids = all_ids(ds);
    auto res = score_dataset(q, fp, ds, ids, 0, 10, 8);
    CHECK(res.scores.size() == 30);
    CHECK(res.forward_batches == 2 * 4);  // ceil(30/8) = 4 batches, two models
    for (const auto& s : res.scores) {
        CHECK(s.ds == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(std::abs(s.res) < 1e-9);
        CHECK(s.epoch_computed == 0);
    }

    // batch-vs-single recomputation agreement
    q.bypass_quant = false;
    auto batched = score_dataset(q, fp, ds, ids, 3, 10, 7);
    for (int probe : {0, 5, 17, 29}) {
        std::vector<int> single = {probe};
        auto one = score_dataset(q, fp, ds, single, 3, 10, 7);
        CHECK(one.scores[0].evs == doctest::Approx(batched.scores[std::size_t(probe)].evs).epsilon(1e-12));
        CHECK(one.scores[0].ds == doctest::Approx(batched.scores[std::size_t(probe)].ds).epsilon(1e-12));
        CHECK(one.scores[0].res == doctest::Approx(batched.scores[std::size_t(probe)].res).epsilon(1e-12));
        CHECK(one.scores[0].combined ==
              doctest::Approx(batched.scores[std::size_t(probe)].combined).epsilon(1e-12));
    }

    CHECK_THROWS_AS(score_dataset(q, fp, ds, std::vector<int>{}, 0, 10, 8), ConfigError);
}

TEST_CASE("uncovered classes diagnostic") {
    SyntheticSpec spec{Generator::GaussianBlobs, 3, 5, 0.1, 1};
    Dataset ds = generate_synthetic(spec);  // labels 0..4 -> class blocks of 5
    std::vector<int> only_class0 = {0, 1, 2};
    auto missing = uncovered_classes(ds, only_class0);
    CHECK(missing == std::vector<int>{1, 2});
}

TEST_CASE("score csv dump") {
    namespace fs = std::filesystem;
    const std::string path = (fs::temp_directory_path() / "quarc_scores_test.csv").string();
    std::vector<SampleScore> scores(2);
    scores[0] = {7, 0.25, 0.5, 0.125, 0.875, 3};
    scores[1] = {9, 1.0, 0.0, 0.5, 1.5, 3};
    write_scores_csv(path, scores);

    std::ifstream in(path);
    std::string header, row;
    std::getline(in, header);
    CHECK(header == "sample_id,evs,ds,res,combined,epoch");
    std::getline(in, row);
    CHECK(row == "7,0.25,0.5,0.125,0.875,3");
    fs::remove(path);
}
