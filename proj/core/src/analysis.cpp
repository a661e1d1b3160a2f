// SPDX-License-Identifier: Apache-2.0
#include "quarc/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

namespace quarc {

std::vector<double> average_ranks(std::span<const double> v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });

    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        // positions i..j share the same value; assign the mean rank
        const double mean_rank = (double(i + 1) + double(j + 1)) / 2.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = mean_rank;
        i = j + 1;
    }
    return ranks;
}

double spearman_rho(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw ContractError("spearman: size mismatch");
    if (x.size() < 2) throw ContractError("spearman: need at least 2 points");
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    const std::size_t n = x.size();
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= double(n);
    my /= double(n);
    double cov = 0, vx = 0, vy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        cov += (rx[i] - mx) * (ry[i] - my);
        vx += (rx[i] - mx) * (rx[i] - mx);
        vy += (ry[i] - my) * (ry[i] - my);
    }
    if (vx == 0.0 || vy == 0.0) throw ContractError("spearman: constant input has no rank order");
    return cov / std::sqrt(vx * vy);
}

double spearman_perm_pvalue(std::span<const double> x, std::span<const double> y, int shuffles,
                            std::uint64_t seed) {
    if (shuffles < 1) throw ConfigError("permutation test needs >= 1 shuffle");
    const double observed = std::abs(spearman_rho(x, y));
    std::vector<double> ys(y.begin(), y.end());
    std::mt19937_64 rng(seed);
    int hits = 0;
    for (int s = 0; s < shuffles; ++s) {
        std::shuffle(ys.begin(), ys.end(), rng);
        if (std::abs(spearman_rho(x, ys)) >= observed - 1e-12) ++hits;
    }
    return double(hits + 1) / double(shuffles + 1);
}

void ExperimentPlan::validate() const {
    if (runs.empty()) throw ConfigError("experiment plan has no runs");
    if (seeds.empty()) throw ConfigError("experiment plan has no seeds");
    std::set<std::string> names;
    for (const auto& r : runs) {
        if (!names.insert(r.name).second)
            throw ConfigError("experiment plan has duplicate run name '" + r.name + "'");
        r.cfg.validate();
    }
}

ExperimentPlan ablation_plan(const RunConfig& base, std::vector<std::uint64_t> seeds) {
    ExperimentPlan plan;
    plan.seeds = std::move(seeds);

    RunConfig baseline = base;
    baseline.method = Method::Quarc;
    baseline.metrics = {true, true, false};
    baseline.clc = false;

    RunConfig plus_res = baseline;
    plus_res.metrics = {true, true, true};

    RunConfig plus_clc = baseline;
    plus_clc.clc = true;

    RunConfig plus_both = baseline;
    plus_both.metrics = {true, true, true};
    plus_both.clc = true;

    plan.runs = {{"baseline", baseline}, {"+res", plus_res}, {"+clc", plus_clc},
                 {"+res+clc", plus_both}};
    plan.validate();
    return plan;
}

namespace {

std::pair<double, double> mean_std(std::span<const double> v) {
    const double n = double(v.size());
    double mean = 0;
    for (double x : v) mean += x;
    mean /= n;
    if (v.size() < 2) return {mean, 0.0};
    double ss = 0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / (n - 1.0))};
}

}  // namespace

PlanResult run_plan(ModelInstance& fp, const Dataset& train, const Dataset& eval_data,
                    const ExperimentPlan& plan, const std::string& jsonl_path) {
    plan.validate();
    PlanResult result;
    for (const auto& run : plan.runs) {
        std::vector<double> top1s, top5s;
        for (std::uint64_t seed : plan.seeds) {
            RunConfig cfg = run.cfg;
            cfg.seed = seed;
            QatResult qat = run_quarc(fp, train, eval_data, cfg);
            const EpochMetrics& last = qat.metrics.back();

            RunSummaryRow row;
            row.name = run.name;
            row.seed = seed;
            row.top1 = last.top1;
            row.top5 = last.top5;
            row.final_total = last.total;
            for (const auto& em : qat.metrics) row.seconds += em.seconds;
            result.rows.push_back(row);
            top1s.push_back(last.top1);
            top5s.push_back(last.top5);
            result.metrics[run.name + "/" + std::to_string(seed)] = qat.metrics;
            if (!jsonl_path.empty()) append_metrics_jsonl(jsonl_path, run.name, seed, qat.metrics);
        }
        AggregateRow agg;
        agg.name = run.name;
        agg.n = int(top1s.size());
        std::tie(agg.top1_mean, agg.top1_std) = mean_std(top1s);
        std::tie(agg.top5_mean, agg.top5_std) = mean_std(top5s);
        result.aggregates.push_back(agg);
    }
    return result;
}

void write_summary_csv(const std::string& path, const PlanResult& result) {
    std::ofstream out(path);
    if (!out) throw FormatError("summary csv: cannot open " + path);
    out.precision(17);
    out << "name,seed,top1,top5,final_total,seconds,top1_std,top5_std\n";
    for (const auto& r : result.rows) {
        out << r.name << ',' << r.seed << ',' << r.top1 << ',' << r.top5 << ',' << r.final_total
            << ',' << r.seconds << ",,\n";
    }
    for (const auto& a : result.aggregates) {
        out << a.name << ",mean," << a.top1_mean << ',' << a.top5_mean << ",,," << a.top1_std
            << ',' << a.top5_std << '\n';
    }
    if (!out) throw FormatError("summary csv: write failed for " + path);
}

std::vector<RunSummaryRow> read_summary_rows(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("summary csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw FormatError("summary csv: empty file");
    std::vector<RunSummaryRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::vector<std::string> cells;
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() < 6) throw FormatError("summary csv: short row: " + line);
        if (cells[1] == "mean") continue;  // aggregate row
        RunSummaryRow r;
        r.name = cells[0];
        r.seed = std::stoull(cells[1]);
        r.top1 = std::stod(cells[2]);
        r.top5 = std::stod(cells[3]);
        r.final_total = std::stod(cells[4]);
        r.seconds = std::stod(cells[5]);
        rows.push_back(r);
    }
    return rows;
}

std::string format_summary_text(const PlanResult& result) {
    std::ostringstream os;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-12s %6s %8s %8s %12s %9s\n", "run", "seed", "top1", "top5",
                  "final_loss", "seconds");
    os << buf;
    for (const auto& r : result.rows) {
        std::snprintf(buf, sizeof buf, "%-12s %6llu %8.4f %8.4f %12.5f %9.2f\n", r.name.c_str(),
                      static_cast<unsigned long long>(r.seed), r.top1, r.top5, r.final_total,
                      r.seconds);
        os << buf;
    }
    os << '\n';
    for (const auto& a : result.aggregates) {
        std::snprintf(buf, sizeof buf, "%-12s mean top1 %.4f +- %.4f   top5 %.4f +- %.4f  (n=%d)\n",
                      a.name.c_str(), a.top1_mean, a.top1_std, a.top5_mean, a.top5_std, a.n);
        os << buf;
    }
    return os.str();
}

CorrelationReport res_bucket_correlation(ModelInstance& fp, ModelInstance& q0,
                                         const Dataset& train, const Dataset& eval_data,
                                         int buckets, double fraction,
                                         std::span<const std::uint64_t> seeds,
                                         const RunConfig& base) {
    if (buckets < 5) throw ConfigError("correlate: need buckets >= 5 for a reportable rho");
    if (seeds.empty()) throw ConfigError("correlate: need at least one seed");
    const std::size_t n = train.size();
    const std::size_t keep = std::size_t(std::floor(fraction * double(n)));
    if (keep < 1) throw ConfigError("correlate: fraction*N is below one sample");

    // RES from the initial student against the teacher, over the full set
    auto ids = all_ids(train);
    ScoreDatasetResult sc =
        score_dataset(q0, fp, train, ids, 0, std::max(base.epochs, 1), base.batch_size);

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (sc.scores[a].res != sc.scores[b].res) return sc.scores[a].res < sc.scores[b].res;
        return sc.scores[a].sample_id < sc.scores[b].sample_id;
    });

    CorrelationReport report;
    report.buckets = buckets;
    report.fraction = fraction;

    for (int bkt = 0; bkt < buckets; ++bkt) {
        const std::size_t lo = std::size_t(bkt) * n / std::size_t(buckets);
        const std::size_t hi = std::size_t(bkt + 1) * n / std::size_t(buckets);
        const std::size_t band = hi - lo;
        if (band < keep)
            throw ConfigError("correlate: bucket band smaller than fraction*N; lower the "
                              "fraction or the bucket count");
        const std::size_t start = lo + (band - keep) / 2;  // centered slice of the band

        std::vector<int> coreset_ids;
        double res_sum = 0;
        for (std::size_t i = start; i < start + keep; ++i) {
            coreset_ids.push_back(sc.scores[order[i]].sample_id);
            res_sum += sc.scores[order[i]].res;
        }
        std::sort(coreset_ids.begin(), coreset_ids.end());
        report.bucket_mean_res.push_back(res_sum / double(keep));

        Dataset bucket_train;
        bucket_train.features = gather_features(train, coreset_ids);
        bucket_train.labels = gather_labels(train, coreset_ids);
        bucket_train.classes = train.classes;
        bucket_train.split = "train";
        bucket_train.feat_mean = train.feat_mean;
        bucket_train.feat_std = train.feat_std;

        double top1_sum = 0;
        for (std::uint64_t seed : seeds) {
            RunConfig cfg = base;
            cfg.seed = seed;
            cfg.method = Method::FullData;  // the bucket *is* the coreset, frozen
            cfg.fraction = 1.0;
            QatResult qat = run_quarc(fp, bucket_train, eval_data, cfg);
            top1_sum += qat.metrics.back().top1;
        }
        report.bucket_top1.push_back(top1_sum / double(seeds.size()));
    }

    report.rho = spearman_rho(report.bucket_mean_res, report.bucket_top1);
    report.p_value = spearman_perm_pvalue(report.bucket_mean_res, report.bucket_top1, 10000,
                                          /*seed=*/20250811);
    return report;
}

void write_correlation_csv(const std::string& path, const CorrelationReport& report) {
    std::ofstream out(path);
    if (!out) throw FormatError("correlation csv: cannot open " + path);
    out.precision(17);
    out << "bucket,mean_res,top1\n";
    for (int i = 0; i < report.buckets; ++i)
        out << i << ',' << report.bucket_mean_res[std::size_t(i)] << ','
            << report.bucket_top1[std::size_t(i)] << '\n';
    out << "# rho=" << report.rho << " p=" << report.p_value << '\n';
    if (!out) throw FormatError("correlation csv: write failed");
}

std::vector<LayerKlRow> layer_kl(ModelInstance& fp, ModelInstance& q, const Dataset& data,
                                 std::size_t batch_size) {
    if (fp.def.taps != q.def.taps)
        throw ContractError("layer_kl: models expose different tap sets");
    if (data.size() == 0) throw ContractError("layer_kl: empty dataset");

    std::vector<LayerKlRow> rows;
    for (const auto& tap : fp.def.taps) rows.push_back({tap, 0.0});

    auto ids = all_ids(data);
    for (const auto& batch : sequential_batches(ids, batch_size)) {
        Tensor xb = gather_features(data, batch);
        Graph gf, gq;
        ForwardResult fres = forward(gf, fp, xb);
        ForwardResult qres = forward(gq, q, xb);

        for (std::size_t t = 0; t < rows.size(); ++t) {
            const Tensor* tf = fres.taps.find(rows[t].tap);
            const Tensor* tq = qres.taps.find(rows[t].tap);
            if (!tf || !tq) throw ContractError("layer_kl: tap missing from forward result");
            const std::size_t d = tf->dim(1);
            auto fv = tf->values();
            auto qv = tq->values();
            // per-sample softmax + KL(Q||F), all in double
            std::vector<double> pf(d), pq(d);
            for (std::size_t i = 0; i < batch.size(); ++i) {
                double mf = fv[i * d], mq = qv[i * d];
                for (std::size_t j = 1; j < d; ++j) {
                    mf = std::max(mf, double(fv[i * d + j]));
                    mq = std::max(mq, double(qv[i * d + j]));
                }
                double sf = 0, sq = 0;
                for (std::size_t j = 0; j < d; ++j) {
                    pf[j] = std::exp(double(fv[i * d + j]) - mf);
                    pq[j] = std::exp(double(qv[i * d + j]) - mq);
                    sf += pf[j];
                    sq += pq[j];
                }
                double kl = 0;
                for (std::size_t j = 0; j < d; ++j) {
                    const double f = pf[j] / sf;
                    const double qd = pq[j] / sq;
                    if (qd > 0) kl += qd * std::log((qd + 1e-12) / (f + 1e-12));
                }
                rows[t].mean_kl += kl;
            }
        }
    }
    for (auto& r : rows) r.mean_kl /= double(data.size());
    return rows;
}

std::vector<TimingRow> bench_fractions(ModelInstance& fp, const Dataset& train,
                                       const Dataset& eval_data, const RunConfig& base,
                                       std::span<const double> fractions) {
    std::vector<TimingRow> rows;

    auto run_one = [&](const std::string& name, Method method, double fraction) {
        RunConfig cfg = base;
        cfg.method = method;
        cfg.fraction = fraction;
        QatResult qat = run_quarc(fp, train, eval_data, cfg);
        TimingRow row;
        row.name = name;
        row.fraction = fraction;
        for (const auto& em : qat.metrics) {
            row.total_seconds += em.seconds;
            row.train_forward_batches += em.train_forward_batches;
            row.backward_batches += em.backward_batches;
            row.selection_forward_batches += em.selection_forward_batches;
        }
        row.seconds_per_epoch = row.total_seconds / double(cfg.epochs);
        return row;
    };

    TimingRow full = run_one("full-data", Method::FullData, 1.0);
    full.ratio_vs_full = 1.0;
    rows.push_back(full);
    for (double s : fractions) {
        TimingRow row = run_one("S=" + std::to_string(s).substr(0, 4), Method::Quarc, s);
        row.ratio_vs_full = row.total_seconds / full.total_seconds;
        rows.push_back(row);
    }
    return rows;
}

void write_timing_csv(const std::string& path, const std::vector<TimingRow>& rows) {
    std::ofstream out(path);
    if (!out) throw FormatError("timing csv: cannot open " + path);
    out.precision(17);
    out << "name,fraction,total_seconds,seconds_per_epoch,train_forward_batches,"
           "backward_batches,selection_forward_batches,ratio_vs_full\n";
    for (const auto& r : rows) {
        out << r.name << ',' << r.fraction << ',' << r.total_seconds << ',' << r.seconds_per_epoch
            << ',' << r.train_forward_batches << ',' << r.backward_batches << ','
            << r.selection_forward_batches << ',' << r.ratio_vs_full << '\n';
    }
    if (!out) throw FormatError("timing csv: write failed");
}

std::string format_timing_text(const std::vector<TimingRow>& rows) {
    std::ostringstream os;
    char buf[200];
    std::snprintf(buf, sizeof buf, "%-10s %9s %10s %10s %9s %9s %9s %8s\n", "run", "fraction",
                  "total_s", "s/epoch", "train_fw", "bw", "sel_fw", "ratio");
    os << buf;
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%-10s %9.3f %10.3f %10.4f %9zu %9zu %9zu %8.3f\n",
                      r.name.c_str(), r.fraction, r.total_seconds, r.seconds_per_epoch,
                      r.train_forward_batches, r.backward_batches, r.selection_forward_batches,
                      r.ratio_vs_full);
        os << buf;
    }
    return os.str();
}

}  // namespace quarc
