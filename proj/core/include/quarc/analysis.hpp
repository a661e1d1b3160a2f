// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "quarc/config.hpp"

namespace quarc {

// ---------------------------------------------------------------------------
// Rank statistics
// ---------------------------------------------------------------------------

/// Average ranks (1-based); equal values share the mean of their ranks.
std::vector<double> average_ranks(std::span<const double> v);

/// Spearman's rho via rank transform + Pearson on ranks. Constant input
/// (zero rank variance) is a ContractError.
double spearman_rho(std::span<const double> x, std::span<const double> y);

/// Two-sided permutation p-value: fraction of shuffles with |rho| at
/// least the observed |rho|, add-one smoothed so p > 0.
double spearman_perm_pvalue(std::span<const double> x, std::span<const double> y, int shuffles,
                            std::uint64_t seed);

// ---------------------------------------------------------------------------
// Experiment plans (ablation grids)
// ---------------------------------------------------------------------------

struct NamedRun {
    std::string name;
    RunConfig cfg;
};

struct ExperimentPlan {
    std::vector<NamedRun> runs;
    std::vector<std::uint64_t> seeds;
    void validate() const;  // unique names, at least one run and one seed
};

/// The four-way component grid over a base config:
/// baseline (evs+ds, no clc), +res, +clc, +res+clc.
ExperimentPlan ablation_plan(const RunConfig& base, std::vector<std::uint64_t> seeds);

struct RunSummaryRow {
    std::string name;
    std::uint64_t seed = 0;
    double top1 = 0, top5 = 0;
    double final_total = 0;
    double seconds = 0;
};

struct AggregateRow {
    std::string name;
    int n = 0;
    double top1_mean = 0, top1_std = 0;
    double top5_mean = 0, top5_std = 0;
};

struct PlanResult {
    std::vector<RunSummaryRow> rows;            // one per (name, seed), plan order
    std::vector<AggregateRow> aggregates;       // one per name
    // full per-epoch metrics keyed by "name/seed"
    std::map<std::string, std::vector<EpochMetrics>> metrics;
};

/// Executes every (run, seed) pair against a shared teacher and dataset;
/// optionally streams per-epoch metrics to a JSONL file.
PlanResult run_plan(ModelInstance& fp, const Dataset& train, const Dataset& eval_data,
                    const ExperimentPlan& plan, const std::string& jsonl_path = "");

void write_summary_csv(const std::string& path, const PlanResult& result);
std::vector<RunSummaryRow> read_summary_rows(const std::string& path);
std::string format_summary_text(const PlanResult& result);

// ---------------------------------------------------------------------------
// RES-bucket correlation (coreset-quality trend)
// ---------------------------------------------------------------------------

struct CorrelationReport {
    int buckets = 0;
    double fraction = 0;
    std::vector<double> bucket_mean_res;  // per bucket, ascending RES band
    std::vector<double> bucket_top1;      // mean final top1 over seeds
    double rho = 0;
    double p_value = 1;
};

/// Sorts the train set by RES (student q0 vs teacher fp), splits the
/// order into `buckets` quantile bands, takes the centered slice of
/// floor(fraction*N) samples from each band, trains one student per
/// band per seed on that fixed coreset, and correlates band mean RES
/// with mean final top1. Needs buckets >= 5 for a reportable rho.
CorrelationReport res_bucket_correlation(ModelInstance& fp, ModelInstance& q0,
                                         const Dataset& train, const Dataset& eval_data,
                                         int buckets, double fraction,
                                         std::span<const std::uint64_t> seeds,
                                         const RunConfig& base);

void write_correlation_csv(const std::string& path, const CorrelationReport& report);

// ---------------------------------------------------------------------------
// Intermediate-layer KL comparison
// ---------------------------------------------------------------------------

struct LayerKlRow {
    std::string tap;
    double mean_kl = 0;
};

/// Runs the dataset through both models and reports, per tap, the mean
/// KL(Q||F) between per-sample softmax-normalized tap outputs (the same
/// normalization the CLC loss uses). Tap sets must match.
std::vector<LayerKlRow> layer_kl(ModelInstance& fp, ModelInstance& q, const Dataset& data,
                                 std::size_t batch_size);

// ---------------------------------------------------------------------------
// Efficiency timing
// ---------------------------------------------------------------------------

struct TimingRow {
    std::string name;
    double fraction = 1.0;
    double total_seconds = 0;
    double seconds_per_epoch = 0;
    std::size_t train_forward_batches = 0;
    std::size_t backward_batches = 0;
    std::size_t selection_forward_batches = 0;
    double ratio_vs_full = 1.0;  // total_seconds / full-data total_seconds
};

/// Runs full-data training plus one coreset run per listed fraction on
/// identical model/data/epochs and reports wall-clock and pass counts.
std::vector<TimingRow> bench_fractions(ModelInstance& fp, const Dataset& train,
                                       const Dataset& eval_data, const RunConfig& base,
                                       std::span<const double> fractions);

void write_timing_csv(const std::string& path, const std::vector<TimingRow>& rows);
std::string format_timing_text(const std::vector<TimingRow>& rows);

}  // namespace quarc
