// SPDX-License-Identifier: Apache-2.0
//
// quarc: coreset-driven quantization-aware training and its diagnostics.
//
// Subcommands: pretrain, train, ablate, correlate, layer-kl, bench,
// scores-dump. Exit codes: 0 success, 2 config error, 3 data/format
// error, 4 numeric failure.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "quarc/analysis.hpp"

namespace fs = std::filesystem;
using namespace quarc;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir = ".";
    std::optional<std::uint64_t> seed;
    bool force = false;
};

ExperimentConfig load_cfg(const CommonArgs& args) {
    ExperimentConfig cfg;
    if (!args.config_path.empty()) cfg = load_experiment_config(args.config_path);
    if (args.seed) cfg.run.seed = *args.seed;
    return cfg;
}

fs::path prepare_out(const CommonArgs& args, std::initializer_list<const char*> artifacts) {
    fs::path dir(args.out_dir);
    fs::create_directories(dir);
    for (const char* name : artifacts) {
        const fs::path p = dir / name;
        if (fs::exists(p)) {
            if (!args.force)
                throw ConfigError("output file " + p.string() +
                                  " already exists; pass --force to overwrite");
            fs::remove(p);
        }
    }
    return dir;
}

std::vector<std::uint64_t> parse_seeds(const std::string& csv) {
    std::vector<std::uint64_t> seeds;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) continue;
        try {
            seeds.push_back(std::stoull(tok));
        } catch (const std::exception&) {
            throw ConfigError("bad seed '" + tok + "' in --seeds");
        }
    }
    if (seeds.empty()) throw ConfigError("--seeds parsed to an empty list");
    return seeds;
}

ModelInstance load_teacher(const std::string& path) {
    if (path.empty()) throw ConfigError("this command needs --fp-ckpt");
    ModelInstance m = load_checkpoint(path);
    if (m.precision != Precision::Full)
        throw ConfigError("--fp-ckpt must point at a full-precision checkpoint");
    return m;
}

Tensor calibration_batch(const Dataset& train, std::size_t batch_size) {
    std::vector<int> ids;
    for (std::size_t i = 0; i < std::min(batch_size, train.size()); ++i) ids.push_back(int(i));
    return gather_features(train, ids);
}

int cmd_pretrain(const CommonArgs& args) {
    ExperimentConfig cfg = load_cfg(args);
    fs::path dir = prepare_out(args, {"fp.ckpt.json", "pretrain_metrics.jsonl"});
    SplitResult split = prepare_data(cfg.data);
    ModelDef def = cfg.model.to_def(split.train);

    const std::uint64_t seed = args.seed.value_or(cfg.run.seed);
    PretrainResult res = pretrain_fp(def, split.train, split.eval, cfg.pretrain.epochs,
                                     cfg.pretrain.optim, cfg.run.batch_size, seed);
    const std::string ckpt = (dir / "fp.ckpt.json").string();
    save_checkpoint(res.model, ckpt);
    append_metrics_jsonl((dir / "pretrain_metrics.jsonl").string(), "pretrain", seed, res.metrics);

    auto [top1, top5] = evaluate(res.model, split.eval, cfg.run.batch_size);
    std::printf("pretrained %d epochs  top1 %.4f  top5 %.4f\n", cfg.pretrain.epochs, top1, top5);
    std::printf("checkpoint: %s\n", ckpt.c_str());
    return 0;
}

int cmd_train(const CommonArgs& args, const std::string& fp_ckpt) {
    ExperimentConfig cfg = load_cfg(args);
    fs::path dir = prepare_out(args, {"student.ckpt.json", "metrics.jsonl", "scores.csv"});
    SplitResult split = prepare_data(cfg.data);
    ModelInstance teacher = load_teacher(fp_ckpt);

    QatResult res = run_quarc(teacher, split.train, split.eval, cfg.run);
    save_checkpoint(res.student, (dir / "student.ckpt.json").string());
    append_metrics_jsonl((dir / "metrics.jsonl").string(), "train", cfg.run.seed, res.metrics);
    if (!res.last_scores.empty())
        write_scores_csv((dir / "scores.csv").string(), res.last_scores);

    const EpochMetrics& last = res.metrics.back();
    std::printf("trained %d epochs (coreset %zu)  top1 %.4f  top5 %.4f  loss %.5f\n",
                cfg.run.epochs, last.coreset_size, last.top1, last.top5, last.total);
    return 0;
}

int cmd_ablate(const CommonArgs& args, const std::string& fp_ckpt, const std::string& seeds_csv) {
    ExperimentConfig cfg = load_cfg(args);
    fs::path dir = prepare_out(args, {"summary.csv", "summary.txt", "metrics.jsonl"});
    SplitResult split = prepare_data(cfg.data);
    ModelInstance teacher = load_teacher(fp_ckpt);

    ExperimentPlan plan = ablation_plan(cfg.run, parse_seeds(seeds_csv));
    PlanResult result =
        run_plan(teacher, split.train, split.eval, plan, (dir / "metrics.jsonl").string());
    write_summary_csv((dir / "summary.csv").string(), result);
    const std::string text = format_summary_text(result);
    std::ofstream((dir / "summary.txt").string()) << text;
    std::fputs(text.c_str(), stdout);
    return 0;
}

int cmd_correlate(const CommonArgs& args, const std::string& fp_ckpt, const std::string& q_ckpt,
                  int buckets, double fraction, const std::string& seeds_csv) {
    ExperimentConfig cfg = load_cfg(args);
    fs::path dir = prepare_out(args, {"correlation.csv"});
    SplitResult split = prepare_data(cfg.data);
    ModelInstance teacher = load_teacher(fp_ckpt);

    ModelInstance q0 = q_ckpt.empty()
                           ? clone_as_quantized(teacher, cfg.run.bits_w, cfg.run.bits_a,
                                                cfg.run.quant,
                                                calibration_batch(split.train, cfg.run.batch_size))
                           : load_checkpoint(q_ckpt);

    CorrelationReport report = res_bucket_correlation(
        teacher, q0, split.train, split.eval, buckets, fraction, parse_seeds(seeds_csv), cfg.run);
    write_correlation_csv((dir / "correlation.csv").string(), report);
    for (int i = 0; i < report.buckets; ++i)
        std::printf("bucket %2d  mean_res %.6g  top1 %.4f\n", i,
                    report.bucket_mean_res[std::size_t(i)], report.bucket_top1[std::size_t(i)]);
    std::printf("spearman rho %.4f  p %.5f  (%d buckets, S=%.3f)\n", report.rho, report.p_value,
                report.buckets, report.fraction);
    return 0;
}

int cmd_layer_kl(const CommonArgs& args, const std::string& fp_ckpt, const std::string& q_ckpt) {
    ExperimentConfig cfg = load_cfg(args);
    fs::path dir = prepare_out(args, {"layer_kl.csv"});
    SplitResult split = prepare_data(cfg.data);
    ModelInstance teacher = load_teacher(fp_ckpt);
    if (q_ckpt.empty()) throw ConfigError("layer-kl needs --q-ckpt");
    ModelInstance student = load_checkpoint(q_ckpt);

    auto rows = layer_kl(teacher, student, split.eval, cfg.run.batch_size);
    std::ofstream csv((dir / "layer_kl.csv").string());
    csv << "tap,mean_kl\n";
    csv.precision(17);
    for (const auto& r : rows) {
        csv << r.tap << ',' << r.mean_kl << '\n';
        std::printf("%-12s mean KL(Q||F) %.6e\n", r.tap.c_str(), r.mean_kl);
    }
    return 0;
}

int cmd_bench(const CommonArgs& args, const std::string& fp_ckpt, const std::string& fracs_csv) {
    ExperimentConfig cfg = load_cfg(args);
    fs::path dir = prepare_out(args, {"timing.csv", "timing.txt"});
    SplitResult split = prepare_data(cfg.data);
    ModelInstance teacher = load_teacher(fp_ckpt);

    std::vector<double> fractions;
    std::stringstream ss(fracs_csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) continue;
        try {
            fractions.push_back(std::stod(tok));
        } catch (const std::exception&) {
            throw ConfigError("bad fraction '" + tok + "' in --fractions");
        }
    }
    if (fractions.empty()) throw ConfigError("--fractions parsed to an empty list");

    auto rows = bench_fractions(teacher, split.train, split.eval, cfg.run, fractions);
    write_timing_csv((dir / "timing.csv").string(), rows);
    const std::string text = format_timing_text(rows);
    std::ofstream((dir / "timing.txt").string()) << text;
    std::fputs(text.c_str(), stdout);
    return 0;
}

int cmd_scores_dump(const CommonArgs& args, const std::string& fp_ckpt,
                    const std::string& q_ckpt) {
    ExperimentConfig cfg = load_cfg(args);
    fs::path dir = prepare_out(args, {"scores.csv"});
    SplitResult split = prepare_data(cfg.data);
    ModelInstance teacher = load_teacher(fp_ckpt);

    ModelInstance q0 = q_ckpt.empty()
                           ? clone_as_quantized(teacher, cfg.run.bits_w, cfg.run.bits_a,
                                                cfg.run.quant,
                                                calibration_batch(split.train, cfg.run.batch_size))
                           : load_checkpoint(q_ckpt);

    auto ids = all_ids(split.train);
    auto res = score_dataset(q0, teacher, split.train, ids, 0, cfg.run.epochs,
                             cfg.run.batch_size, cfg.run.metrics);
    write_scores_csv((dir / "scores.csv").string(), res.scores);
    std::printf("wrote %zu scores to %s\n", res.scores.size(),
                (dir / "scores.csv").string().c_str());
    return 0;
}

template <typename Fn>
int guarded(Fn&& fn) {
    try {
        return fn();
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << '\n';
        return 3;
    } catch (const ShapeError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 3;
    } catch (const ContractError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"coreset-driven quantization-aware training"};
    app.require_subcommand(1);

    CommonArgs common;
    app.add_option("--config", common.config_path, "TOML run configuration")->envname("QUARC_CONFIG");
    app.add_option("--seed", common.seed, "override the run seed");
    app.add_option("--out", common.out_dir, "output directory");
    app.add_flag("--force", common.force, "overwrite existing outputs");

    std::string fp_ckpt, q_ckpt;
    std::string seeds_csv = "1,2,3";
    std::string fracs_csv = "0.01,0.05,0.1";
    int buckets = 8;
    double fraction = 0.05;

    auto* pretrain = app.add_subcommand("pretrain", "train the full-precision teacher");

    auto* train = app.add_subcommand("train", "quantization-aware training with coresets");
    train->add_option("--fp-ckpt", fp_ckpt, "full-precision checkpoint")->required();

    auto* ablate = app.add_subcommand("ablate", "component grid: baseline/+res/+clc/+res+clc");
    ablate->add_option("--fp-ckpt", fp_ckpt, "full-precision checkpoint")->required();
    ablate->add_option("--seeds", seeds_csv, "comma-separated seed list");

    auto* correlate = app.add_subcommand("correlate", "RES-bucket vs accuracy correlation");
    correlate->add_option("--fp-ckpt", fp_ckpt, "full-precision checkpoint")->required();
    correlate->add_option("--q-ckpt", q_ckpt, "quantized checkpoint for scoring (default: fresh clone)");
    correlate->add_option("--buckets", buckets, "number of RES quantile bands (>= 5)");
    correlate->add_option("--fraction", fraction, "coreset fraction per bucket");
    correlate->add_option("--seeds", seeds_csv, "comma-separated seed list");

    auto* layerkl = app.add_subcommand("layer-kl", "per-tap KL between model pairs");
    layerkl->add_option("--fp-ckpt", fp_ckpt, "full-precision checkpoint")->required();
    layerkl->add_option("--q-ckpt", q_ckpt, "quantized checkpoint")->required();

    auto* bench = app.add_subcommand("bench", "full-data vs coreset wall-clock and pass counts");
    bench->add_option("--fp-ckpt", fp_ckpt, "full-precision checkpoint")->required();
    bench->add_option("--fractions", fracs_csv, "comma-separated coreset fractions");

    auto* scores = app.add_subcommand("scores-dump", "write the per-sample score table");
    scores->add_option("--fp-ckpt", fp_ckpt, "full-precision checkpoint")->required();
    scores->add_option("--q-ckpt", q_ckpt, "quantized checkpoint for scoring (default: fresh clone)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    if (pretrain->parsed()) return guarded([&] { return cmd_pretrain(common); });
    if (train->parsed()) return guarded([&] { return cmd_train(common, fp_ckpt); });
    if (ablate->parsed()) return guarded([&] { return cmd_ablate(common, fp_ckpt, seeds_csv); });
    if (correlate->parsed())
        return guarded(
            [&] { return cmd_correlate(common, fp_ckpt, q_ckpt, buckets, fraction, seeds_csv); });
    if (layerkl->parsed()) return guarded([&] { return cmd_layer_kl(common, fp_ckpt, q_ckpt); });
    if (bench->parsed()) return guarded([&] { return cmd_bench(common, fp_ckpt, fracs_csv); });
    if (scores->parsed()) return guarded([&] { return cmd_scores_dump(common, fp_ckpt, q_ckpt); });
    return 2;
}
