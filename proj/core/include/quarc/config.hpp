// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "quarc/trainer.hpp"

namespace quarc {

struct DataConfig {
    enum class Source { Synthetic, Idx, Csv };
    Source source = Source::Synthetic;
    SyntheticSpec synth{Generator::GaussianBlobs, 4, 1000, 1.0, 7};
    std::string idx_images, idx_labels;
    std::string csv_path;
    double eval_fraction = 0.2;
    std::uint64_t split_seed = 7;
    bool normalize = true;
};

struct ModelConfig {
    std::string arch = "mlp";
    std::vector<std::size_t> hidden = {32, 32};
    std::vector<std::size_t> channels;  // cnn
    std::vector<std::size_t> strides;   // cnn, parallel to channels
    std::vector<std::string> taps;      // empty = penultimate layer

    /// Builds the ModelDef, inferring input dims from the dataset.
    ModelDef to_def(const Dataset& data) const;
};

struct PretrainConfig {
    int epochs = 40;
    OptimConfig optim{OptimKind::Sgd, 0.05, 0.9, 0.0};
};

struct ExperimentConfig {
    DataConfig data;
    ModelConfig model;
    PretrainConfig pretrain;
    RunConfig run;
};

/// Loads + validates a TOML config ([data]/[model]/[pretrain]/[train]
/// sections, all optional); unknown sections or keys are a ConfigError.
ExperimentConfig load_experiment_config(const std::string& path);
ExperimentConfig parse_experiment_config(const std::string& toml_text);

Dataset load_data(const DataConfig& cfg);
/// Load + stratified split + (optional) train-fitted normalization.
SplitResult prepare_data(const DataConfig& cfg);

}  // namespace quarc
