// SPDX-License-Identifier: Apache-2.0
#include "quarc/config.hpp"

#include <algorithm>
#include <set>

#include "quarc/toml.hpp"

namespace quarc {

ModelDef ModelConfig::to_def(const Dataset& data) const {
    if (arch == "mlp") {
        std::size_t input_dim = data.feature_dim();
        return ModelDef::mlp(input_dim, hidden, std::size_t(data.classes), taps);
    }
    if (arch == "cnn") {
        if (!data.is_image()) throw ConfigError("cnn model requires image data [N x C x H x W]");
        if (channels.empty()) throw ConfigError("cnn model needs a channels list");
        std::vector<ConvBlock> blocks;
        for (std::size_t i = 0; i < channels.size(); ++i) {
            ConvBlock b;
            b.channels = channels[i];
            b.stride = i < strides.size() ? strides[i] : 1;
            blocks.push_back(b);
        }
        return ModelDef::cnn(data.features.dim(1), data.features.dim(2), data.features.dim(3),
                             blocks, std::size_t(data.classes), taps);
    }
    throw ConfigError("unknown model arch '" + arch + "' (expected mlp or cnn)");
}

namespace {

using minitoml::Document;
using minitoml::Value;

void check_known_keys(const Document& doc, const std::string& section,
                      const std::set<std::string>& known) {
    auto it = doc.sections.find(section);
    if (it == doc.sections.end()) return;
    for (const auto& [key, value] : it->second) {
        if (!known.count(key))
            throw ConfigError("config: unknown key '" + key + "' in section [" + section + "]");
    }
}

std::vector<std::size_t> size_list(const Value& v) {
    std::vector<std::size_t> out;
    for (const auto& e : v.as_array()) {
        const long long i = e.as_int();
        if (i < 0) throw ConfigError("config: negative value in size list");
        out.push_back(std::size_t(i));
    }
    return out;
}

std::vector<std::string> string_list(const Value& v) {
    std::vector<std::string> out;
    for (const auto& e : v.as_array()) out.push_back(e.as_string());
    return out;
}

void parse_data(const Document& doc, DataConfig& d) {
    check_known_keys(doc, "data",
                     {"source", "generator", "classes", "per_class", "noise", "seed", "images",
                      "labels", "path", "eval_fraction", "split_seed", "normalize"});
    if (auto* v = doc.find("data", "source")) {
        const std::string s = v->as_string();
        if (s == "synthetic")
            d.source = DataConfig::Source::Synthetic;
        else if (s == "idx")
            d.source = DataConfig::Source::Idx;
        else if (s == "csv")
            d.source = DataConfig::Source::Csv;
        else
            throw ConfigError("config: unknown data source '" + s + "'");
    }
    if (auto* v = doc.find("data", "generator")) {
        const std::string s = v->as_string();
        if (s == "gaussian-blobs")
            d.synth.gen = Generator::GaussianBlobs;
        else if (s == "two-spirals")
            d.synth.gen = Generator::TwoSpirals;
        else
            throw ConfigError("config: unknown generator '" + s + "'");
    }
    if (auto* v = doc.find("data", "classes")) d.synth.classes = int(v->as_int());
    if (auto* v = doc.find("data", "per_class")) d.synth.per_class = int(v->as_int());
    if (auto* v = doc.find("data", "noise")) d.synth.noise = real(v->as_number());
    if (auto* v = doc.find("data", "seed")) d.synth.seed = std::uint64_t(v->as_int());
    if (auto* v = doc.find("data", "images")) d.idx_images = v->as_string();
    if (auto* v = doc.find("data", "labels")) d.idx_labels = v->as_string();
    if (auto* v = doc.find("data", "path")) d.csv_path = v->as_string();
    if (auto* v = doc.find("data", "eval_fraction")) d.eval_fraction = v->as_number();
    if (auto* v = doc.find("data", "split_seed")) d.split_seed = std::uint64_t(v->as_int());
    if (auto* v = doc.find("data", "normalize")) d.normalize = v->as_bool();
}

void parse_model(const Document& doc, ModelConfig& m) {
    check_known_keys(doc, "model", {"arch", "hidden", "channels", "strides", "taps"});
    if (auto* v = doc.find("model", "arch")) m.arch = v->as_string();
    if (auto* v = doc.find("model", "hidden")) m.hidden = size_list(*v);
    if (auto* v = doc.find("model", "channels")) m.channels = size_list(*v);
    if (auto* v = doc.find("model", "strides")) m.strides = size_list(*v);
    if (auto* v = doc.find("model", "taps")) m.taps = string_list(*v);
}

void parse_optim(const Document& doc, const std::string& section, OptimConfig& o) {
    if (auto* v = doc.find(section, "optimizer")) {
        const std::string s = v->as_string();
        if (s == "sgd")
            o.kind = OptimKind::Sgd;
        else if (s == "adam")
            o.kind = OptimKind::Adam;
        else
            throw ConfigError("config: unknown optimizer '" + s + "'");
    }
    if (auto* v = doc.find(section, "lr")) o.lr = real(v->as_number());
    if (auto* v = doc.find(section, "momentum")) o.momentum = real(v->as_number());
    if (auto* v = doc.find(section, "weight_decay")) o.weight_decay = real(v->as_number());
}

void parse_pretrain(const Document& doc, PretrainConfig& p) {
    check_known_keys(doc, "pretrain", {"epochs", "optimizer", "lr", "momentum", "weight_decay"});
    if (auto* v = doc.find("pretrain", "epochs")) p.epochs = int(v->as_int());
    parse_optim(doc, "pretrain", p.optim);
}

void parse_train(const Document& doc, RunConfig& r) {
    check_known_keys(doc, "train",
                     {"bits_w", "bits_a", "fraction", "interval", "epochs", "beta", "clc",
                      "method", "metrics", "optimizer", "lr", "momentum", "weight_decay",
                      "batch_size", "seed", "lr_schedule", "quantize_first_last",
                      "learnable_scale", "normalize_res"});
    if (auto* v = doc.find("train", "bits_w")) r.bits_w = int(v->as_int());
    if (auto* v = doc.find("train", "bits_a")) r.bits_a = int(v->as_int());
    if (auto* v = doc.find("train", "fraction")) r.fraction = v->as_number();
    if (auto* v = doc.find("train", "interval")) r.interval = int(v->as_int());
    if (auto* v = doc.find("train", "epochs")) r.epochs = int(v->as_int());
    if (auto* v = doc.find("train", "beta")) r.beta = real(v->as_number());
    if (auto* v = doc.find("train", "clc")) r.clc = v->as_bool();
    if (auto* v = doc.find("train", "method")) {
        const std::string s = v->as_string();
        if (s == "quarc")
            r.method = Method::Quarc;
        else if (s == "random-coreset")
            r.method = Method::RandomCoreset;
        else if (s == "full-data")
            r.method = Method::FullData;
        else
            throw ConfigError("config: unknown method '" + s + "'");
    }
    if (auto* v = doc.find("train", "metrics")) {
        r.metrics = {false, false, false};
        for (const auto& name : string_list(*v)) {
            if (name == "evs")
                r.metrics.evs = true;
            else if (name == "ds")
                r.metrics.ds = true;
            else if (name == "res")
                r.metrics.res = true;
            else
                throw ConfigError("config: unknown selection metric '" + name + "'");
        }
    }
    if (auto* v = doc.find("train", "normalize_res")) r.normalize_res = v->as_bool();
    parse_optim(doc, "train", r.optim);
    if (auto* v = doc.find("train", "batch_size")) r.batch_size = std::size_t(v->as_int());
    if (auto* v = doc.find("train", "seed")) r.seed = std::uint64_t(v->as_int());
    if (auto* v = doc.find("train", "lr_schedule")) {
        const std::string s = v->as_string();
        if (s == "constant")
            r.lr_schedule = LrSchedule::Constant;
        else if (s == "cosine")
            r.lr_schedule = LrSchedule::Cosine;
        else
            throw ConfigError("config: unknown lr_schedule '" + s + "'");
    }
    if (auto* v = doc.find("train", "quantize_first_last"))
        r.quant.quantize_first_last = v->as_bool();
    if (auto* v = doc.find("train", "learnable_scale")) r.quant.learnable_scale = v->as_bool();
}

ExperimentConfig from_document(const Document& doc) {
    for (const auto& [name, table] : doc.sections) {
        if (name != "" && name != "data" && name != "model" && name != "pretrain" &&
            name != "train")
            throw ConfigError("config: unknown section [" + name + "]");
        if (name == "" && !table.empty())
            throw ConfigError("config: top-level keys are not allowed");
    }
    ExperimentConfig cfg;
    parse_data(doc, cfg.data);
    parse_model(doc, cfg.model);
    parse_pretrain(doc, cfg.pretrain);
    parse_train(doc, cfg.run);
    cfg.run.validate();
    if (!(cfg.data.eval_fraction > 0.0 && cfg.data.eval_fraction < 1.0))
        throw ConfigError("config: eval_fraction must lie in (0,1)");
    if (cfg.pretrain.epochs < 0) throw ConfigError("config: pretrain epochs must be >= 0");
    return cfg;
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& toml_text) {
    return from_document(minitoml::parse(toml_text));
}

ExperimentConfig load_experiment_config(const std::string& path) {
    return from_document(minitoml::parse_file(path));
}

Dataset load_data(const DataConfig& cfg) {
    switch (cfg.source) {
        case DataConfig::Source::Synthetic:
            return generate_synthetic(cfg.synth);
        case DataConfig::Source::Idx:
            if (cfg.idx_images.empty() || cfg.idx_labels.empty())
                throw ConfigError("config: idx source needs images and labels paths");
            return load_idx(cfg.idx_images, cfg.idx_labels);
        case DataConfig::Source::Csv:
            if (cfg.csv_path.empty()) throw ConfigError("config: csv source needs a path");
            return load_csv(cfg.csv_path);
    }
    throw ConfigError("config: bad data source");
}

SplitResult prepare_data(const DataConfig& cfg) {
    Dataset full = load_data(cfg);
    SplitResult split = split_dataset(full, cfg.eval_fraction, cfg.split_seed);
    if (cfg.normalize) normalize_splits(split);
    return split;
}

}  // namespace quarc
