// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <optional>
#include <string>

#include "quarc/data.hpp"
#include "quarc/graph.hpp"
#include "quarc/quant.hpp"

namespace quarc {

enum class Arch { Mlp, Cnn };
enum class Precision { Full, Quantized };

struct ConvBlock {
    std::size_t channels = 8;
    std::size_t stride = 1;  // 3x3 kernel, zero padding 1
};

/// Architecture description shared by a full-precision model and its
/// quantized sibling. Tap names refer to layers whose pre-activation
/// output is captured for alignment; the final logits layer is never
/// a tap.
struct ModelDef {
    Arch arch = Arch::Mlp;
    std::size_t input_dim = 0;                 // mlp
    std::vector<std::size_t> hidden;           // mlp widths
    std::size_t in_channels = 0;               // cnn
    std::size_t image_h = 0, image_w = 0;      // cnn
    std::vector<ConvBlock> blocks;             // cnn, 2..4 blocks
    std::size_t classes = 0;
    std::vector<std::string> taps;             // defaults to the penultimate layer

    static ModelDef mlp(std::size_t input_dim, std::vector<std::size_t> hidden,
                        std::size_t classes, std::vector<std::string> taps = {});
    static ModelDef cnn(std::size_t in_channels, std::size_t image_h, std::size_t image_w,
                        std::vector<ConvBlock> blocks, std::size_t classes,
                        std::vector<std::string> taps = {});

    std::vector<std::string> layer_names() const;  // ["fc1","fc2",...] / ["conv1",..,"fc"]
    std::string final_layer() const;
    std::string penultimate_layer() const;
    std::size_t param_count() const;  // closed-form weight+bias count
    void validate() const;
};

/// Ordered tap-name -> tensor map; order follows ModelDef::taps.
struct TapSet {
    std::vector<std::pair<std::string, Tensor>> items;

    const Tensor* find(const std::string& name) const;
    std::size_t size() const { return items.size(); }
    bool same_names(const TapSet& other) const;
};

struct LayerQuant {
    std::optional<QuantSpec> weight;
    std::optional<QuantSpec> activation;
};

struct QuantOptions {
    bool quantize_first_last = false;  // keep first/last layers full-precision
    bool learnable_scale = true;       // false = fixed-scale ablation mode
};

struct ModelInstance {
    ModelDef def;
    Precision precision = Precision::Full;
    std::map<std::string, Tensor> params;      // "<layer>.w" / "<layer>.b"
    std::map<std::string, LayerQuant> quant;   // by layer name
    bool bypass_quant = false;                 // skip fake-quant nodes (testing)

    Tensor& param(const std::string& name);
    const Tensor& param(const std::string& name) const;
    /// Trainable tensors in a stable order: per layer w then b, then the
    /// learnable quantizer scales.
    std::vector<Tensor> parameters();
    void project_quant_scales(real floor = 1e-8);
};

struct ForwardResult {
    Tensor logits;  // [B x M]
    Tensor probs;   // softmax(logits), rows sum to 1
    TapSet taps;
};

/// He-normal initialized full-precision instance; deterministic per seed.
ModelInstance init_model(const ModelDef& def, std::uint64_t seed);

/// One forward pass recorded on `g`. Quantized instances route weights
/// (and, when configured, post-activation outputs) through fake-quant
/// nodes unless bypass_quant is set.
ForwardResult forward(Graph& g, ModelInstance& m, const Tensor& batch);

/// Deep-copies a full-precision model and attaches quantizer specs with
/// calibrated scales; activation scales come from one calibration batch.
ModelInstance clone_as_quantized(const ModelInstance& fp, int bits_w,
                                 std::optional<int> bits_a, const QuantOptions& opts,
                                 const Tensor& calibration_batch);

/// Versioned JSON checkpoint: ModelDef + named parameter tensors +
/// quantizer specs. Stable layout, documented in the README.
void save_checkpoint(const ModelInstance& m, const std::string& path);
ModelInstance load_checkpoint(const std::string& path);

}  // namespace quarc
