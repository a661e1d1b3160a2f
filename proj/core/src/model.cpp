// SPDX-License-Identifier: Apache-2.0
#include "quarc/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <json.hpp>

namespace quarc {

ModelDef ModelDef::mlp(std::size_t input_dim, std::vector<std::size_t> hidden,
                       std::size_t classes, std::vector<std::string> taps) {
    ModelDef def;
    def.arch = Arch::Mlp;
    def.input_dim = input_dim;
    def.hidden = std::move(hidden);
    def.classes = classes;
    def.taps = std::move(taps);
    if (def.taps.empty()) def.taps = {def.penultimate_layer()};
    def.validate();
    return def;
}

ModelDef ModelDef::cnn(std::size_t in_channels, std::size_t image_h, std::size_t image_w,
                       std::vector<ConvBlock> blocks, std::size_t classes,
                       std::vector<std::string> taps) {
    ModelDef def;
    def.arch = Arch::Cnn;
    def.in_channels = in_channels;
    def.image_h = image_h;
    def.image_w = image_w;
    def.blocks = std::move(blocks);
    def.classes = classes;
    def.taps = std::move(taps);
    if (def.taps.empty()) def.taps = {def.penultimate_layer()};
    def.validate();
    return def;
}

std::vector<std::string> ModelDef::layer_names() const {
    std::vector<std::string> names;
    if (arch == Arch::Mlp) {
        for (std::size_t i = 0; i < hidden.size() + 1; ++i)
            names.push_back("fc" + std::to_string(i + 1));
    } else {
        for (std::size_t i = 0; i < blocks.size(); ++i)
            names.push_back("conv" + std::to_string(i + 1));
        names.push_back("fc");
    }
    return names;
}

std::string ModelDef::final_layer() const { return layer_names().back(); }

std::string ModelDef::penultimate_layer() const {
    auto names = layer_names();
    if (names.size() < 2) throw ConfigError("model has no intermediate layer to tap");
    return names[names.size() - 2];
}

void ModelDef::validate() const {
    if (classes < 2) throw ConfigError("model needs classes >= 2");
    if (arch == Arch::Mlp) {
        if (input_dim == 0) throw ConfigError("mlp needs input_dim > 0");
        for (std::size_t h : hidden)
            if (h == 0) throw ConfigError("mlp hidden width must be > 0");
    } else {
        if (in_channels == 0 || image_h == 0 || image_w == 0)
            throw ConfigError("cnn needs in_channels and image dims > 0");
        if (blocks.size() < 2 || blocks.size() > 4)
            throw ConfigError("cnn supports 2..4 conv blocks");
        for (const auto& b : blocks) {
            if (b.channels == 0) throw ConfigError("conv block channels must be > 0");
            if (b.stride == 0 || b.stride > 2) throw ConfigError("conv stride must be 1 or 2");
        }
    }
    auto names = layer_names();
    for (const auto& tap : taps) {
        if (std::find(names.begin(), names.end(), tap) == names.end())
            throw ConfigError("tap '" + tap + "' does not name a layer");
        if (tap == final_layer())
            throw ConfigError("the final logits layer cannot be a tap");
    }
}

namespace {

struct LayerDims {
    std::size_t in = 0, out = 0;  // weight is [in x out]
};

// Per-layer weight dims plus, for cnn, the spatial sizes after each block.
struct PlanEntry {
    std::string name;
    LayerDims dims;
    bool is_conv = false;
    std::size_t out_channels = 0, oh = 0, ow = 0, stride = 1;
};

std::vector<PlanEntry> layer_plan(const ModelDef& def) {
    std::vector<PlanEntry> plan;
    if (def.arch == Arch::Mlp) {
        std::size_t prev = def.input_dim;
        auto names = def.layer_names();
        for (std::size_t i = 0; i < names.size(); ++i) {
            const std::size_t out = (i < def.hidden.size()) ? def.hidden[i] : def.classes;
            plan.push_back({names[i], {prev, out}, false, 0, 0, 0, 1});
            prev = out;
        }
    } else {
        std::size_t c = def.in_channels, h = def.image_h, w = def.image_w;
        for (std::size_t i = 0; i < def.blocks.size(); ++i) {
            const auto& blk = def.blocks[i];
            const std::size_t oh = (h + 2 - 3) / blk.stride + 1;
            const std::size_t ow = (w + 2 - 3) / blk.stride + 1;
            plan.push_back({"conv" + std::to_string(i + 1),
                            {c * 9, blk.channels},
                            true,
                            blk.channels,
                            oh,
                            ow,
                            blk.stride});
            c = blk.channels;
            h = oh;
            w = ow;
        }
        plan.push_back({"fc", {c * h * w, def.classes}, false, 0, 0, 0, 1});
    }
    return plan;
}

}  // namespace

std::size_t ModelDef::param_count() const {
    std::size_t count = 0;
    for (const auto& e : layer_plan(*this)) count += e.dims.in * e.dims.out + e.dims.out;
    return count;
}

const Tensor* TapSet::find(const std::string& name) const {
    for (const auto& [n, t] : items)
        if (n == name) return &t;
    return nullptr;
}

bool TapSet::same_names(const TapSet& other) const {
    if (items.size() != other.items.size()) return false;
    for (std::size_t i = 0; i < items.size(); ++i)
        if (items[i].first != other.items[i].first) return false;
    return true;
}

Tensor& ModelInstance::param(const std::string& name) {
    auto it = params.find(name);
    if (it == params.end()) throw ContractError("unknown parameter '" + name + "'");
    return it->second;
}

const Tensor& ModelInstance::param(const std::string& name) const {
    auto it = params.find(name);
    if (it == params.end()) throw ContractError("unknown parameter '" + name + "'");
    return it->second;
}

std::vector<Tensor> ModelInstance::parameters() {
    std::vector<Tensor> out;
    for (const auto& name : def.layer_names()) {
        out.push_back(param(name + ".w"));
        out.push_back(param(name + ".b"));
    }
    for (const auto& name : def.layer_names()) {
        auto it = quant.find(name);
        if (it == quant.end()) continue;
        if (it->second.weight && it->second.weight->learnable)
            out.push_back(it->second.weight->scale);
        if (it->second.activation && it->second.activation->learnable)
            out.push_back(it->second.activation->scale);
    }
    return out;
}

void ModelInstance::project_quant_scales(real floor) {
    for (auto& [name, lq] : quant) {
        if (lq.weight) lq.weight->project_scale(floor);
        if (lq.activation) lq.activation->project_scale(floor);
    }
}

ModelInstance init_model(const ModelDef& def, std::uint64_t seed) {
    def.validate();
    ModelInstance m;
    m.def = def;
    m.precision = Precision::Full;
    std::mt19937_64 rng(seed);
    std::normal_distribution<real> gauss(real(0), real(1));
    for (const auto& e : layer_plan(def)) {
        const real std_dev = std::sqrt(real(2) / real(e.dims.in));
        std::vector<real> w(e.dims.in * e.dims.out);
        for (real& v : w) v = std_dev * gauss(rng);
        m.params[e.name + ".w"] =
            Tensor::from({e.dims.in, e.dims.out}, std::move(w)).set_requires_grad(true);
        m.params[e.name + ".b"] = Tensor::zeros({e.dims.out}).set_requires_grad(true);
    }
    return m;
}

namespace {

Tensor maybe_quantize(Graph& g, ModelInstance& m, const std::string& layer, bool is_weight,
                      const Tensor& t) {
    if (m.bypass_quant) return t;
    auto it = m.quant.find(layer);
    if (it == m.quant.end()) return t;
    auto& spec = is_weight ? it->second.weight : it->second.activation;
    if (!spec) return t;
    return g.fake_quantize(t, *spec);
}

}  // namespace

ForwardResult forward(Graph& g, ModelInstance& m, const Tensor& batch) {
    const auto plan = layer_plan(m.def);
    std::map<std::string, Tensor> tap_values;

    Tensor x = batch;
    if (m.def.arch == Arch::Mlp) {
        if (batch.ndim() != 2 || batch.dim(1) != m.def.input_dim)
            throw ShapeError("forward: batch shape " + shape_str(batch.shape()) +
                             " does not match mlp input dim " + std::to_string(m.def.input_dim));
    } else {
        if (batch.ndim() != 4 || batch.dim(1) != m.def.in_channels ||
            batch.dim(2) != m.def.image_h || batch.dim(3) != m.def.image_w)
            throw ShapeError("forward: batch shape " + shape_str(batch.shape()) +
                             " does not match cnn input");
    }
    const std::size_t b = batch.dim(0);

    for (std::size_t i = 0; i < plan.size(); ++i) {
        const auto& e = plan[i];
        const bool final_layer = (i + 1 == plan.size());
        Tensor w = maybe_quantize(g, m, e.name, true, m.param(e.name + ".w"));
        const Tensor& bias = m.param(e.name + ".b");

        Tensor z;
        if (e.is_conv) {
            Tensor cols = g.im2col(x, 3, e.stride, 1);
            Tensor rows = g.add_bias(g.matmul(cols, w), bias);
            z = g.rows_to_nchw(rows, b, e.out_channels, e.oh, e.ow);
        } else {
            if (x.ndim() == 4) x = g.reshape(x, {b, x.size() / b});
            z = g.add_bias(g.matmul(x, w), bias);
        }

        if (std::find(m.def.taps.begin(), m.def.taps.end(), e.name) != m.def.taps.end()) {
            tap_values[e.name] = e.is_conv ? g.reshape(z, {b, z.size() / b}) : z;
        }

        if (final_layer) {
            x = z;
        } else {
            Tensor a = g.relu(z);
            x = maybe_quantize(g, m, e.name, false, a);
        }
    }

    ForwardResult res;
    res.logits = x;
    res.probs = g.softmax(x);
    for (const auto& tap : m.def.taps) {
        auto it = tap_values.find(tap);
        if (it != tap_values.end()) res.taps.items.emplace_back(tap, it->second);
    }
    return res;
}

ModelInstance clone_as_quantized(const ModelInstance& fp, int bits_w,
                                 std::optional<int> bits_a, const QuantOptions& opts,
                                 const Tensor& calibration_batch) {
    if (fp.precision != Precision::Full)
        throw ContractError("clone_as_quantized: source must be full-precision");
    if (bits_w < 2 || (bits_a && *bits_a < 2))
        throw ConfigError("quantization bitwidth must be >= 2");

    ModelInstance q;
    q.def = fp.def;
    q.precision = Precision::Quantized;
    for (const auto& [name, t] : fp.params) q.params[name] = t.clone();

    const auto names = fp.def.layer_names();
    auto quantized_layer = [&](std::size_t i) {
        if (opts.quantize_first_last) return true;
        return i != 0 && i + 1 != names.size();
    };

    for (std::size_t i = 0; i < names.size(); ++i) {
        if (!quantized_layer(i)) continue;
        const Tensor& w = q.param(names[i] + ".w");
        QuantSpec ws = QuantSpec::weight(bits_w, opts.learnable_scale);
        ws.set_scale(init_scale(w, ws));
        ws.set_grad_factor_from(w.size());
        q.quant[names[i]].weight = std::move(ws);
    }

    if (bits_a) {
        // Calibrate activation scales from the full-precision model's
        // post-activation outputs on one batch.
        ModelInstance probe;
        probe.def = fp.def;
        probe.precision = Precision::Full;
        for (const auto& [name, t] : fp.params) probe.params[name] = t.clone();
        // capture every post-relu output by tapping all non-final layers
        probe.def.taps.clear();
        for (std::size_t i = 0; i + 1 < names.size(); ++i) probe.def.taps.push_back(names[i]);

        Graph g;
        ForwardResult res = forward(g, probe, calibration_batch);
        for (std::size_t i = 0; i + 1 < names.size(); ++i) {
            if (!quantized_layer(i)) continue;
            const Tensor* z = res.taps.find(names[i]);
            if (!z) continue;
            // post-activation values = relu of the tapped pre-activation
            Tensor act = z->clone();
            for (real& v : act.values())
                if (v < real(0)) v = real(0);
            QuantSpec as = QuantSpec::activation(*bits_a, opts.learnable_scale);
            as.set_scale(init_scale(act, as));
            as.set_grad_factor_from(act.size());
            q.quant[names[i]].activation = std::move(as);
        }
    }
    return q;
}

// ---------------------------------------------------------------------------
// Checkpoint serialization (JSON-of-arrays, format version 1)
// ---------------------------------------------------------------------------

namespace {

using nlohmann::json;

json tensor_to_json(const Tensor& t) {
    json j;
    j["shape"] = t.shape();
    j["data"] = std::vector<real>(t.values().begin(), t.values().end());
    return j;
}

Tensor tensor_from_json(const json& j, bool trainable) {
    Shape shape = j.at("shape").get<Shape>();
    std::vector<real> data = j.at("data").get<std::vector<real>>();
    Tensor t = Tensor::from(std::move(shape), std::move(data));
    t.set_requires_grad(trainable);
    return t;
}

json spec_to_json(const QuantSpec& s) {
    json j;
    j["bits"] = s.bits;
    j["mode"] = s.mode == QuantMode::WeightSigned ? "weight-signed" : "activation-unsigned";
    j["scale"] = s.scale_value();
    j["grad_factor"] = s.scale_grad_factor;
    j["learnable"] = s.learnable;
    return j;
}

QuantSpec spec_from_json(const json& j) {
    const std::string mode = j.at("mode").get<std::string>();
    const int bits = j.at("bits").get<int>();
    QuantSpec s = mode == "weight-signed" ? QuantSpec::weight(bits, j.at("learnable").get<bool>())
                                          : QuantSpec::activation(bits, j.at("learnable").get<bool>());
    s.set_scale(j.at("scale").get<real>());
    s.scale_grad_factor = j.at("grad_factor").get<real>();
    return s;
}

json def_to_json(const ModelDef& def) {
    json j;
    j["arch"] = def.arch == Arch::Mlp ? "mlp" : "cnn";
    j["input_dim"] = def.input_dim;
    j["hidden"] = def.hidden;
    j["in_channels"] = def.in_channels;
    j["image_h"] = def.image_h;
    j["image_w"] = def.image_w;
    json blocks = json::array();
    for (const auto& b : def.blocks) blocks.push_back({{"channels", b.channels}, {"stride", b.stride}});
    j["blocks"] = blocks;
    j["classes"] = def.classes;
    j["taps"] = def.taps;
    return j;
}

ModelDef def_from_json(const json& j) {
    ModelDef def;
    def.arch = j.at("arch").get<std::string>() == "mlp" ? Arch::Mlp : Arch::Cnn;
    def.input_dim = j.at("input_dim").get<std::size_t>();
    def.hidden = j.at("hidden").get<std::vector<std::size_t>>();
    def.in_channels = j.at("in_channels").get<std::size_t>();
    def.image_h = j.at("image_h").get<std::size_t>();
    def.image_w = j.at("image_w").get<std::size_t>();
    for (const auto& b : j.at("blocks"))
        def.blocks.push_back({b.at("channels").get<std::size_t>(), b.at("stride").get<std::size_t>()});
    def.classes = j.at("classes").get<std::size_t>();
    def.taps = j.at("taps").get<std::vector<std::string>>();
    def.validate();
    return def;
}

}  // namespace

void save_checkpoint(const ModelInstance& m, const std::string& path) {
    json j;
    j["format"] = "quarc-checkpoint";
    j["version"] = 1;
    j["model"] = def_to_json(m.def);
    j["precision"] = m.precision == Precision::Full ? "full" : "quantized";
    json params;
    for (const auto& [name, t] : m.params) params[name] = tensor_to_json(t);
    j["params"] = std::move(params);
    json quant;
    for (const auto& [layer, lq] : m.quant) {
        json lj;
        if (lq.weight) lj["weight"] = spec_to_json(*lq.weight);
        if (lq.activation) lj["activation"] = spec_to_json(*lq.activation);
        quant[layer] = std::move(lj);
    }
    j["quant"] = std::move(quant);

    std::ofstream out(path);
    if (!out) throw FormatError("checkpoint: cannot open " + path + " for writing");
    out << j.dump();
    if (!out) throw FormatError("checkpoint: write failed for " + path);
}

ModelInstance load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("checkpoint: cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw FormatError("checkpoint: invalid JSON in " + path + ": " + e.what());
    }
    try {
        if (j.at("format").get<std::string>() != "quarc-checkpoint")
            throw FormatError("checkpoint: unrecognized format field");
        if (j.at("version").get<int>() != 1)
            throw FormatError("checkpoint: unsupported version");
        ModelInstance m;
        m.def = def_from_json(j.at("model"));
        m.precision = j.at("precision").get<std::string>() == "full" ? Precision::Full
                                                                     : Precision::Quantized;
        for (const auto& [name, tj] : j.at("params").items())
            m.params[name] = tensor_from_json(tj, true);
        for (const auto& [layer, lj] : j.at("quant").items()) {
            LayerQuant lq;
            if (lj.contains("weight")) lq.weight = spec_from_json(lj.at("weight"));
            if (lj.contains("activation")) lq.activation = spec_from_json(lj.at("activation"));
            m.quant[layer] = std::move(lq);
        }
        // sanity: every expected parameter is present with the right size
        for (const auto& name : m.def.layer_names()) {
            if (!m.params.count(name + ".w") || !m.params.count(name + ".b"))
                throw FormatError("checkpoint: missing parameters for layer " + name);
        }
        return m;
    } catch (const json::exception& e) {
        throw FormatError("checkpoint: malformed " + path + ": " + e.what());
    }
}

}  // namespace quarc
