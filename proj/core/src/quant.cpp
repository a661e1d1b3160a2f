// SPDX-License-Identifier: Apache-2.0
#include "quarc/quant.hpp"

#include <cmath>

namespace quarc {

QuantSpec QuantSpec::weight(int bits, bool learnable) {
    if (bits < 2 || bits > 16) throw ConfigError("quantization bitwidth must lie in [2,16]");
    QuantSpec s;
    s.bits = bits;
    s.mode = QuantMode::WeightSigned;
    s.qn = 1 << (bits - 1);
    s.qp = (1 << (bits - 1)) - 1;
    s.scale = Tensor::scalar(real(1));
    s.scale.set_requires_grad(learnable);
    s.learnable = learnable;
    return s;
}

QuantSpec QuantSpec::activation(int bits, bool learnable) {
    if (bits < 2 || bits > 16) throw ConfigError("quantization bitwidth must lie in [2,16]");
    QuantSpec s;
    s.bits = bits;
    s.mode = QuantMode::ActivationUnsigned;
    s.qn = 0;
    s.qp = (1 << bits) - 1;
    s.scale = Tensor::scalar(real(1));
    s.scale.set_requires_grad(learnable);
    s.learnable = learnable;
    return s;
}

void QuantSpec::set_scale(real s) {
    if (!(s > real(0))) throw ConfigError("quantization scale must be positive");
    scale.values()[0] = s;
}

void QuantSpec::project_scale(real floor) {
    if (scale.values()[0] < floor) scale.values()[0] = floor;
}

void QuantSpec::set_grad_factor_from(std::size_t n_elements) {
    scale_grad_factor = real(1) / std::sqrt(real(n_elements) * real(qp));
}

real round_half_even(real v) {
    const real f = std::floor(v);
    const real diff = v - f;
    if (diff > real(0.5)) return f + real(1);
    if (diff < real(0.5)) return f;
    // exact tie: pick the even integer
    return std::fmod(f, real(2)) == real(0) ? f : f + real(1);
}

namespace {

real grad_factor(const QuantSpec& spec, std::size_t n_elements) {
    if (spec.scale_grad_factor > real(0)) return spec.scale_grad_factor;
    return real(1) / std::sqrt(real(n_elements) * real(spec.qp));
}

}  // namespace

Tensor quantize_forward(const Tensor& x, const QuantSpec& spec) {
    const real s = spec.scale_value();
    if (!(s > real(0))) throw ConfigError("quantize_forward: scale must be positive");
    x.check_finite("quantize_forward input");
    Tensor out = Tensor::zeros(x.shape());
    auto xv = x.values();
    auto ov = out.values();
    const real lo = -real(spec.qn), hi = real(spec.qp);
    for (std::size_t i = 0; i < ov.size(); ++i) {
        real t = xv[i] / s;
        t = t < lo ? lo : (t > hi ? hi : t);
        ov[i] = s * round_half_even(t);
    }
    out.check_finite("quantize_forward");
    return out;
}

QuantBackwardResult quantize_backward(const Tensor& upstream, const Tensor& x,
                                      const QuantSpec& spec) {
    if (upstream.shape() != x.shape())
        throw ShapeError("quantize_backward: upstream shape " + shape_str(upstream.shape()) +
                         " does not match input " + shape_str(x.shape()));
    const real s = spec.scale_value();
    const real lo = -real(spec.qn), hi = real(spec.qp);
    const real g = grad_factor(spec, x.size());

    Tensor grad_x = Tensor::zeros(x.shape());
    auto uv = upstream.values();
    auto xv = x.values();
    auto gv = grad_x.values();
    double gs = 0.0;
    for (std::size_t i = 0; i < gv.size(); ++i) {
        const real t = xv[i] / s;
        if (t >= lo && t <= hi) {
            gv[i] = uv[i];
            gs += double(uv[i]) * double(round_half_even(t) - t);
        } else {
            gs += double(uv[i]) * double(t < lo ? lo : hi);
        }
    }
    return {grad_x, real(gs) * g};
}

Tensor Graph::fake_quantize(const Tensor& x, QuantSpec& spec) {
    Tensor out = quantize_forward(x, spec);

    Tensor xc = x, sc = spec.scale, oc = out;
    const int qn = spec.qn, qp = spec.qp;
    const real g = grad_factor(spec, x.size());
    return record(OpKind::FakeQuant, {x, spec.scale}, out, [xc, sc, oc, qn, qp, g]() mutable {
        if (!oc.has_grad()) return;
        auto go = oc.grad();
        auto xv = xc.values();
        const real s = sc.at(0);
        const real lo = -real(qn), hi = real(qp);
        const bool want_x = xc.requires_grad();
        const bool want_s = sc.requires_grad();
        double gs = 0.0;
        for (std::size_t i = 0; i < go.size(); ++i) {
            const real t = xv[i] / s;
            if (t >= lo && t <= hi) {
                if (want_x) xc.accumulate_grad(i, go[i]);
                if (want_s) gs += double(go[i]) * double(round_half_even(t) - t);
            } else if (want_s) {
                gs += double(go[i]) * double(t < lo ? lo : hi);
            }
        }
        if (want_s) sc.accumulate_grad(0, real(gs) * g);
    });
}

real init_scale(const Tensor& values, const QuantSpec& spec) {
    if (values.size() == 0) throw ContractError("init_scale: empty tensor");
    double acc = 0.0;
    for (real v : values.values()) acc += std::abs(double(v));
    const real mean_abs = real(acc) / real(values.size());
    const real s = real(2) * mean_abs / std::sqrt(real(spec.qp));
    return std::max(s, real(1e-8));
}

}  // namespace quarc
