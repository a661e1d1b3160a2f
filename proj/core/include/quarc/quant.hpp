// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "quarc/graph.hpp"
#include "quarc/tensor.hpp"

namespace quarc {

enum class QuantMode {
    WeightSigned,        // Q_N = 2^(n-1),  Q_P = 2^(n-1) - 1
    ActivationUnsigned,  // Q_N = 0,        Q_P = 2^n - 1
};

/// Parameters of one fake-quantization site. The scale is a scalar leaf
/// tensor so it can be trained alongside the weights (LSQ-style); it is
/// re-projected to >= 1e-8 after every optimizer step.
struct QuantSpec {
    int bits = 8;
    QuantMode mode = QuantMode::WeightSigned;
    int qn = 0;
    int qp = 0;
    Tensor scale;                 // scalar, > 0
    real scale_grad_factor = 0;   // g; 0 means "derive from tensor size per call"
    bool learnable = true;        // false freezes the scale at its init value

    static QuantSpec weight(int bits, bool learnable = true);
    static QuantSpec activation(int bits, bool learnable = true);

    real scale_value() const { return scale.at(0); }
    void set_scale(real s);
    /// Clamp the scale from below; called after each optimizer step.
    void project_scale(real floor = 1e-8);
    /// Fix g = 1 / sqrt(n_elements * qp) from the tensor this spec quantizes.
    void set_grad_factor_from(std::size_t n_elements);
};

/// Round to nearest with ties to even. The rounding inside the
/// quantize-dequantize step; explicit so the grid is bit-reproducible.
real round_half_even(real v);

/// s * round(clamp(x/s, -qn, qp)); pure, no graph recording.
Tensor quantize_forward(const Tensor& x, const QuantSpec& spec);

struct QuantBackwardResult {
    Tensor grad_x;      // upstream masked by the in-range predicate on x/s
    real grad_scale;    // LSQ rule, multiplied by the gradient factor g
};

/// Straight-through backward: grad_x[i] = upstream[i] when x[i]/s lies in
/// [-qn, qp], else 0. grad_scale accumulates (-x/s + round(x/s)) in range
/// and -qn / qp at the clamp rails, times g.
QuantBackwardResult quantize_backward(const Tensor& upstream, const Tensor& x,
                                      const QuantSpec& spec);

/// LSQ-style calibration: 2 * mean(|values|) / sqrt(qp), floored at 1e-8.
real init_scale(const Tensor& values, const QuantSpec& spec);

}  // namespace quarc
