// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <vector>

#include "quarc/tensor.hpp"

namespace quarc {

struct QuantSpec;

enum class OpKind {
    MatMul,
    Add,
    Sub,
    Mul,
    Div,
    AddScalar,
    MulScalar,
    Relu,
    Exp,
    Log,
    LogEps,
    Softmax,
    Sum,
    Mean,
    AddBias,
    GatherRows,
    Reshape,
    Im2Col,
    RowsToNchw,
    FakeQuant,
};

struct GraphNode {
    OpKind kind;
    std::vector<std::uint64_t> input_ids;
    std::uint64_t output_id;
    std::function<void()> backward;
};

/// Define-by-run computation tape. A Graph is rebuilt for every forward
/// pass; nodes are appended in execution order, so inputs of a node always
/// precede it and backward() is a single reverse sweep.
///
/// Broadcasting is limited to equal shapes and scalar-vs-tensor; anything
/// else is a ShapeError. Every operation checks its output for NaN/Inf.
/// A Graph and the tensors it creates are confined to one thread.
class Graph {
public:
    /// [m x k] . [k x n] -> [m x n], 64-bit accumulation per element.
    Tensor matmul(const Tensor& a, const Tensor& b);

    Tensor add(const Tensor& a, const Tensor& b);
    Tensor sub(const Tensor& a, const Tensor& b);
    Tensor mul(const Tensor& a, const Tensor& b);
    /// Pointwise division; any zero divisor is a NumericError.
    Tensor div(const Tensor& a, const Tensor& b);

    Tensor add_scalar(const Tensor& a, real c);
    Tensor mul_scalar(const Tensor& a, real c);

    Tensor relu(const Tensor& a);
    Tensor exp(const Tensor& a);
    /// Natural log; a non-positive input is a NumericError. Use log_eps
    /// for probability-like inputs that may contain exact zeros.
    Tensor log(const Tensor& a);
    /// log(x + eps), the clamped variant used by the losses.
    Tensor log_eps(const Tensor& a, real eps);

    /// Softmax over the last dimension, max-subtracted for stability.
    Tensor softmax(const Tensor& a);

    /// Full reduction to a scalar, 64-bit accumulator.
    Tensor sum(const Tensor& a);
    Tensor mean(const Tensor& a);

    /// [B x N] + [N] row-broadcast add (bias of a linear layer).
    Tensor add_bias(const Tensor& x, const Tensor& bias);

    /// out[b] = x[b, cols[b]] for x of shape [B x M]. Out-of-range column
    /// indices are a ContractError.
    Tensor gather_rows(const Tensor& x, const std::vector<int>& cols);

    /// Same data, new shape with identical element count.
    Tensor reshape(const Tensor& a, Shape shape);

    /// Unfold [B x C x H x W] into [B*OH*OW x C*k*k] patch rows for a
    /// k x k convolution with the given stride and zero padding.
    Tensor im2col(const Tensor& x, std::size_t k, std::size_t stride, std::size_t pad);

    /// Fold matmul output rows [B*OH*OW x C] back into [B x C x OH x OW].
    Tensor rows_to_nchw(const Tensor& rows, std::size_t batch, std::size_t channels,
                        std::size_t oh, std::size_t ow);

    /// Fake-quantize node: quantize-dequantize forward, straight-through
    /// backward to x plus the learnable-scale gradient rule. Declared here,
    /// defined with the quantizer.
    Tensor fake_quantize(const Tensor& x, QuantSpec& spec);

    /// Reverse sweep from a scalar loss: seeds d(loss)/d(loss) = 1 and
    /// applies every node's rule exactly once in reverse insertion order,
    /// accumulating into .grad of tensors that require gradients.
    void backward(const Tensor& loss);

    std::size_t node_count() const { return nodes_.size(); }
    const std::vector<GraphNode>& nodes() const { return nodes_; }

private:
    std::vector<GraphNode> nodes_;

    Tensor record(OpKind kind, const std::vector<Tensor>& inputs, Tensor out,
                  std::function<void()> backward);
};

}  // namespace quarc
