// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <span>

#include "quarc/common.hpp"

namespace quarc {

namespace detail {
struct TensorData {
    Shape shape;
    std::vector<real> value;
    std::vector<real> grad;  // empty until first touched
    bool requires_grad = false;
    std::uint64_t id = 0;
};
}  // namespace detail

/// Dense n-dimensional array of `real` with an optional gradient buffer.
///
/// A Tensor is a shared handle: copies alias the same storage. Invariants
/// maintained by every factory and every Graph operation:
///   - numel(shape) == value.size()
///   - grad, when allocated, has the same length as value
///   - stored values are finite, or the producing operation throws
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, real v);
    static Tensor from(Shape shape, std::vector<real> values);
    static Tensor scalar(real v);

    bool defined() const { return static_cast<bool>(d_); }
    const Shape& shape() const;
    std::size_t size() const;
    std::size_t ndim() const;
    std::size_t dim(std::size_t i) const;

    std::span<const real> values() const;
    std::span<real> values();
    real at(std::size_t i) const;
    /// Value of a one-element tensor.
    real item() const;

    bool requires_grad() const;
    Tensor& set_requires_grad(bool flag);

    bool has_grad() const;
    std::span<const real> grad() const;
    /// Mutable gradient buffer, allocated and zero-filled on first use.
    std::span<real> grad_data();
    void zero_grad();
    void accumulate_grad(std::size_t i, real v);

    /// Deep copy of the values (fresh storage, no grad, flag preserved).
    Tensor clone() const;
    /// Deep copy with requires_grad cleared; used to cut teacher outputs
    /// out of the student's backward pass.
    Tensor detached() const;

    /// Stable identity of the underlying storage, for graph introspection.
    std::uint64_t id() const;

    /// Throws NumericError naming `what` if any stored value is NaN/Inf.
    void check_finite(const char* what) const;

private:
    std::shared_ptr<detail::TensorData> d_;
    explicit Tensor(std::shared_ptr<detail::TensorData> d) : d_(std::move(d)) {}
    static Tensor alloc(Shape shape);
    friend class Graph;
};

}  // namespace quarc
