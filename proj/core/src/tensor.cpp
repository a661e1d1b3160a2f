// SPDX-License-Identifier: Apache-2.0
#include "quarc/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>

namespace quarc {

std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

namespace {
std::atomic<std::uint64_t> g_next_tensor_id{1};

void validate_shape(const Shape& shape) {
    for (std::size_t d : shape) {
        if (d == 0) throw ShapeError("tensor shape has a zero extent: " + shape_str(shape));
    }
}
}  // namespace

Tensor Tensor::alloc(Shape shape) {
    validate_shape(shape);
    auto d = std::make_shared<detail::TensorData>();
    d->value.resize(numel(shape));
    d->shape = std::move(shape);
    d->id = g_next_tensor_id.fetch_add(1);
    return Tensor(std::move(d));
}

Tensor Tensor::zeros(Shape shape) { return alloc(std::move(shape)); }

Tensor Tensor::full(Shape shape, real v) {
    Tensor t = alloc(std::move(shape));
    for (real& x : t.d_->value) x = v;
    t.check_finite("full");
    return t;
}

Tensor Tensor::from(Shape shape, std::vector<real> values) {
    validate_shape(shape);
    if (numel(shape) != values.size()) {
        throw ShapeError("tensor data length " + std::to_string(values.size()) +
                         " does not match shape " + shape_str(shape));
    }
    auto d = std::make_shared<detail::TensorData>();
    d->shape = std::move(shape);
    d->value = std::move(values);
    d->id = g_next_tensor_id.fetch_add(1);
    Tensor t(std::move(d));
    t.check_finite("from");
    return t;
}

Tensor Tensor::scalar(real v) { return from({1}, {v}); }

const Shape& Tensor::shape() const { return d_->shape; }
std::size_t Tensor::size() const { return d_->value.size(); }
std::size_t Tensor::ndim() const { return d_->shape.size(); }
std::size_t Tensor::dim(std::size_t i) const {
    if (i >= d_->shape.size()) throw ShapeError("dim index out of range");
    return d_->shape[i];
}

std::span<const real> Tensor::values() const { return d_->value; }
std::span<real> Tensor::values() { return d_->value; }
real Tensor::at(std::size_t i) const { return d_->value.at(i); }

real Tensor::item() const {
    if (size() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
    return d_->value[0];
}

bool Tensor::requires_grad() const { return d_->requires_grad; }
Tensor& Tensor::set_requires_grad(bool flag) {
    d_->requires_grad = flag;
    return *this;
}

bool Tensor::has_grad() const { return !d_->grad.empty(); }

std::span<const real> Tensor::grad() const {
    if (d_->grad.empty()) throw ContractError("grad() on tensor without gradient buffer");
    return d_->grad;
}

std::span<real> Tensor::grad_data() {
    if (d_->grad.empty()) d_->grad.assign(d_->value.size(), real(0));
    return d_->grad;
}

void Tensor::zero_grad() { d_->grad.assign(d_->value.size(), real(0)); }

void Tensor::accumulate_grad(std::size_t i, real v) {
    if (d_->grad.empty()) d_->grad.assign(d_->value.size(), real(0));
    d_->grad[i] += v;
}

Tensor Tensor::clone() const {
    auto d = std::make_shared<detail::TensorData>();
    d->shape = d_->shape;
    d->value = d_->value;
    d->requires_grad = d_->requires_grad;
    d->id = g_next_tensor_id.fetch_add(1);
    return Tensor(std::move(d));
}

Tensor Tensor::detached() const {
    Tensor t = clone();
    t.d_->requires_grad = false;
    return t;
}

std::uint64_t Tensor::id() const { return d_->id; }

void Tensor::check_finite(const char* what) const {
    for (real v : d_->value) {
        if (!std::isfinite(v)) {
            throw NumericError(std::string("non-finite value produced by ") + what);
        }
    }
}

}  // namespace quarc
