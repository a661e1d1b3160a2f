// SPDX-License-Identifier: Apache-2.0
#include "quarc/graph.hpp"

#include <algorithm>
#include <cmath>

namespace quarc {

namespace {

enum class Pairing { Equal, LhsScalar, RhsScalar };

Pairing pairing_of(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() == b.shape()) return Pairing::Equal;
    if (a.size() == 1) return Pairing::LhsScalar;
    if (b.size() == 1) return Pairing::RhsScalar;
    throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()) + " are neither equal nor scalar-vs-tensor");
}

}  // namespace

Tensor Graph::record(OpKind kind, const std::vector<Tensor>& inputs, Tensor out,
                     std::function<void()> backward) {
    bool needs = false;
    for (const Tensor& in : inputs) needs = needs || in.requires_grad();
    out.set_requires_grad(needs);

    GraphNode node;
    node.kind = kind;
    node.input_ids.reserve(inputs.size());
    for (const Tensor& in : inputs) node.input_ids.push_back(in.id());
    node.output_id = out.id();
    node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
    return out;
}

void Graph::backward(const Tensor& loss) {
    if (!loss.defined() || loss.size() != 1) {
        throw ContractError("backward() requires a scalar loss");
    }
    Tensor seed = loss;
    seed.grad_data()[0] += real(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        if (it->backward) it->backward();
    }
}

Tensor Graph::matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0)) {
        throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    }
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor out = Tensor::alloc({m, n});
    auto av = a.values();
    auto bv = b.values();
    auto ov = out.values();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += double(av[i * k + p]) * double(bv[p * n + j]);
            ov[i * n + j] = real(acc);
        }
    }
    out.check_finite("matmul");

    Tensor ac = a, bc = b, oc = out;
    return record(OpKind::MatMul, {a, b}, out, [ac, bc, oc, m, k, n]() mutable {
        if (!oc.has_grad()) return;
        auto go = oc.grad();
        if (ac.requires_grad()) {
            auto bv2 = bc.values();
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < n; ++j)
                        acc += double(go[i * n + j]) * double(bv2[p * n + j]);
                    ac.accumulate_grad(i * k + p, real(acc));
                }
            }
        }
        if (bc.requires_grad()) {
            auto av2 = ac.values();
            for (std::size_t p = 0; p < k; ++p) {
                for (std::size_t j = 0; j < n; ++j) {
                    double acc = 0.0;
                    for (std::size_t i = 0; i < m; ++i)
                        acc += double(av2[i * k + p]) * double(go[i * n + j]);
                    bc.accumulate_grad(p * n + j, real(acc));
                }
            }
        }
    });
}

Tensor Graph::add(const Tensor& a, const Tensor& b) {
    Pairing p = pairing_of(a, b, "add");
    const Tensor& big = (p == Pairing::LhsScalar) ? b : a;
    Tensor out = Tensor::alloc(big.shape());
    auto av = a.values(), bv = b.values();
    auto ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) {
        real x = (p == Pairing::LhsScalar) ? av[0] : av[i];
        real y = (p == Pairing::RhsScalar) ? bv[0] : bv[i];
        ov[i] = x + y;
    }
    out.check_finite("add");

    Tensor ac = a, bc = b, oc = out;
    return record(OpKind::Add, {a, b}, out, [ac, bc, oc, p]() mutable {
        if (!oc.has_grad()) return;
        auto go = oc.grad();
        if (ac.requires_grad()) {
            if (p == Pairing::LhsScalar) {
                double acc = 0.0;
                for (real g : go) acc += double(g);
                ac.accumulate_grad(0, real(acc));
            } else {
                for (std::size_t i = 0; i < go.size(); ++i) ac.accumulate_grad(i, go[i]);
            }
        }
        if (bc.requires_grad()) {
            if (p == Pairing::RhsScalar) {
                double acc = 0.0;
                for (real g : go) acc += double(g);
                bc.accumulate_grad(0, real(acc));
            } else {
                for (std::size_t i = 0; i < go.size(); ++i) bc.accumulate_grad(i, go[i]);
            }
        }
    });
}

Tensor Graph::sub(const Tensor& a, const Tensor& b) {
    Pairing p = pairing_of(a, b, "sub");
    const Tensor& big = (p == Pairing::LhsScalar) ? b : a;
    Tensor out = Tensor::alloc(big.shape());
    auto av = a.values(), bv = b.values();
    auto ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) {
        real x = (p == Pairing::LhsScalar) ? av[0] : av[i];
        real y = (p == Pairing::RhsScalar) ? bv[0] : bv[i];
        ov[i] = x - y;
    }
    out.check_finite("sub");

    Tensor ac = a, bc = b, oc = out;
    return record(OpKind::Sub, {a, b}, out, [ac, bc, oc, p]() mutable {
        if (!oc.has_grad()) return;
        auto go = oc.grad();
        if (ac.requires_grad()) {
            if (p == Pairing::LhsScalar) {
                double acc = 0.0;
                for (real g : go) acc += double(g);
                ac.accumulate_grad(0, real(acc));
            } else {
                for (std::size_t i = 0; i < go.size(); ++i) ac.accumulate_grad(i, go[i]);
            }
        }
        if (bc.requires_grad()) {
            if (p == Pairing::RhsScalar) {
                double acc = 0.0;
                for (real g : go) acc += double(g);
                bc.accumulate_grad(0, real(-acc));
            } else {
                for (std::size_t i = 0; i < go.size(); ++i) bc.accumulate_grad(i, -go[i]);
            }
        }
    });
}

Tensor Graph::mul(const Tensor& a, const Tensor& b) {
    Pairing p = pairing_of(a, b, "mul");
    const Tensor& big = (p == Pairing::LhsScalar) ? b : a;
    Tensor out = Tensor::alloc(big.shape());
    auto av = a.values(), bv = b.values();
    auto ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) {
        real x = (p == Pairing::LhsScalar) ? av[0] : av[i];
        real y = (p == Pairing::RhsScalar) ? bv[0] : bv[i];
        ov[i] = x * y;
    }
    out.check_finite("mul");

    Tensor ac = a, bc = b, oc = out;
    return record(OpKind::Mul, {a, b}, out, [ac, bc, oc, p]() mutable {
        if (!oc.has_grad()) return;
        auto go = oc.grad();
        auto av2 = ac.values(), bv2 = bc.values();
        if (ac.requires_grad()) {
            if (p == Pairing::LhsScalar) {
                double acc = 0.0;
                for (std::size_t i = 0; i < go.size(); ++i) acc += double(go[i]) * double(bv2[i]);
                ac.accumulate_grad(0, real(acc));
            } else {
                for (std::size_t i = 0; i < go.size(); ++i) {
                    real y = (p == Pairing::RhsScalar) ? bv2[0] : bv2[i];
                    ac.accumulate_grad(i, go[i] * y);
                }
            }
        }
        if (bc.requires_grad()) {
            if (p == Pairing::RhsScalar) {
                double acc = 0.0;
                for (std::size_t i = 0; i < go.size(); ++i) acc += double(go[i]) * double(av2[i]);
                bc.accumulate_grad(0, real(acc));
            } else {
                for (std::size_t i = 0; i < go.size(); ++i) {
                    real x = (p == Pairing::LhsScalar) ? av2[0] : av2[i];
                    bc.accumulate_grad(i, go[i] * x);
                }
            }
        }
    });
}

Tensor Graph::div(const Tensor& a, const Tensor& b) {
    Pairing p = pairing_of(a, b, "div");
    for (real v : b.values()) {
        if (v == real(0)) throw NumericError("div: division by zero");
    }
    const Tensor& big = (p == Pairing::LhsScalar) ? b : a;
    Tensor out = Tensor::alloc(big.shape());
    auto av = a.values(), bv = b.values();
    auto ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) {
        real x = (p == Pairing::LhsScalar) ? av[0] : av[i];
        real y = (p == Pairing::RhsScalar) ? bv[0] : bv[i];
        ov[i] = x / y;
    }
    out.check_finite("div");

    Tensor ac = a, bc = b, oc = out;
    return record(OpKind::Div, {a, b}, out, [ac, bc, oc, p]() mutable {
        if (!oc.has_grad()) return;
        auto go = oc.grad();
        auto av2 = ac.values(), bv2 = bc.values();
        if (ac.requires_grad()) {
            if (p == Pairing::LhsScalar) {
                double acc = 0.0;
                for (std::size_t i = 0; i < go.size(); ++i) acc += double(go[i]) / double(bv2[i]);
                ac.accumulate_grad(0, real(acc));
            } else {
                for (std::size_t i = 0; i < go.size(); ++i) {
                    real y = (p == Pairing::RhsScalar) ? bv2[0] : bv2[i];
                    ac.accumulate_grad(i, go[i] / y);
                }
            }
        }
        if (bc.requires_grad()) {
            if (p == Pairing::RhsScalar) {
                double acc = 0.0;
                for (std::size_t i = 0; i < go.size(); ++i) {
                    double y = double(bv2[0]);
                    acc += -double(go[i]) * double(av2[i]) / (y * y);
                }
                bc.accumulate_grad(0, real(acc));
            } else {
                for (std::size_t i = 0; i < go.size(); ++i) {
                    real x = (p == Pairing::LhsScalar) ? av2[0] : av2[i];
                    real y = bv2[i];
                    bc.accumulate_grad(i, -go[i] * x / (y * y));
                }
            }
        }
    });
}

Tensor Graph::add_scalar(const Tensor& a, real c) {
    Tensor out = Tensor::alloc(a.shape());
    auto av = a.values();
    auto ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + c;
    out.check_finite("add_scalar");

    Tensor ac = a, oc = out;
    return record(OpKind::AddScalar, {a}, out, [ac, oc]() mutable {
        if (!oc.has_grad() || !ac.requires_grad()) return;
        auto go = oc.grad();
        for (std::size_t i = 0; i < go.size(); ++i) ac.accumulate_grad(i, go[i]);
    });
}

Tensor Graph::mul_scalar(const Tensor& a, real c) {
    Tensor out = Tensor::alloc(a.shape());
    auto av = a.values();
    auto ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * c;
    out.check_finite("mul_scalar");

    Tensor ac = a, oc = out;
    return record(OpKind::MulScalar, {a}, out, [ac, oc, c]() mutable {
        if (!oc.has_grad() || !ac.requires_grad()) return;
        auto go = oc.grad();
        for (std::size_t i = 0; i < go.size(); ++i) ac.accumulate_grad(i, go[i] * c);
    });
}

Tensor Graph::relu(const Tensor& a) {
    Tensor out = Tensor::alloc(a.shape());
    auto av = a.values();
    auto ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] > real(0) ? av[i] : real(0);

    Tensor ac = a, oc = out;
    return record(OpKind::Relu, {a}, out, [ac, oc]() mutable {
        if (!oc.has_grad() || !ac.requires_grad()) return;
        auto go = oc.grad();
        auto av2 = ac.values();
        for (std::size_t i = 0; i < go.size(); ++i) {
            if (av2[i] > real(0)) ac.accumulate_grad(i, go[i]);
        }
    });
}

Tensor Graph::exp(const Tensor& a) {
    Tensor out = Tensor::alloc(a.shape());
    auto av = a.values();
    auto ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = std::exp(av[i]);
    out.check_finite("exp");

    Tensor ac = a, oc = out;
    return record(OpKind::Exp, {a}, out, [ac, oc]() mutable {
        if (!oc.has_grad() || !ac.requires_grad()) return;
        auto go = oc.grad();
        auto ov2 = oc.values();
        for (std::size_t i = 0; i < go.size(); ++i) ac.accumulate_grad(i, go[i] * ov2[i]);
    });
}

Tensor Graph::log(const Tensor& a) {
    for (real v : a.values()) {
        if (v <= real(0)) throw NumericError("log: non-positive input");
    }
    Tensor out = Tensor::alloc(a.shape());
    auto av = a.values();
    auto ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = std::log(av[i]);
    out.check_finite("log");

    Tensor ac = a, oc = out;
    return record(OpKind::Log, {a}, out, [ac, oc]() mutable {
        if (!oc.has_grad() || !ac.requires_grad()) return;
        auto go = oc.grad();
        auto av2 = ac.values();
        for (std::size_t i = 0; i < go.size(); ++i) ac.accumulate_grad(i, go[i] / av2[i]);
    });
}

Tensor Graph::log_eps(const Tensor& a, real eps) {
    for (real v : a.values()) {
        if (v + eps <= real(0)) throw NumericError("log_eps: non-positive input after clamp");
    }
    Tensor out = Tensor::alloc(a.shape());
    auto av = a.values();
    auto ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = std::log(av[i] + eps);
    out.check_finite("log_eps");

    Tensor ac = a, oc = out;
    return record(OpKind::LogEps, {a}, out, [ac, oc, eps]() mutable {
        if (!oc.has_grad() || !ac.requires_grad()) return;
        auto go = oc.grad();
        auto av2 = ac.values();
        for (std::size_t i = 0; i < go.size(); ++i) ac.accumulate_grad(i, go[i] / (av2[i] + eps));
    });
}

Tensor Graph::softmax(const Tensor& a) {
    if (a.ndim() < 1) throw ShapeError("softmax: needs at least one dimension");
    const std::size_t m = a.shape().back();
    const std::size_t rows = a.size() / m;
    Tensor out = Tensor::alloc(a.shape());
    auto av = a.values();
    auto ov = out.values();
    for (std::size_t r = 0; r < rows; ++r) {
        const real* x = &av[r * m];
        real* y = &ov[r * m];
        real mx = x[0];
        for (std::size_t i = 1; i < m; ++i) mx = std::max(mx, x[i]);
        double denom = 0.0;
        for (std::size_t i = 0; i < m; ++i) denom += std::exp(double(x[i]) - double(mx));
        for (std::size_t i = 0; i < m; ++i)
            y[i] = real(std::exp(double(x[i]) - double(mx)) / denom);
    }
    out.check_finite("softmax");

    Tensor ac = a, oc = out;
    return record(OpKind::Softmax, {a}, out, [ac, oc, m, rows]() mutable {
        if (!oc.has_grad() || !ac.requires_grad()) return;
        auto go = oc.grad();
        auto ov2 = oc.values();
        for (std::size_t r = 0; r < rows; ++r) {
            const real* y = &ov2[r * m];
            const real* gy = &go[r * m];
            double dot = 0.0;
            for (std::size_t i = 0; i < m; ++i) dot += double(gy[i]) * double(y[i]);
            for (std::size_t i = 0; i < m; ++i)
                ac.accumulate_grad(r * m + i, real(double(y[i]) * (double(gy[i]) - dot)));
        }
    });
}

Tensor Graph::sum(const Tensor& a) {
    double acc = 0.0;
    for (real v : a.values()) acc += double(v);
    Tensor out = Tensor::from({1}, {real(acc)});

    Tensor ac = a, oc = out;
    return record(OpKind::Sum, {a}, out, [ac, oc]() mutable {
        if (!oc.has_grad() || !ac.requires_grad()) return;
        real g = oc.grad()[0];
        for (std::size_t i = 0; i < ac.size(); ++i) ac.accumulate_grad(i, g);
    });
}

Tensor Graph::mean(const Tensor& a) {
    double acc = 0.0;
    for (real v : a.values()) acc += double(v);
    const real n = real(a.size());
    Tensor out = Tensor::from({1}, {real(acc) / n});

    Tensor ac = a, oc = out;
    return record(OpKind::Mean, {a}, out, [ac, oc, n]() mutable {
        if (!oc.has_grad() || !ac.requires_grad()) return;
        real g = oc.grad()[0] / n;
        for (std::size_t i = 0; i < ac.size(); ++i) ac.accumulate_grad(i, g);
    });
}

Tensor Graph::add_bias(const Tensor& x, const Tensor& bias) {
    if (x.ndim() != 2 || bias.ndim() != 1 || x.dim(1) != bias.dim(0)) {
        throw ShapeError("add_bias: shapes " + shape_str(x.shape()) + " and " +
                         shape_str(bias.shape()));
    }
    const std::size_t b = x.dim(0), n = x.dim(1);
    Tensor out = Tensor::alloc(x.shape());
    auto xv = x.values(), bv = bias.values();
    auto ov = out.values();
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < n; ++j) ov[i * n + j] = xv[i * n + j] + bv[j];
    out.check_finite("add_bias");

    Tensor xc = x, bc = bias, oc = out;
    return record(OpKind::AddBias, {x, bias}, out, [xc, bc, oc, b, n]() mutable {
        if (!oc.has_grad()) return;
        auto go = oc.grad();
        if (xc.requires_grad()) {
            for (std::size_t i = 0; i < go.size(); ++i) xc.accumulate_grad(i, go[i]);
        }
        if (bc.requires_grad()) {
            for (std::size_t j = 0; j < n; ++j) {
                double acc = 0.0;
                for (std::size_t i = 0; i < b; ++i) acc += double(go[i * n + j]);
                bc.accumulate_grad(j, real(acc));
            }
        }
    });
}

Tensor Graph::gather_rows(const Tensor& x, const std::vector<int>& cols) {
    if (x.ndim() != 2) throw ShapeError("gather_rows: input must be 2-D");
    const std::size_t b = x.dim(0), m = x.dim(1);
    if (cols.size() != b) throw ShapeError("gather_rows: one column index per row required");
    for (int c : cols) {
        if (c < 0 || std::size_t(c) >= m)
            throw ContractError("gather_rows: column index " + std::to_string(c) +
                                " out of range [0," + std::to_string(m) + ")");
    }
    Tensor out = Tensor::alloc({b});
    auto xv = x.values();
    auto ov = out.values();
    for (std::size_t i = 0; i < b; ++i) ov[i] = xv[i * m + std::size_t(cols[i])];

    Tensor xc = x, oc = out;
    return record(OpKind::GatherRows, {x}, out, [xc, oc, cols, m]() mutable {
        if (!oc.has_grad() || !xc.requires_grad()) return;
        auto go = oc.grad();
        for (std::size_t i = 0; i < go.size(); ++i)
            xc.accumulate_grad(i * m + std::size_t(cols[i]), go[i]);
    });
}

Tensor Graph::reshape(const Tensor& a, Shape shape) {
    if (numel(shape) != a.size()) {
        throw ShapeError("reshape: " + shape_str(a.shape()) + " to " + shape_str(shape) +
                         " changes element count");
    }
    Tensor out = Tensor::alloc(std::move(shape));
    auto av = a.values();
    auto ov = out.values();
    std::copy(av.begin(), av.end(), ov.begin());

    Tensor ac = a, oc = out;
    return record(OpKind::Reshape, {a}, out, [ac, oc]() mutable {
        if (!oc.has_grad() || !ac.requires_grad()) return;
        auto go = oc.grad();
        for (std::size_t i = 0; i < go.size(); ++i) ac.accumulate_grad(i, go[i]);
    });
}

Tensor Graph::im2col(const Tensor& x, std::size_t k, std::size_t stride, std::size_t pad) {
    if (x.ndim() != 4) throw ShapeError("im2col: input must be [B x C x H x W]");
    if (stride == 0) throw ShapeError("im2col: stride must be positive");
    const std::size_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (h + 2 * pad < k || w + 2 * pad < k)
        throw ShapeError("im2col: kernel larger than padded input");
    const std::size_t oh = (h + 2 * pad - k) / stride + 1;
    const std::size_t ow = (w + 2 * pad - k) / stride + 1;
    const std::size_t cols = c * k * k;

    Tensor out = Tensor::alloc({b * oh * ow, cols});
    auto xv = x.values();
    auto ov = out.values();
    for (std::size_t bi = 0; bi < b; ++bi) {
        for (std::size_t i = 0; i < oh; ++i) {
            for (std::size_t j = 0; j < ow; ++j) {
                const std::size_t row = (bi * oh + i) * ow + j;
                for (std::size_t ci = 0; ci < c; ++ci) {
                    for (std::size_t ki = 0; ki < k; ++ki) {
                        for (std::size_t kj = 0; kj < k; ++kj) {
                            const std::ptrdiff_t hi = std::ptrdiff_t(i * stride + ki) - std::ptrdiff_t(pad);
                            const std::ptrdiff_t wi = std::ptrdiff_t(j * stride + kj) - std::ptrdiff_t(pad);
                            real v = real(0);
                            if (hi >= 0 && hi < std::ptrdiff_t(h) && wi >= 0 && wi < std::ptrdiff_t(w)) {
                                v = xv[((bi * c + ci) * h + std::size_t(hi)) * w + std::size_t(wi)];
                            }
                            ov[row * cols + (ci * k + ki) * k + kj] = v;
                        }
                    }
                }
            }
        }
    }

    Tensor xc = x, oc = out;
    return record(OpKind::Im2Col, {x}, out,
                  [xc, oc, b, c, h, w, oh, ow, k, stride, pad, cols]() mutable {
                      if (!oc.has_grad() || !xc.requires_grad()) return;
                      auto go = oc.grad();
                      for (std::size_t bi = 0; bi < b; ++bi) {
                          for (std::size_t i = 0; i < oh; ++i) {
                              for (std::size_t j = 0; j < ow; ++j) {
                                  const std::size_t row = (bi * oh + i) * ow + j;
                                  for (std::size_t ci = 0; ci < c; ++ci) {
                                      for (std::size_t ki = 0; ki < k; ++ki) {
                                          for (std::size_t kj = 0; kj < k; ++kj) {
                                              const std::ptrdiff_t hi =
                                                  std::ptrdiff_t(i * stride + ki) - std::ptrdiff_t(pad);
                                              const std::ptrdiff_t wi =
                                                  std::ptrdiff_t(j * stride + kj) - std::ptrdiff_t(pad);
                                              if (hi < 0 || hi >= std::ptrdiff_t(h) || wi < 0 ||
                                                  wi >= std::ptrdiff_t(w))
                                                  continue;
                                              xc.accumulate_grad(
                                                  ((bi * c + ci) * h + std::size_t(hi)) * w + std::size_t(wi),
                                                  go[row * cols + (ci * k + ki) * k + kj]);
                                          }
                                      }
                                  }
                              }
                          }
                      }
                  });
}

Tensor Graph::rows_to_nchw(const Tensor& rows, std::size_t batch, std::size_t channels,
                           std::size_t oh, std::size_t ow) {
    if (rows.ndim() != 2 || rows.dim(0) != batch * oh * ow || rows.dim(1) != channels) {
        throw ShapeError("rows_to_nchw: rows shape " + shape_str(rows.shape()) +
                         " does not match requested layout");
    }
    Tensor out = Tensor::alloc({batch, channels, oh, ow});
    auto rv = rows.values();
    auto ov = out.values();
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t c = 0; c < channels; ++c)
            for (std::size_t i = 0; i < oh; ++i)
                for (std::size_t j = 0; j < ow; ++j)
                    ov[((b * channels + c) * oh + i) * ow + j] =
                        rv[((b * oh + i) * ow + j) * channels + c];

    Tensor rc = rows, oc = out;
    return record(OpKind::RowsToNchw, {rows}, out, [rc, oc, batch, channels, oh, ow]() mutable {
        if (!oc.has_grad() || !rc.requires_grad()) return;
        auto go = oc.grad();
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t c = 0; c < channels; ++c)
                for (std::size_t i = 0; i < oh; ++i)
                    for (std::size_t j = 0; j < ow; ++j)
                        rc.accumulate_grad(((b * oh + i) * ow + j) * channels + c,
                                           go[((b * channels + c) * oh + i) * ow + j]);
    });
}

}  // namespace quarc
