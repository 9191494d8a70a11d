#include "peca/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "peca/error.hpp"

namespace peca {
namespace {

std::vector<std::size_t> strides_of(const Shape& shape) {
    std::vector<std::size_t> st(shape.size(), 1);
    for (std::size_t i = shape.size(); i-- > 1;) st[i - 1] = st[i] * shape[i];
    return st;
}

// For every flat index of `out`, the flat index of the broadcast source `in`.
std::vector<std::size_t> broadcast_map(const Shape& in, const Shape& out) {
    const std::size_t n = shape_numel(out);
    const std::size_t offset = out.size() - in.size();
    const auto in_st = strides_of(in);
    const auto out_st = strides_of(out);
    std::vector<std::size_t> map(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t rem = i, src = 0;
        for (std::size_t ax = 0; ax < out.size(); ++ax) {
            const std::size_t coord = rem / out_st[ax];
            rem %= out_st[ax];
            if (ax >= offset && in[ax - offset] != 1) src += coord * in_st[ax - offset];
        }
        map[i] = src;
    }
    return map;
}

struct ReducePlan {
    Shape out_shape;
    std::vector<std::size_t> map;  // input flat index -> output flat index
    std::size_t count = 1;         // elements folded into each output
};

ReducePlan plan_reduce(const Shape& in, std::vector<std::size_t> axes, bool keepdim) {
    if (axes.empty()) {
        axes.resize(in.size());
        std::iota(axes.begin(), axes.end(), 0);
    }
    std::vector<bool> reduced(in.size(), false);
    for (auto ax : axes) {
        if (ax >= in.size()) throw ShapeError("reduction axis " + std::to_string(ax) + " out of range for " + shape_str(in));
        reduced[ax] = true;
    }
    ReducePlan plan;
    Shape kept;  // keepdim layout
    for (std::size_t ax = 0; ax < in.size(); ++ax) {
        kept.push_back(reduced[ax] ? 1 : in[ax]);
        if (reduced[ax]) plan.count *= in[ax];
        else plan.out_shape.push_back(in[ax]);
    }
    if (keepdim) plan.out_shape = kept;
    const auto in_st = strides_of(in);
    const auto kept_st = strides_of(kept);
    const std::size_t n = shape_numel(in);
    plan.map.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t rem = i, dst = 0;
        for (std::size_t ax = 0; ax < in.size(); ++ax) {
            const std::size_t coord = rem / in_st[ax];
            rem %= in_st[ax];
            if (!reduced[ax]) dst += coord * kept_st[ax];
        }
        plan.map[i] = dst;
    }
    return plan;
}

template <class Forward, class Backward>
Var elementwise_binary(OpKind kind, Var a, Var b, Forward fwd, Backward bwd) {
    const Shape out = broadcast_shape(a.shape(), b.shape());
    auto ma = broadcast_map(a.shape(), out);
    auto mb = broadcast_map(b.shape(), out);
    const auto& av = a.value().values();
    const auto& bv = b.value().values();
    std::vector<double> y(ma.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = fwd(av[ma[i]], bv[mb[i]]);
    Graph* g = &a.graph();
    const NodeId ia = a.id(), ib = b.id();
    const Var ins[] = {a, b};
    return g->record(kind, ins, out, std::move(y),
                     [g, ia, ib, ma = std::move(ma), mb = std::move(mb), bwd](std::span<const double> gout,
                                                                               GradSink& sink) {
                         const auto& av = g->value(ia).values();
                         const auto& bv = g->value(ib).values();
                         auto ga = sink.slot(0);
                         auto gb = sink.slot(1);
                         for (std::size_t i = 0; i < gout.size(); ++i) {
                             const auto [da, db] = bwd(av[ma[i]], bv[mb[i]]);
                             if (!ga.empty()) ga[ma[i]] += gout[i] * da;
                             if (!gb.empty()) gb[mb[i]] += gout[i] * db;
                         }
                     });
}

template <class Forward, class Derivative>
Var elementwise_unary(OpKind kind, Var x, Forward fwd, Derivative deriv) {
    const auto& xv = x.value().values();
    std::vector<double> y(xv.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = fwd(xv[i]);
    Graph* g = &x.graph();
    const NodeId ix = x.id();
    const NodeId iy = g->size();
    const Var ins[] = {x};
    return g->record(kind, ins, x.shape(), std::move(y), [g, ix, iy, deriv](std::span<const double> gout, GradSink& sink) {
        const auto& xv = g->value(ix).values();
        const auto& yv = g->value(iy).values();
        auto gx = sink.slot(0);
        for (std::size_t i = 0; i < gout.size(); ++i) gx[i] += gout[i] * deriv(xv[i], yv[i]);
    });
}

}  // namespace

Shape broadcast_shape(const Shape& a, const Shape& b) {
    const std::size_t rank = std::max(a.size(), b.size());
    Shape out(rank);
    for (std::size_t i = 0; i < rank; ++i) {
        const std::size_t ea = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
        const std::size_t eb = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
        if (ea != eb && ea != 1 && eb != 1)
            throw ShapeError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
        out[i] = std::max(ea, eb);
    }
    return out;
}

Var add(Var a, Var b) {
    return elementwise_binary(
        OpKind::add, a, b, [](double x, double y) { return x + y; },
        [](double, double) { return std::pair{1.0, 1.0}; });
}

Var sub(Var a, Var b) {
    return elementwise_binary(
        OpKind::sub, a, b, [](double x, double y) { return x - y; },
        [](double, double) { return std::pair{1.0, -1.0}; });
}

Var mul(Var a, Var b) {
    return elementwise_binary(
        OpKind::mul, a, b, [](double x, double y) { return x * y; },
        [](double x, double y) { return std::pair{y, x}; });
}

Var div(Var a, Var b) {
    return elementwise_binary(
        OpKind::div, a, b, [](double x, double y) { return x / y; },
        [](double x, double y) { return std::pair{1.0 / y, -x / (y * y)}; });
}

Var matmul(Var a, Var b) {
    if (a.value().rank() != 2 || b.value().rank() != 2 || a.shape()[1] != b.shape()[0])
        throw ShapeError("matmul of " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
    const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    const auto& av = a.value().values();
    const auto& bv = b.value().values();
    std::vector<double> y(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = av[i * k + p];
            for (std::size_t j = 0; j < n; ++j) y[i * n + j] += aip * bv[p * n + j];
        }
    Graph* g = &a.graph();
    const NodeId ia = a.id(), ib = b.id();
    const Var ins[] = {a, b};
    return g->record(OpKind::matmul, ins, {m, n}, std::move(y), [g, ia, ib, m, k, n](std::span<const double> gout, GradSink& sink) {
        const auto& av = g->value(ia).values();
        const auto& bv = g->value(ib).values();
        auto ga = sink.slot(0);
        auto gb = sink.slot(1);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
                double acc = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    const double go = gout[i * n + j];
                    acc += go * bv[p * n + j];
                    if (!gb.empty()) gb[p * n + j] += av[i * k + p] * go;
                }
                if (!ga.empty()) ga[i * k + p] += acc;
            }
    });
}

Var conv2d(Var x, Var weight, Var bias, std::size_t stride, std::size_t padding) {
    const Shape& xs = x.shape();
    const Shape& ws = weight.shape();
    if (xs.size() != 4 || ws.size() != 4 || ws[2] != ws[3] || xs[1] != ws[1])
        throw ShapeError("conv2d of input " + shape_str(xs) + " with kernel " + shape_str(ws));
    if (bias.shape() != Shape{ws[0]}) throw ShapeError("conv2d bias shape " + shape_str(bias.shape()));
    if (stride == 0) throw ShapeError("conv2d stride must be positive");
    const std::size_t B = xs[0], Ci = xs[1], H = xs[2], W = xs[3];
    const std::size_t Co = ws[0], K = ws[2];
    if (H + 2 * padding < K || W + 2 * padding < K) throw ShapeError("conv2d kernel larger than padded input");
    const std::size_t Ho = (H + 2 * padding - K) / stride + 1;
    const std::size_t Wo = (W + 2 * padding - K) / stride + 1;

    const auto& xv = x.value().values();
    const auto& wv = weight.value().values();
    const auto& bv = bias.value().values();
    std::vector<double> y(B * Co * Ho * Wo);
    // Iterates (b, co, oh, ow) with the valid kernel window clipped to the input.
    auto for_each_tap = [=](auto&& fn) {
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t co = 0; co < Co; ++co)
                for (std::size_t oh = 0; oh < Ho; ++oh)
                    for (std::size_t ow = 0; ow < Wo; ++ow) {
                        const std::size_t out_idx = ((b * Co + co) * Ho + oh) * Wo + ow;
                        for (std::size_t ci = 0; ci < Ci; ++ci)
                            for (std::size_t kh = 0; kh < K; ++kh) {
                                const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * stride + kh) -
                                                          static_cast<std::ptrdiff_t>(padding);
                                if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
                                for (std::size_t kw = 0; kw < K; ++kw) {
                                    const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * stride + kw) -
                                                              static_cast<std::ptrdiff_t>(padding);
                                    if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W)) continue;
                                    const std::size_t in_idx = ((b * Ci + ci) * H + ih) * W + iw;
                                    const std::size_t w_idx = ((co * Ci + ci) * K + kh) * K + kw;
                                    fn(out_idx, in_idx, w_idx);
                                }
                            }
                    }
    };
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t co = 0; co < Co; ++co)
            std::fill_n(y.begin() + (b * Co + co) * Ho * Wo, Ho * Wo, bv[co]);
    for_each_tap([&](std::size_t o, std::size_t i, std::size_t w) { y[o] += xv[i] * wv[w]; });

    Graph* g = &x.graph();
    const NodeId ix = x.id(), iw = weight.id();
    const Var ins[] = {x, weight, bias};
    return g->record(OpKind::conv2d, ins, {B, Co, Ho, Wo}, std::move(y),
                     [g, ix, iw, for_each_tap, B, Co, HoWo = Ho * Wo](std::span<const double> gout, GradSink& sink) {
                         const auto& xv = g->value(ix).values();
                         const auto& wv = g->value(iw).values();
                         auto gx = sink.slot(0);
                         auto gw = sink.slot(1);
                         auto gb = sink.slot(2);
                         if (!gb.empty())
                             for (std::size_t b = 0; b < B; ++b)
                                 for (std::size_t co = 0; co < Co; ++co)
                                     for (std::size_t p = 0; p < HoWo; ++p) gb[co] += gout[(b * Co + co) * HoWo + p];
                         if (!gx.empty() && !gw.empty()) {
                             for_each_tap([&](std::size_t o, std::size_t i, std::size_t w) {
                                 gx[i] += gout[o] * wv[w];
                                 gw[w] += gout[o] * xv[i];
                             });
                         } else if (!gx.empty()) {
                             for_each_tap([&](std::size_t o, std::size_t i, std::size_t w) { gx[i] += gout[o] * wv[w]; });
                         } else if (!gw.empty()) {
                             for_each_tap([&](std::size_t o, std::size_t i, std::size_t w) { gw[w] += gout[o] * xv[i]; });
                         }
                     });
}

Var relu(Var x) {
    return elementwise_unary(
        OpKind::relu, x, [](double v) { return v > 0.0 ? v : 0.0; },
        [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var sqrt(Var x) {
    for (double v : x.value().values())
        if (v < 0.0) throw NumericsError("sqrt of negative value at node " + std::to_string(x.graph().size()));
    return elementwise_unary(
        OpKind::sqrt, x, [](double v) { return std::sqrt(v); },
        [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Var abs(Var x) {
    return elementwise_unary(
        OpKind::abs, x, [](double v) { return std::fabs(v); },
        [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Var scale(Var x, double factor) {
    return elementwise_unary(
        OpKind::scale, x, [factor](double v) { return v * factor; }, [factor](double, double) { return factor; });
}

Var add_scalar(Var x, double offset) { return add(x, x.graph().constant(Tensor::scalar(offset))); }

Var clamp_min(Var x, double floor) {
    return elementwise_unary(
        OpKind::clamp_min, x, [floor](double v) { return v > floor ? v : floor; },
        [floor](double v, double) { return v > floor ? 1.0 : 0.0; });
}

Var sum(Var x, std::vector<std::size_t> axes, bool keepdim) {
    auto plan = plan_reduce(x.shape(), std::move(axes), keepdim);
    const auto& xv = x.value().values();
    std::vector<double> y(shape_numel(plan.out_shape), 0.0);
    for (std::size_t i = 0; i < xv.size(); ++i) y[plan.map[i]] += xv[i];
    const Var ins[] = {x};
    return x.graph().record(OpKind::sum, ins, plan.out_shape, std::move(y),
                            [map = std::move(plan.map)](std::span<const double> gout, GradSink& sink) {
                                auto gx = sink.slot(0);
                                for (std::size_t i = 0; i < map.size(); ++i) gx[i] += gout[map[i]];
                            });
}

Var mean(Var x, std::vector<std::size_t> axes, bool keepdim) {
    auto plan = plan_reduce(x.shape(), std::move(axes), keepdim);
    const auto& xv = x.value().values();
    const double inv = 1.0 / static_cast<double>(plan.count);
    std::vector<double> y(shape_numel(plan.out_shape), 0.0);
    for (std::size_t i = 0; i < xv.size(); ++i) y[plan.map[i]] += xv[i];
    for (double& v : y) v *= inv;
    const Var ins[] = {x};
    return x.graph().record(OpKind::mean, ins, plan.out_shape, std::move(y),
                            [map = std::move(plan.map), inv](std::span<const double> gout, GradSink& sink) {
                                auto gx = sink.slot(0);
                                for (std::size_t i = 0; i < map.size(); ++i) gx[i] += gout[map[i]] * inv;
                            });
}

Var variance(Var x, std::vector<std::size_t> axes, bool keepdim) {
    auto plan = plan_reduce(x.shape(), std::move(axes), keepdim);
    const auto& xv = x.value().values();
    const std::size_t n_out = shape_numel(plan.out_shape);
    const double inv = 1.0 / static_cast<double>(plan.count);
    std::vector<double> mu(n_out, 0.0);
    for (std::size_t i = 0; i < xv.size(); ++i) mu[plan.map[i]] += xv[i];
    for (double& v : mu) v *= inv;
    std::vector<double> y(n_out, 0.0);
    for (std::size_t i = 0; i < xv.size(); ++i) {
        const double d = xv[i] - mu[plan.map[i]];
        y[plan.map[i]] += d * d;
    }
    for (double& v : y) v *= inv;
    Graph* g = &x.graph();
    const NodeId ix = x.id();
    const Var ins[] = {x};
    return g->record(OpKind::variance, ins, plan.out_shape, std::move(y),
                     [g, ix, map = std::move(plan.map), mu = std::move(mu), inv](std::span<const double> gout,
                                                                                 GradSink& sink) {
                         const auto& xv = g->value(ix).values();
                         auto gx = sink.slot(0);
                         for (std::size_t i = 0; i < map.size(); ++i)
                             gx[i] += gout[map[i]] * 2.0 * (xv[i] - mu[map[i]]) * inv;
                     });
}

Var broadcast_to(Var x, Shape shape) {
    if (broadcast_shape(x.shape(), shape) != shape)
        throw ShapeError("cannot broadcast " + shape_str(x.shape()) + " to " + shape_str(shape));
    auto map = broadcast_map(x.shape(), shape);
    const auto& xv = x.value().values();
    std::vector<double> y(map.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[map[i]];
    const Var ins[] = {x};
    return x.graph().record(OpKind::broadcast, ins, std::move(shape), std::move(y),
                            [map = std::move(map)](std::span<const double> gout, GradSink& sink) {
                                auto gx = sink.slot(0);
                                for (std::size_t i = 0; i < map.size(); ++i) gx[map[i]] += gout[i];
                            });
}

Var reshape(Var x, Shape shape) {
    if (shape_numel(shape) != x.value().numel())
        throw ShapeError("cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
    const Var ins[] = {x};
    return x.graph().record(OpKind::reshape, ins, std::move(shape), x.value().values(),
                            [](std::span<const double> gout, GradSink& sink) {
                                auto gx = sink.slot(0);
                                for (std::size_t i = 0; i < gout.size(); ++i) gx[i] += gout[i];
                            });
}

Var global_avg_pool(Var x) {
    if (x.value().rank() != 4) throw ShapeError("global_avg_pool needs rank 4, got " + shape_str(x.shape()));
    const std::size_t BC = x.shape()[0] * x.shape()[1];
    const std::size_t HW = x.shape()[2] * x.shape()[3];
    const auto& xv = x.value().values();
    const double inv = 1.0 / static_cast<double>(HW);
    std::vector<double> y(BC, 0.0);
    for (std::size_t i = 0; i < BC; ++i) {
        for (std::size_t p = 0; p < HW; ++p) y[i] += xv[i * HW + p];
        y[i] *= inv;
    }
    const Var ins[] = {x};
    return x.graph().record(OpKind::gap, ins, {x.shape()[0], x.shape()[1]}, std::move(y),
                            [HW, inv](std::span<const double> gout, GradSink& sink) {
                                auto gx = sink.slot(0);
                                for (std::size_t i = 0; i < gout.size(); ++i)
                                    for (std::size_t p = 0; p < HW; ++p) gx[i * HW + p] += gout[i] * inv;
                            });
}

Var softmax_cross_entropy(Var logits, std::span<const std::size_t> labels) {
    if (logits.value().rank() != 2) throw ShapeError("softmax_cross_entropy needs [B, C] logits");
    const std::size_t B = logits.shape()[0], C = logits.shape()[1];
    if (labels.size() != B) throw ShapeError("softmax_cross_entropy: label count does not match batch");
    const auto& lv = logits.value().values();
    std::vector<double> probs(B * C);
    double loss = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
        if (labels[b] >= C)
            throw ContractError("label " + std::to_string(labels[b]) + " out of range for " + std::to_string(C) +
                                " classes");
        const double* row = lv.data() + b * C;
        const double mx = *std::max_element(row, row + C);
        double z = 0.0;
        for (std::size_t c = 0; c < C; ++c) z += std::exp(row[c] - mx);
        const double log_z = mx + std::log(z);
        for (std::size_t c = 0; c < C; ++c) probs[b * C + c] = std::exp(row[c] - log_z);
        loss += log_z - row[labels[b]];
    }
    loss /= static_cast<double>(B);
    std::vector<std::size_t> ys(labels.begin(), labels.end());
    const Var ins[] = {logits};
    return logits.graph().record(OpKind::softmax_cross_entropy, ins, {}, {loss},
                                 [probs = std::move(probs), ys = std::move(ys), B, C](std::span<const double> gout,
                                                                                      GradSink& sink) {
                                     auto gx = sink.slot(0);
                                     const double s = gout[0] / static_cast<double>(B);
                                     for (std::size_t b = 0; b < B; ++b)
                                         for (std::size_t c = 0; c < C; ++c)
                                             gx[b * C + c] += s * (probs[b * C + c] - (c == ys[b] ? 1.0 : 0.0));
                                 });
}

Var l1_distance(Var a, Var b) {
    if (a.shape() != b.shape())
        throw ShapeError("l1_distance of " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
    const auto& av = a.value().values();
    const auto& bv = b.value().values();
    double total = 0.0;
    std::vector<double> sign(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) {
        const double d = av[i] - bv[i];
        total += std::fabs(d);
        sign[i] = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
    }
    const Var ins[] = {a, b};
    return a.graph().record(OpKind::l1_distance, ins, {}, {total},
                            [sign = std::move(sign)](std::span<const double> gout, GradSink& sink) {
                                auto ga = sink.slot(0);
                                auto gb = sink.slot(1);
                                for (std::size_t i = 0; i < sign.size(); ++i) {
                                    if (!ga.empty()) ga[i] += gout[0] * sign[i];
                                    if (!gb.empty()) gb[i] -= gout[0] * sign[i];
                                }
                            });
}

Var l2_normalize(Var x) {
    if (x.value().rank() != 2) throw ShapeError("l2_normalize needs [B, d], got " + shape_str(x.shape()));
    const std::size_t B = x.shape()[0], d = x.shape()[1];
    const auto& xv = x.value().values();
    std::vector<double> norms(B), y(B * d);
    for (std::size_t b = 0; b < B; ++b) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += xv[b * d + j] * xv[b * d + j];
        norms[b] = std::sqrt(s);
        if (!(norms[b] > 0.0))
            throw NumericsError("l2_normalize of zero-norm row " + std::to_string(b) + " at node " +
                                std::to_string(x.graph().size()));
        for (std::size_t j = 0; j < d; ++j) y[b * d + j] = xv[b * d + j] / norms[b];
    }
    Graph* g = &x.graph();
    const NodeId iy = g->size();
    const Var ins[] = {x};
    return g->record(OpKind::l2_normalize, ins, x.shape(), std::move(y),
                     [g, iy, norms = std::move(norms), B, d](std::span<const double> gout, GradSink& sink) {
                         const auto& yv = g->value(iy).values();
                         auto gx = sink.slot(0);
                         for (std::size_t b = 0; b < B; ++b) {
                             double dot = 0.0;
                             for (std::size_t j = 0; j < d; ++j) dot += yv[b * d + j] * gout[b * d + j];
                             for (std::size_t j = 0; j < d; ++j)
                                 gx[b * d + j] += (gout[b * d + j] - yv[b * d + j] * dot) / norms[b];
                         }
                     });
}

Var concat(std::span<const Var> parts, std::size_t axis) {
    if (parts.empty()) throw ShapeError("concat of zero tensors");
    const Shape& first = parts[0].shape();
    if (axis >= first.size()) throw ShapeError("concat axis out of range");
    Shape out = first;
    out[axis] = 0;
    std::vector<std::size_t> widths;
    for (const Var& p : parts) {
        const Shape& s = p.shape();
        if (s.size() != first.size()) throw ShapeError("concat rank mismatch");
        for (std::size_t ax = 0; ax < s.size(); ++ax)
            if (ax != axis && s[ax] != first[ax])
                throw ShapeError("concat of " + shape_str(first) + " with " + shape_str(s));
        out[axis] += s[axis];
        widths.push_back(s[axis]);
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t ax = 0; ax < axis; ++ax) outer *= first[ax];
    for (std::size_t ax = axis + 1; ax < first.size(); ++ax) inner *= first[ax];
    const std::size_t row = out[axis] * inner;
    std::vector<double> y(shape_numel(out));
    std::size_t offset = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
        const auto& v = parts[p].value().values();
        const std::size_t chunk = widths[p] * inner;
        for (std::size_t o = 0; o < outer; ++o)
            std::copy_n(v.begin() + o * chunk, chunk, y.begin() + o * row + offset);
        offset += chunk;
    }
    return parts[0].graph().record(OpKind::concat, parts, std::move(out), std::move(y),
                                   [widths, outer, inner, row](std::span<const double> gout, GradSink& sink) {
                                       std::size_t offset = 0;
                                       for (std::size_t p = 0; p < widths.size(); ++p) {
                                           const std::size_t chunk = widths[p] * inner;
                                           auto gp = sink.slot(p);
                                           if (!gp.empty())
                                               for (std::size_t o = 0; o < outer; ++o)
                                                   for (std::size_t i = 0; i < chunk; ++i)
                                                       gp[o * chunk + i] += gout[o * row + offset + i];
                                           offset += chunk;
                                       }
                                   });
}

Var detach(Var x) { return x.graph().constant(x.value()); }

}  // namespace peca
