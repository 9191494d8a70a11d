#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "peca/finite_diff.hpp"
#include "peca/graph.hpp"
#include "peca/ops.hpp"
#include "peca/rng.hpp"
#include "peca/tensor.hpp"

namespace peca::testing {

using Builder = std::function<Var(Var)>;

inline Tensor random_tensor(const Shape& shape, RngStream& rng, double scale = 1.0) {
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = scale * rng.normal();
    return Tensor(shape, std::move(v));
}

// Pushes every coordinate at least `margin` away from zero, keeping its sign.
inline Tensor away_from_zero(const Tensor& t, double margin) {
    std::vector<double> v = t.values();
    for (auto& x : v)
        if (std::abs(x) < margin) x = x < 0 ? -margin - std::abs(x) : margin + std::abs(x);
    return Tensor(t.shape(), std::move(v));
}

// Collapses y to a scalar with fixed random weights so a gradient check sees
// the whole Jacobian rather than its column sums.
inline Var contract(Var y, std::uint64_t seed = 11) {
    RngStream rng(StreamTag::test, {seed, y.value().numel()});
    const Var w = y.graph().constant(random_tensor(y.shape(), rng));
    return sum(mul(y, w));
}

inline Tensor analytic_grad(const Builder& f, const Tensor& x) {
    Graph g;
    const Var v = g.leaf(x, true);
    return g.backward(f(v)).of(v);
}

inline Tensor numeric_grad(const Builder& f, const Tensor& x, double step = 1e-4) {
    return finite_diff_grad(
        [&](const Tensor& t) {
            Graph g;
            return f(g.leaf(t)).value().item();
        },
        x, step);
}

inline double grad_error(const Builder& f, const Tensor& x) {
    return max_relative_error(analytic_grad(f, x), numeric_grad(f, x));
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace peca::testing
