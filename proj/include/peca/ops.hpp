#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "peca/graph.hpp"

namespace peca {

// Elementwise arithmetic with right-aligned (numpy-style) broadcasting.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);

Var matmul(Var a, Var b);

// x: [B, Cin, H, W], weight: [Cout, Cin, k, k], bias: [Cout]. Zero padding.
Var conv2d(Var x, Var weight, Var bias, std::size_t stride, std::size_t padding);

Var relu(Var x);
Var sqrt(Var x);
Var abs(Var x);
Var scale(Var x, double factor);
Var add_scalar(Var x, double offset);
Var clamp_min(Var x, double floor);

// Reductions over `axes` (empty means every axis). variance uses population
// normalization (divide by the reduced element count).
Var sum(Var x, std::vector<std::size_t> axes = {}, bool keepdim = false);
Var mean(Var x, std::vector<std::size_t> axes = {}, bool keepdim = false);
Var variance(Var x, std::vector<std::size_t> axes = {}, bool keepdim = false);

Var broadcast_to(Var x, Shape shape);
Var reshape(Var x, Shape shape);

// [B, C, H, W] -> [B, C]
Var global_avg_pool(Var x);

// Mean over the batch of -log softmax(logits)[label].
Var softmax_cross_entropy(Var logits, std::span<const std::size_t> labels);

// sum |a - b|, same shapes.
Var l1_distance(Var a, Var b);

// Row-wise L2 normalization of a [B, d] matrix. A zero row raises NumericsError.
Var l2_normalize(Var x);

Var concat(std::span<const Var> parts, std::size_t axis);

// Copy of x's value as a new constant leaf; gradients stop here.
Var detach(Var x);

// Output shape of broadcasting a against b; ShapeError when incompatible.
Shape broadcast_shape(const Shape& a, const Shape& b);

}  // namespace peca
