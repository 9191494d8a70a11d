#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "peca/tensor.hpp"

namespace peca {

enum class OpKind {
    leaf,
    add,
    sub,
    mul,
    div,
    matmul,
    conv2d,
    relu,
    mean,
    variance,
    sum,
    sqrt,
    abs,
    broadcast,
    reshape,
    gap,
    softmax_cross_entropy,
    l1_distance,
    l2_normalize,
    concat,
    scale,
    clamp_min,
};

std::string_view op_name(OpKind kind);

using NodeId = std::size_t;

class Graph;

// Handle to a node in a Graph. Cheap to copy; valid while the graph lives.
class Var {
public:
    Var() = default;

    Graph& graph() const { return *graph_; }
    NodeId id() const { return id_; }
    bool valid() const { return graph_ != nullptr; }

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    bool requires_grad() const;

private:
    friend class Graph;
    Var(Graph* g, NodeId id) : graph_(g), id_(id) {}

    Graph* graph_ = nullptr;
    NodeId id_ = 0;
};

// Gradient buffers handed to a node's backward rule; slot(i) is the
// accumulator of the i-th input, or empty when that input needs no gradient.
class GradSink {
public:
    GradSink(std::vector<std::vector<double>>& grads, const std::vector<NodeId>& inputs,
             const std::vector<bool>& wants)
        : grads_(grads), inputs_(inputs), wants_(wants) {}

    std::span<double> slot(std::size_t input_index);

private:
    std::vector<std::vector<double>>& grads_;
    const std::vector<NodeId>& inputs_;
    const std::vector<bool>& wants_;
};

using BackwardFn = std::function<void(std::span<const double> grad_out, GradSink& sink)>;

// Result of Graph::backward: one gradient array per node that requires grad.
class Gradients {
public:
    Gradients(const Graph& graph, std::vector<std::vector<double>> grads);

    // Gradient of the loss w.r.t. v, zeros when v requires grad but is not
    // reachable from the loss. Throws ContractError for nodes without grad.
    Tensor of(Var v) const;
    std::span<const double> raw(NodeId id) const { return grads_[id]; }

private:
    const Graph* graph_;
    std::vector<std::vector<double>> grads_;
};

// Append-only tape. Nodes are recorded in topological order, so reverse
// append order is a valid backward schedule.
class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    Var leaf(Tensor value, bool requires_grad = false, std::string name = {});
    Var constant(Tensor value) { return leaf(std::move(value), false); }

    // Appends an op node. Values are validated as finite; a failure raises
    // NumericsError naming the node. The backward rule is kept only when some
    // input requires grad.
    Var record(OpKind kind, std::span<const Var> inputs, Shape shape, std::vector<double> values, BackwardFn backward);

    Gradients backward(Var loss) const;

    std::size_t size() const { return nodes_.size(); }
    const Tensor& value(NodeId id) const { return nodes_[id].value; }
    bool requires_grad(NodeId id) const { return nodes_[id].requires_grad; }
    OpKind kind(NodeId id) const { return nodes_[id].kind; }
    const std::string& name(NodeId id) const { return nodes_[id].name; }

    // Test fixture: scales the incoming gradient of every node of `kind`
    // during backward, deliberately breaking that op's rule.
    void inject_fault(OpKind kind, double factor) { fault_ = Fault{kind, factor}; }

private:
    struct Node {
        OpKind kind = OpKind::leaf;
        std::vector<NodeId> inputs;
        std::vector<bool> input_wants_grad;
        Tensor value;
        bool requires_grad = false;
        BackwardFn backward;
        std::string name;
    };
    struct Fault {
        OpKind kind;
        double factor;
    };

    std::deque<Node> nodes_;  // deque: values stay addressable while the tape grows
    std::optional<Fault> fault_;
};

}  // namespace peca
