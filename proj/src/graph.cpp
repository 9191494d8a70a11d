#include "peca/graph.hpp"

#include <cmath>

#include "peca/error.hpp"

namespace peca {

std::string_view op_name(OpKind kind) {
    switch (kind) {
        case OpKind::leaf: return "leaf";
        case OpKind::add: return "add";
        case OpKind::sub: return "sub";
        case OpKind::mul: return "mul";
        case OpKind::div: return "div";
        case OpKind::matmul: return "matmul";
        case OpKind::conv2d: return "conv2d";
        case OpKind::relu: return "relu";
        case OpKind::mean: return "mean";
        case OpKind::variance: return "variance";
        case OpKind::sum: return "sum";
        case OpKind::sqrt: return "sqrt";
        case OpKind::abs: return "abs";
        case OpKind::broadcast: return "broadcast";
        case OpKind::reshape: return "reshape";
        case OpKind::gap: return "gap";
        case OpKind::softmax_cross_entropy: return "softmax_cross_entropy";
        case OpKind::l1_distance: return "l1_distance";
        case OpKind::l2_normalize: return "l2_normalize";
        case OpKind::concat: return "concat";
        case OpKind::scale: return "scale";
        case OpKind::clamp_min: return "clamp_min";
    }
    return "unknown";
}

const Tensor& Var::value() const { return graph_->value(id_); }
bool Var::requires_grad() const { return graph_->requires_grad(id_); }

std::span<double> GradSink::slot(std::size_t input_index) {
    if (!wants_[input_index]) return {};
    return grads_[inputs_[input_index]];
}

Gradients::Gradients(const Graph& graph, std::vector<std::vector<double>> grads)
    : graph_(&graph), grads_(std::move(grads)) {}

Tensor Gradients::of(Var v) const {
    if (!graph_->requires_grad(v.id()))
        throw ContractError("gradient requested for node " + std::to_string(v.id()) + " which does not require grad");
    return Tensor(v.shape(), grads_[v.id()]);
}

Var Graph::leaf(Tensor value, bool requires_grad, std::string name) {
    Node n;
    n.kind = OpKind::leaf;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.name = std::move(name);
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

Var Graph::record(OpKind kind, std::span<const Var> inputs, Shape shape, std::vector<double> values,
                  BackwardFn backward) {
    const NodeId id = nodes_.size();
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i]))
            throw NumericsError("non-finite output from op '" + std::string(op_name(kind)) + "' at node " +
                                std::to_string(id) + " (element " + std::to_string(i) + ")");
    }
    Node n;
    n.kind = kind;
    n.value = Tensor(std::move(shape), std::move(values));
    for (const Var& in : inputs) {
        if (in.graph_ != this) throw ContractError("op input belongs to a different graph");
        n.inputs.push_back(in.id_);
        const bool wants = nodes_[in.id_].requires_grad;
        n.input_wants_grad.push_back(wants);
        n.requires_grad = n.requires_grad || wants;
    }
    if (n.requires_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var(this, id);
}

Gradients Graph::backward(Var loss) const {
    if (loss.graph_ != this) throw ContractError("loss belongs to a different graph");
    if (value(loss.id()).numel() != 1)
        throw ContractError("backward() needs a scalar loss, got shape " + shape_str(value(loss.id()).shape()));

    std::vector<std::vector<double>> grads(nodes_.size());
    for (NodeId i = 0; i < nodes_.size(); ++i)
        if (nodes_[i].requires_grad) grads[i].assign(nodes_[i].value.numel(), 0.0);
    if (!nodes_[loss.id()].requires_grad) return Gradients(*this, std::move(grads));

    grads[loss.id()][0] = 1.0;
    std::vector<double> scaled;
    for (NodeId i = loss.id() + 1; i-- > 0;) {
        const Node& n = nodes_[i];
        if (!n.backward) continue;
        std::span<const double> gout = grads[i];
        if (fault_ && fault_->kind == n.kind) {
            scaled.assign(gout.begin(), gout.end());
            for (double& g : scaled) g *= fault_->factor;
            gout = scaled;
        }
        GradSink sink(grads, n.inputs, n.input_wants_grad);
        n.backward(gout, sink);
    }
    return Gradients(*this, std::move(grads));
}

}  // namespace peca
