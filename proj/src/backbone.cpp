#include "peca/backbone.hpp"

#include <cmath>

#include "peca/error.hpp"
#include "peca/ops.hpp"
#include "peca/rng.hpp"

namespace peca {

std::string_view to_string(PerturbPlan plan) {
    switch (plan) {
        case PerturbPlan::none: return "none";
        case PerturbPlan::shallow: return "shallow";
        case PerturbPlan::deep: return "deep";
        case PerturbPlan::all: return "all";
        case PerturbPlan::custom: return "custom";
    }
    return "none";
}

PerturbPlan parse_perturb_plan(std::string_view text) {
    if (text == "none") return PerturbPlan::none;
    if (text == "shallow") return PerturbPlan::shallow;
    if (text == "deep") return PerturbPlan::deep;
    if (text == "all") return PerturbPlan::all;
    if (text == "custom") return PerturbPlan::custom;
    throw ContractError("unknown perturb_plan '" + std::string(text) + "'");
}

void BackboneConfig::validate() const {
    if (stage_channels.size() != stage_strides.size())
        throw ContractError("stage_channels and stage_strides must have equal length");
    if (stage_channels.size() < 2) throw ContractError("backbone needs at least 2 stages");
    if (feature_dim == 0) throw ContractError("feature_dim must be positive");
    if (in_channels == 0) throw ContractError("in_channels must be positive");
    if (kernel_size % 2 == 0) throw ContractError("kernel_size must be odd");
    for (auto c : stage_channels)
        if (c == 0) throw ContractError("stage channel counts must be positive");
    for (auto s : stage_strides)
        if (s == 0) throw ContractError("stage strides must be positive");
    if (perturb_plan == PerturbPlan::custom && custom_mask.size() != stage_channels.size())
        throw ContractError("custom perturb mask needs one entry per stage");
}

std::vector<bool> BackboneConfig::perturb_mask() const {
    const std::size_t n = num_stages();
    const std::size_t shallow = (n + 1) / 2;
    std::vector<bool> mask(n, false);
    for (std::size_t s = 0; s < n; ++s) {
        switch (perturb_plan) {
            case PerturbPlan::none: break;
            case PerturbPlan::shallow: mask[s] = s < shallow; break;
            case PerturbPlan::deep: mask[s] = s >= shallow; break;
            case PerturbPlan::all: mask[s] = true; break;
            case PerturbPlan::custom: mask[s] = custom_mask.at(s); break;
        }
    }
    return mask;
}

BackboneParams BackboneParams::init(const BackboneConfig& config, std::uint64_t seed) {
    config.validate();
    RngStream rng(StreamTag::param_init, {seed});
    BackboneParams p;
    std::size_t in = config.in_channels;
    const std::size_t k = config.kernel_size;
    for (std::size_t s = 0; s < config.num_stages(); ++s) {
        const std::size_t out = config.stage_channels[s];
        const double std_dev = std::sqrt(2.0 / static_cast<double>(in * k * k));
        std::vector<double> w(out * in * k * k);
        for (auto& v : w) v = std_dev * rng.normal();
        p.kernels.emplace_back(Shape{out, in, k, k}, std::move(w));
        p.biases.push_back(Tensor::zeros({out}));
        in = out;
    }
    const double proj_std = std::sqrt(1.0 / static_cast<double>(in));
    std::vector<double> w(in * config.feature_dim);
    for (auto& v : w) v = proj_std * rng.normal();
    p.projection = Tensor({in, config.feature_dim}, std::move(w));
    return p;
}

std::size_t BackboneParams::parameter_count() const {
    std::size_t n = projection.numel();
    for (const auto& t : kernels) n += t.numel();
    for (const auto& t : biases) n += t.numel();
    return n;
}

std::vector<NamedTensor> BackboneParams::to_named() const {
    std::vector<NamedTensor> out;
    for (std::size_t s = 0; s < kernels.size(); ++s) {
        out.push_back({"backbone.stage" + std::to_string(s) + ".kernel", kernels[s]});
        out.push_back({"backbone.stage" + std::to_string(s) + ".bias", biases[s]});
    }
    out.push_back({"backbone.projection", projection});
    return out;
}

BackboneParams BackboneParams::from_named(std::span<const NamedTensor> tensors, const BackboneConfig& config) {
    const BackboneParams ref = init(config, 0);
    BackboneParams p;
    for (std::size_t s = 0; s < config.num_stages(); ++s) {
        p.kernels.push_back(require_tensor(tensors, "backbone.stage" + std::to_string(s) + ".kernel"));
        p.biases.push_back(require_tensor(tensors, "backbone.stage" + std::to_string(s) + ".bias"));
        if (p.kernels[s].shape() != ref.kernels[s].shape() || p.biases[s].shape() != ref.biases[s].shape())
            throw ShapeError("checkpoint stage " + std::to_string(s) + " does not match the backbone config");
    }
    p.projection = require_tensor(tensors, "backbone.projection");
    if (p.projection.shape() != ref.projection.shape())
        throw ShapeError("checkpoint projection does not match the backbone config");
    return p;
}

std::vector<Var> BackboneVars::all() const {
    std::vector<Var> out;
    for (std::size_t s = 0; s < kernels.size(); ++s) {
        out.push_back(kernels[s]);
        out.push_back(biases[s]);
    }
    out.push_back(projection);
    return out;
}

BackboneVars bind_params(Graph& graph, const BackboneParams& params, bool requires_grad) {
    BackboneVars v;
    for (std::size_t s = 0; s < params.kernels.size(); ++s) {
        v.kernels.push_back(graph.leaf(params.kernels[s], requires_grad, "stage" + std::to_string(s) + ".kernel"));
        v.biases.push_back(graph.leaf(params.biases[s], requires_grad, "stage" + std::to_string(s) + ".bias"));
    }
    v.projection = graph.leaf(params.projection, requires_grad, "projection");
    return v;
}

Var gap(Var e, Var projection) { return matmul(global_avg_pool(e), projection); }

BackboneOutput backbone_forward(Var images, const BackboneVars& params, const BackboneConfig& config, Mode mode,
                                bool lpm_enabled, std::span<const std::size_t> sample_domains,
                                const LpmContext& lpm_ctx) {
    if (images.value().rank() != 4) throw ShapeError("backbone input must be [B, C, H, W], got " + shape_str(images.shape()));
    if (images.shape()[1] != config.in_channels)
        throw ShapeError("backbone expects " + std::to_string(config.in_channels) + " input channels, got " +
                         std::to_string(images.shape()[1]));
    const auto mask = config.perturb_mask();
    const bool perturb = mode == Mode::train && lpm_enabled;
    BackboneOutput out;
    Var x = images;
    for (std::size_t s = 0; s < config.num_stages(); ++s) {
        x = relu(conv2d(x, params.kernels[s], params.biases[s], config.stage_strides[s], config.kernel_size / 2));
        if (perturb && mask[s]) x = lpm_apply(x, sample_domains, s, true, lpm_ctx);
        out.stage_maps.push_back(x);
    }
    out.v = gap(x, params.projection);
    return out;
}

void write_backbone_config(std::vector<NamedTensor>& out, const BackboneConfig& config) {
    auto vec = [](const std::vector<std::size_t>& xs) {
        std::vector<double> d(xs.begin(), xs.end());
        const std::size_t n = d.size();
        return Tensor({n}, std::move(d));
    };
    out.push_back({"config.in_channels", Tensor::vector({static_cast<double>(config.in_channels)})});
    out.push_back({"config.stage_channels", vec(config.stage_channels)});
    out.push_back({"config.stage_strides", vec(config.stage_strides)});
    out.push_back({"config.feature_dim", Tensor::vector({static_cast<double>(config.feature_dim)})});
    out.push_back({"config.kernel_size", Tensor::vector({static_cast<double>(config.kernel_size)})});
    const auto mask = config.perturb_mask();
    std::vector<double> m(mask.begin(), mask.end());
    const std::size_t n = m.size();
    out.push_back({"config.perturb_mask", Tensor({n}, std::move(m))});
}

BackboneConfig read_backbone_config(std::span<const NamedTensor> tensors) {
    auto vec = [&](std::string_view name) {
        const auto& t = require_tensor(tensors, name);
        return std::vector<std::size_t>(t.data().begin(), t.data().end());
    };
    BackboneConfig c;
    c.in_channels = vec("config.in_channels").at(0);
    c.stage_channels = vec("config.stage_channels");
    c.stage_strides = vec("config.stage_strides");
    c.feature_dim = vec("config.feature_dim").at(0);
    c.kernel_size = vec("config.kernel_size").at(0);
    const auto& mask = require_tensor(tensors, "config.perturb_mask");
    c.perturb_plan = PerturbPlan::custom;
    c.custom_mask.clear();
    for (double m : mask.data()) c.custom_mask.push_back(m != 0.0);
    c.validate();
    return c;
}

}  // namespace peca
