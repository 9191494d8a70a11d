#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "peca/graph.hpp"
#include "peca/lpm.hpp"
#include "peca/serialize.hpp"

namespace peca {

// Which stage outputs receive local perturbation during training.
// shallow = first ceil(S/2) stages, deep = the rest.
enum class PerturbPlan { none, shallow, deep, all, custom };

std::string_view to_string(PerturbPlan plan);
PerturbPlan parse_perturb_plan(std::string_view text);

struct BackboneConfig {
    std::size_t in_channels = 3;
    std::vector<std::size_t> stage_channels{8, 16, 16, 32};
    std::vector<std::size_t> stage_strides{1, 2, 2, 2};
    std::size_t feature_dim = 64;
    std::size_t kernel_size = 3;
    PerturbPlan perturb_plan = PerturbPlan::all;
    std::vector<bool> custom_mask;  // used when perturb_plan == custom

    void validate() const;
    std::size_t num_stages() const { return stage_channels.size(); }
    std::vector<bool> perturb_mask() const;
};

// Conv stage s maps stage_channels[s-1] (or in_channels) to stage_channels[s];
// the projection maps stage_channels.back() to feature_dim.
struct BackboneParams {
    std::vector<Tensor> kernels;
    std::vector<Tensor> biases;
    Tensor projection;

    static BackboneParams init(const BackboneConfig& config, std::uint64_t seed);

    std::size_t parameter_count() const;
    std::vector<NamedTensor> to_named() const;
    static BackboneParams from_named(std::span<const NamedTensor> tensors, const BackboneConfig& config);
};

// BackboneParams bound as leaves of one graph.
struct BackboneVars {
    std::vector<Var> kernels;
    std::vector<Var> biases;
    Var projection;

    std::vector<Var> all() const;
};

BackboneVars bind_params(Graph& graph, const BackboneParams& params, bool requires_grad);

enum class Mode { train, eval };

struct BackboneOutput {
    std::vector<Var> stage_maps;
    Var v;  // [B, feature_dim]
};

// Conv + relu stages with optional LPM on each selected stage output, then
// global average pooling and a linear projection. LPM runs only when
// mode == train and `lpm_enabled`; eval consumes no randomness.
BackboneOutput backbone_forward(Var images, const BackboneVars& params, const BackboneConfig& config, Mode mode,
                                bool lpm_enabled, std::span<const std::size_t> sample_domains,
                                const LpmContext& lpm_ctx);

// Pooled [B, C] channel means of e, projected by a [C, d] matrix.
Var gap(Var e, Var projection);

void write_backbone_config(std::vector<NamedTensor>& out, const BackboneConfig& config);
BackboneConfig read_backbone_config(std::span<const NamedTensor> tensors);

}  // namespace peca
