#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "peca/rng.hpp"
#include "peca/tensor.hpp"

namespace peca {

// Rendering style of one domain: image = gain (.) pattern + bias + texture + noise.
struct DomainSpec {
    std::size_t domain_id = 0;
    std::size_t n_identities = 20;
    std::vector<double> gain;  // per input channel, > 0
    std::vector<double> bias;  // per input channel
    double texture_scale = 0.0;
    double noise_std = 0.0;
    std::size_t views_per_identity = 4;
    bool is_target = false;

    void validate() const;
};

// Knobs for the whole synthetic benchmark. Source styles draw log-gain and
// bias uniformly from [-spread, spread] per channel. Target styles start at the
// source centroid; log-gain drops by target_gap * 2 * spread (a dimmer,
// lower-contrast camera) and bias moves by the same multiple along a random
// sign pattern. target_gap >= 1 lands outside the source style box, 0 on the
// centroid.
struct DataTemplate {
    std::size_t channels = 3;
    std::size_t height = 16;
    std::size_t width = 8;
    std::size_t latent_dim = 8;
    std::size_t k_source = 3;
    std::size_t k_target = 1;
    std::size_t n_identities = 20;       // per source domain, training split
    std::size_t n_test_identities = 20;  // per source domain, held-out split
    std::size_t n_target_identities = 20;
    std::size_t views = 4;
    double gain_spread = 0.3;
    double bias_spread = 0.3;
    double target_gap = 1.0;
    double texture_scale = 0.2;
    double noise_std = 0.1;
    std::uint64_t seed = 7;

    void validate() const;
};

// Fixed spatial expansion of identity latents, shared by every domain.
struct PatternBasis {
    std::size_t latent_dim = 0;
    Shape image_shape;          // [C, H, W]
    std::vector<double> basis;  // latent_dim x C*H*W

    static PatternBasis make(const DataTemplate& tmpl);
    // sum_l z_l * basis_l, rows shifted cyclically by `view` positions.
    std::vector<double> pattern(std::span<const double> latent, std::size_t view) const;
};

// Rendered images of one split of one domain; instance i shows identity
// labels[i] from view views[i].
struct DomainData {
    DomainSpec spec;
    std::vector<std::vector<double>> latents;  // one per identity
    std::vector<double> texture;               // C*H*W background field
    Tensor images;                             // [n, C, H, W]
    std::vector<std::size_t> labels;
    std::vector<std::size_t> views;

    std::size_t size() const { return labels.size(); }
    std::vector<std::size_t> instances_of(std::size_t identity) const;
};

struct SyntheticData {
    DataTemplate tmpl;
    std::vector<DomainData> sources;       // training splits
    std::vector<DomainData> source_tests;  // held-out identities, same styles
    std::vector<DomainData> targets;
};

struct DomainBatch {
    Tensor images;                   // [B, C, H, W]
    std::vector<std::size_t> labels;  // identity within the domain
    std::vector<std::size_t> views;
    std::size_t domain = 0;
};

SyntheticData make_domains(const DataTemplate& tmpl);

// Per-identity texture, background and latent-independent parts come from the
// domain; `rng` supplies the additive noise.
Tensor render_instance(std::span<const double> latent, std::size_t view, const DomainSpec& style,
                       std::span<const double> texture, const PatternBasis& basis, RngStream& rng);

// P distinct identities with `instances` samples each, drawn without
// replacement from an identity's views when enough exist.
DomainBatch sample_batch(const DomainData& data, std::size_t identities, std::size_t instances, RngStream& rng);

// Mean absolute difference of (log gain, bias) between a target style and
// each source style, averaged over sources.
double style_gap(const DomainSpec& target, std::span<const DomainSpec> sources);

// Gathers a subset of instances of `data` into a standalone split.
DomainData select_instances(const DomainData& data, std::span<const std::size_t> indices);

// Dump: tensors in the PECA binary format plus a JSON sidecar with the template
// and every DomainSpec.
void save_dataset(const SyntheticData& data, const std::filesystem::path& dir);
SyntheticData load_dataset(const std::filesystem::path& dir);

}  // namespace peca
