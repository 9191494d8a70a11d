#include "peca/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "peca/error.hpp"
#include "peca/json_io.hpp"
#include "peca/serialize.hpp"

namespace peca {
namespace {

// Random field on a coarse (ceil(H/4) x ceil(W/4)) grid, bilinearly
// upsampled to H x W, per channel.
std::vector<double> smooth_field(std::size_t C, std::size_t H, std::size_t W, RngStream& rng) {
    const std::size_t gh = std::max<std::size_t>(2, (H + 3) / 4), gw = std::max<std::size_t>(2, (W + 3) / 4);
    std::vector<double> out(C * H * W);
    for (std::size_t c = 0; c < C; ++c) {
        std::vector<double> grid(gh * gw);
        for (auto& g : grid) g = rng.normal();
        for (std::size_t h = 0; h < H; ++h) {
            const double fy = H > 1 ? static_cast<double>(h) * (gh - 1) / (H - 1) : 0.0;
            const std::size_t y0 = std::min(static_cast<std::size_t>(fy), gh - 2);
            const double ty = fy - y0;
            for (std::size_t w = 0; w < W; ++w) {
                const double fx = W > 1 ? static_cast<double>(w) * (gw - 1) / (W - 1) : 0.0;
                const std::size_t x0 = std::min(static_cast<std::size_t>(fx), gw - 2);
                const double tx = fx - x0;
                const double top = grid[y0 * gw + x0] * (1 - tx) + grid[y0 * gw + x0 + 1] * tx;
                const double bot = grid[(y0 + 1) * gw + x0] * (1 - tx) + grid[(y0 + 1) * gw + x0 + 1] * tx;
                out[(c * H + h) * W + w] = top * (1 - ty) + bot * ty;
            }
        }
    }
    return out;
}

enum Split : std::uint64_t { kTrain = 0, kTest = 1, kTarget = 2 };

DomainData render_domain(const DomainSpec& spec, std::size_t n_identities, Split split, const DataTemplate& tmpl,
                         const PatternBasis& basis, std::span<const double> texture) {
    DomainData d;
    d.spec = spec;
    d.spec.n_identities = n_identities;
    d.texture.assign(texture.begin(), texture.end());
    RngStream latent_rng(StreamTag::latent, {tmpl.seed, spec.domain_id, split});
    for (std::size_t n = 0; n < n_identities; ++n) {
        std::vector<double> z(tmpl.latent_dim);
        for (auto& v : z) v = latent_rng.normal();
        d.latents.push_back(std::move(z));
    }
    const std::size_t per = tmpl.channels * tmpl.height * tmpl.width;
    std::vector<double> pixels;
    pixels.reserve(n_identities * spec.views_per_identity * per);
    for (std::size_t n = 0; n < n_identities; ++n)
        for (std::size_t v = 0; v < spec.views_per_identity; ++v) {
            RngStream rng(StreamTag::render, {tmpl.seed, spec.domain_id, split, n, v});
            const Tensor img = render_instance(d.latents[n], v, spec, texture, basis, rng);
            pixels.insert(pixels.end(), img.data().begin(), img.data().end());
            d.labels.push_back(n);
            d.views.push_back(v);
        }
    d.images = Tensor({d.labels.size(), tmpl.channels, tmpl.height, tmpl.width}, std::move(pixels));
    return d;
}

}  // namespace

void DomainSpec::validate() const {
    if (n_identities < 2) throw ContractError("a domain needs at least 2 identities");
    if (views_per_identity < 2) throw ContractError("a domain needs at least 2 views per identity");
    if (gain.size() != bias.size() || gain.empty()) throw ContractError("style gain/bias must be per-channel vectors");
    for (double g : gain)
        if (!(g > 0.0)) throw ContractError("style gains must be positive");
    if (!(noise_std >= 0.0)) throw ContractError("noise std must be non-negative");
}

void DataTemplate::validate() const {
    if (k_source < 2) throw ContractError("need at least 2 source domains");
    if (n_identities < 2 || n_test_identities < 2 || n_target_identities < 2)
        throw ContractError("every split needs at least 2 identities");
    if (views < 2) throw ContractError("need at least 2 views per identity");
    if (channels == 0 || height == 0 || width == 0 || latent_dim == 0)
        throw ContractError("image and latent extents must be positive");
    if (gain_spread < 0.0 || bias_spread < 0.0 || target_gap < 0.0 || texture_scale < 0.0 || noise_std < 0.0)
        throw ContractError("data spreads and noise must be non-negative");
}

PatternBasis PatternBasis::make(const DataTemplate& tmpl) {
    PatternBasis b;
    b.latent_dim = tmpl.latent_dim;
    b.image_shape = {tmpl.channels, tmpl.height, tmpl.width};
    RngStream rng(StreamTag::latent, {tmpl.seed, 0xBA515ull});
    for (std::size_t l = 0; l < tmpl.latent_dim; ++l) {
        const auto f = smooth_field(tmpl.channels, tmpl.height, tmpl.width, rng);
        b.basis.insert(b.basis.end(), f.begin(), f.end());
    }
    const double norm = 1.0 / std::sqrt(static_cast<double>(tmpl.latent_dim));
    for (auto& v : b.basis) v *= norm;
    return b;
}

std::vector<double> PatternBasis::pattern(std::span<const double> latent, std::size_t view) const {
    if (latent.size() != latent_dim) throw ShapeError("latent dimension does not match the pattern basis");
    const std::size_t C = image_shape[0], H = image_shape[1], W = image_shape[2];
    const std::size_t per = C * H * W;
    std::vector<double> flat(per, 0.0);
    for (std::size_t l = 0; l < latent_dim; ++l)
        for (std::size_t i = 0; i < per; ++i) flat[i] += latent[l] * basis[l * per + i];
    std::vector<double> out(per);
    const std::size_t shift = view % H;
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t h = 0; h < H; ++h)
            std::copy_n(flat.begin() + (c * H + h) * W, W, out.begin() + (c * H + (h + shift) % H) * W);
    return out;
}

std::vector<std::size_t> DomainData::instances_of(std::size_t identity) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == identity) out.push_back(i);
    return out;
}

Tensor render_instance(std::span<const double> latent, std::size_t view, const DomainSpec& style,
                       std::span<const double> texture, const PatternBasis& basis, RngStream& rng) {
    const std::size_t C = basis.image_shape[0], HW = basis.image_shape[1] * basis.image_shape[2];
    if (style.gain.size() != C) throw ShapeError("style channel count does not match the image");
    if (!texture.empty() && texture.size() != C * HW) throw ShapeError("texture size does not match the image");
    std::vector<double> img = basis.pattern(latent, view);
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t p = 0; p < HW; ++p) {
            double& px = img[c * HW + p];
            px = style.gain[c] * px + style.bias[c];
            if (!texture.empty()) px += style.texture_scale * texture[c * HW + p];
            if (style.noise_std > 0.0) px += style.noise_std * rng.normal();
        }
    return Tensor({1, C, basis.image_shape[1], basis.image_shape[2]}, std::move(img));
}

SyntheticData make_domains(const DataTemplate& tmpl) {
    tmpl.validate();
    SyntheticData out;
    out.tmpl = tmpl;
    const PatternBasis basis = PatternBasis::make(tmpl);
    const std::size_t C = tmpl.channels;
    RngStream style_rng(StreamTag::style, {tmpl.seed});

    auto base_spec = [&](std::size_t id, bool target) {
        DomainSpec s;
        s.domain_id = id;
        s.views_per_identity = tmpl.views;
        s.texture_scale = tmpl.texture_scale;
        s.noise_std = tmpl.noise_std;
        s.is_target = target;
        return s;
    };

    std::vector<DomainSpec> source_specs;
    std::vector<double> centroid_log_gain(C, 0.0), centroid_bias(C, 0.0);
    for (std::size_t k = 0; k < tmpl.k_source; ++k) {
        DomainSpec s = base_spec(k, false);
        s.n_identities = tmpl.n_identities;
        for (std::size_t c = 0; c < C; ++c) {
            const double lg = tmpl.gain_spread * (2.0 * style_rng.uniform() - 1.0);
            const double b = tmpl.bias_spread * (2.0 * style_rng.uniform() - 1.0);
            s.gain.push_back(std::exp(lg));
            s.bias.push_back(b);
            centroid_log_gain[c] += lg / static_cast<double>(tmpl.k_source);
            centroid_bias[c] += b / static_cast<double>(tmpl.k_source);
        }
        s.validate();
        source_specs.push_back(std::move(s));
    }
    std::vector<DomainSpec> target_specs;
    for (std::size_t t = 0; t < tmpl.k_target; ++t) {
        DomainSpec s = base_spec(tmpl.k_source + t, true);
        s.n_identities = tmpl.n_target_identities;
        for (std::size_t c = 0; c < C; ++c) {
            const double sb = style_rng.uniform() < 0.5 ? -1.0 : 1.0;
            s.gain.push_back(std::exp(centroid_log_gain[c] - tmpl.target_gap * 2.0 * tmpl.gain_spread));
            s.bias.push_back(centroid_bias[c] + sb * tmpl.target_gap * 2.0 * tmpl.bias_spread);
        }
        s.validate();
        target_specs.push_back(std::move(s));
    }

    for (const auto& s : source_specs) {
        RngStream tex_rng(StreamTag::style, {tmpl.seed, s.domain_id, 0x7E47ull});
        const auto texture = smooth_field(C, tmpl.height, tmpl.width, tex_rng);
        out.sources.push_back(render_domain(s, tmpl.n_identities, kTrain, tmpl, basis, texture));
        out.source_tests.push_back(render_domain(s, tmpl.n_test_identities, kTest, tmpl, basis, texture));
    }
    for (const auto& s : target_specs) {
        RngStream tex_rng(StreamTag::style, {tmpl.seed, s.domain_id, 0x7E47ull});
        const auto texture = smooth_field(C, tmpl.height, tmpl.width, tex_rng);
        out.targets.push_back(render_domain(s, tmpl.n_target_identities, kTarget, tmpl, basis, texture));
    }
    return out;
}

DomainBatch sample_batch(const DomainData& data, std::size_t identities, std::size_t instances, RngStream& rng) {
    const std::size_t N = data.spec.n_identities;
    if (identities > N)
        throw ContractError("sample_batch: " + std::to_string(identities) + " identities requested from a domain with " +
                            std::to_string(N));
    if (identities == 0 || instances == 0) throw ContractError("sample_batch: empty batch requested");
    std::vector<std::size_t> ids(N);
    std::iota(ids.begin(), ids.end(), 0);
    for (std::size_t i = 0; i < identities; ++i) std::swap(ids[i], ids[i + rng.index(N - i)]);

    const std::size_t per = data.images.numel() / data.size();
    const Shape& s = data.images.shape();
    DomainBatch batch;
    batch.domain = data.spec.domain_id;
    std::vector<double> pixels;
    pixels.reserve(identities * instances * per);
    for (std::size_t i = 0; i < identities; ++i) {
        auto pool = data.instances_of(ids[i]);
        std::vector<std::size_t> chosen;
        if (pool.size() >= instances) {
            for (std::size_t j = 0; j < instances; ++j) std::swap(pool[j], pool[j + rng.index(pool.size() - j)]);
            chosen.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(instances));
        } else {
            for (std::size_t j = 0; j < instances; ++j) chosen.push_back(pool[rng.index(pool.size())]);
        }
        for (auto idx : chosen) {
            const auto src = data.images.data().subspan(idx * per, per);
            pixels.insert(pixels.end(), src.begin(), src.end());
            batch.labels.push_back(data.labels[idx]);
            batch.views.push_back(data.views[idx]);
        }
    }
    batch.images = Tensor({batch.labels.size(), s[1], s[2], s[3]}, std::move(pixels));
    return batch;
}

double style_gap(const DomainSpec& target, std::span<const DomainSpec> sources) {
    if (sources.empty()) throw ContractError("style_gap needs at least one source");
    double total = 0.0;
    for (const auto& s : sources) {
        if (s.gain.size() != target.gain.size()) throw ShapeError("style_gap: channel count mismatch");
        double d = 0.0;
        for (std::size_t c = 0; c < s.gain.size(); ++c)
            d += std::fabs(std::log(target.gain[c]) - std::log(s.gain[c])) + std::fabs(target.bias[c] - s.bias[c]);
        total += d / static_cast<double>(2 * s.gain.size());
    }
    return total / static_cast<double>(sources.size());
}

DomainData select_instances(const DomainData& data, std::span<const std::size_t> indices) {
    DomainData out;
    out.spec = data.spec;
    out.latents = data.latents;
    out.texture = data.texture;
    const std::size_t per = data.images.numel() / data.size();
    std::vector<double> pixels;
    for (auto idx : indices) {
        if (idx >= data.size()) throw ContractError("select_instances: index out of range");
        const auto src = data.images.data().subspan(idx * per, per);
        pixels.insert(pixels.end(), src.begin(), src.end());
        out.labels.push_back(data.labels[idx]);
        out.views.push_back(data.views[idx]);
    }
    const Shape& s = data.images.shape();
    out.images = Tensor({indices.size(), s[1], s[2], s[3]}, std::move(pixels));
    return out;
}

namespace {

void dump_split(std::vector<NamedTensor>& out, const std::string& prefix, const DomainData& d) {
    auto idx = [](const std::vector<std::size_t>& xs) {
        return Tensor({xs.size()}, std::vector<double>(xs.begin(), xs.end()));
    };
    out.push_back({prefix + ".images", d.images});
    out.push_back({prefix + ".labels", idx(d.labels)});
    out.push_back({prefix + ".views", idx(d.views)});
    std::vector<double> lat;
    for (const auto& z : d.latents) lat.insert(lat.end(), z.begin(), z.end());
    const std::size_t L = d.latents.empty() ? 0 : d.latents.front().size();
    out.push_back({prefix + ".latents", Tensor({d.latents.size(), L}, std::move(lat))});
    out.push_back({prefix + ".texture", Tensor({d.texture.size()}, d.texture)});
}

DomainData load_split(std::span<const NamedTensor> tensors, const std::string& prefix, const DomainSpec& spec) {
    auto idx = [](const Tensor& t) { return std::vector<std::size_t>(t.data().begin(), t.data().end()); };
    DomainData d;
    d.spec = spec;
    d.images = require_tensor(tensors, prefix + ".images");
    d.labels = idx(require_tensor(tensors, prefix + ".labels"));
    d.views = idx(require_tensor(tensors, prefix + ".views"));
    const Tensor& lat = require_tensor(tensors, prefix + ".latents");
    for (std::size_t n = 0; n < lat.shape()[0]; ++n) {
        const auto row = lat.data().subspan(n * lat.shape()[1], lat.shape()[1]);
        d.latents.emplace_back(row.begin(), row.end());
    }
    const auto tex = require_tensor(tensors, prefix + ".texture").data();
    d.texture.assign(tex.begin(), tex.end());
    d.spec.n_identities = d.latents.size();
    if (d.labels.size() != d.images.shape().at(0) || d.views.size() != d.labels.size())
        throw ShapeError("dataset split " + prefix + " has inconsistent lengths");
    return d;
}

}  // namespace

void save_dataset(const SyntheticData& data, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::vector<NamedTensor> tensors;
    nlohmann::json sidecar;
    sidecar["template"] = data.tmpl;
    sidecar["sources"] = nlohmann::json::array();
    sidecar["targets"] = nlohmann::json::array();
    for (std::size_t k = 0; k < data.sources.size(); ++k) {
        dump_split(tensors, "source" + std::to_string(k) + ".train", data.sources[k]);
        dump_split(tensors, "source" + std::to_string(k) + ".test", data.source_tests[k]);
        sidecar["sources"].push_back(data.sources[k].spec);
    }
    for (std::size_t t = 0; t < data.targets.size(); ++t) {
        dump_split(tensors, "target" + std::to_string(t), data.targets[t]);
        sidecar["targets"].push_back(data.targets[t].spec);
    }
    save_tensors(dir / "data.peca", tensors);
    std::ofstream js(dir / "data.json");
    if (!js) throw ContractError("cannot write " + (dir / "data.json").string());
    js << sidecar.dump(2) << '\n';
}

SyntheticData load_dataset(const std::filesystem::path& dir) {
    std::ifstream js(dir / "data.json");
    if (!js) throw ContractError("cannot open " + (dir / "data.json").string());
    nlohmann::json sidecar;
    try {
        sidecar = nlohmann::json::parse(js);
    } catch (const nlohmann::json::exception& e) {
        throw ContractError(std::string("malformed dataset sidecar: ") + e.what());
    }
    const auto tensors = load_tensors(dir / "data.peca");
    SyntheticData data;
    data.tmpl = sidecar.at("template").get<DataTemplate>();
    const auto& sources = sidecar.at("sources");
    for (std::size_t k = 0; k < sources.size(); ++k) {
        const auto spec = sources[k].get<DomainSpec>();
        data.sources.push_back(load_split(tensors, "source" + std::to_string(k) + ".train", spec));
        DomainData test = load_split(tensors, "source" + std::to_string(k) + ".test", spec);
        data.source_tests.push_back(std::move(test));
    }
    const auto& targets = sidecar.at("targets");
    for (std::size_t t = 0; t < targets.size(); ++t)
        data.targets.push_back(load_split(tensors, "target" + std::to_string(t), targets[t].get<DomainSpec>()));
    return data;
}

}  // namespace peca
