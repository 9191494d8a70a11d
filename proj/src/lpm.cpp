#include "peca/lpm.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "peca/error.hpp"
#include "peca/ops.hpp"

namespace peca {

MomentPair instance_moments(Var e, double eps_num) {
    if (e.value().rank() != 4) throw ShapeError("instance_moments needs [B, C, H, W], got " + shape_str(e.shape()));
    if (e.shape()[2] * e.shape()[3] == 0) throw ShapeError("instance_moments needs H*W >= 1");
    Var mu = mean(e, {2, 3});
    Var sigma = sqrt(add_scalar(variance(e, {2, 3}), eps_num));
    return {mu, sigma};
}

Tensor dispersion(const Tensor& moments) {
    if (moments.rank() != 2) throw ShapeError("dispersion needs a [B, C] table, got " + shape_str(moments.shape()));
    const std::size_t B = moments.shape()[0], C = moments.shape()[1];
    if (B == 0) throw ShapeError("dispersion of an empty batch");
    std::vector<double> h(C, 0.0);
    for (std::size_t c = 0; c < C; ++c) {
        double m = 0.0;
        for (std::size_t b = 0; b < B; ++b) m += moments.at(b, c);
        m /= static_cast<double>(B);
        double v = 0.0;
        for (std::size_t b = 0; b < B; ++b) v += (moments.at(b, c) - m) * (moments.at(b, c) - m);
        h[c] = std::sqrt(v / static_cast<double>(B));
    }
    return Tensor({C}, std::move(h));
}

NoiseDraw draw_noise(std::size_t batch, std::size_t channels, RngStream& rng) {
    std::vector<double> mu(batch * channels), sigma(batch * channels);
    for (auto& v : mu) v = rng.normal();
    for (auto& v : sigma) v = rng.normal();
    return {Tensor({batch, channels}, std::move(mu)), Tensor({batch, channels}, std::move(sigma))};
}

PerturbedMoments perturb_moments(const MomentPair& mp, const Tensor& h_mu, const Tensor& h_sigma,
                                 const NoiseDraw& noise, double eps_num) {
    const Shape& bc = mp.mu.shape();
    if (bc.size() != 2 || mp.sigma.shape() != bc) throw ShapeError("perturb_moments: moments must be matching [B, C]");
    const std::size_t B = bc[0], C = bc[1];
    if (h_mu.shape() != Shape{C} || h_sigma.shape() != Shape{C})
        throw ShapeError("perturb_moments: dispersion must be [" + std::to_string(C) + "]");
    if (noise.eps_mu.shape() != bc || noise.eps_sigma.shape() != bc)
        throw ShapeError("perturb_moments: noise must be " + shape_str(bc));

    std::vector<double> shift_mu(B * C), shift_sigma(B * C);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c) {
            shift_mu[b * C + c] = noise.eps_mu.at(b, c) * h_mu[c];
            shift_sigma[b * C + c] = noise.eps_sigma.at(b, c) * h_sigma[c];
        }
    Graph& g = mp.mu.graph();
    Var mu_hat = add(mp.mu, g.constant(Tensor(bc, std::move(shift_mu))));
    Var sigma_hat = clamp_min(add(mp.sigma, g.constant(Tensor(bc, std::move(shift_sigma)))), eps_num);
    return {mu_hat, sigma_hat, noise.eps_mu, noise.eps_sigma, h_mu, h_sigma};
}

PerturbedMoments perturb_moments(const MomentPair& mp, const Tensor& h_mu, const Tensor& h_sigma, RngStream& rng,
                                 double eps_num) {
    const NoiseDraw noise = draw_noise(mp.mu.shape()[0], mp.mu.shape()[1], rng);
    return perturb_moments(mp, h_mu, h_sigma, noise, eps_num);
}

Var reassemble(Var e, const MomentPair& mp, const PerturbedMoments& pm) {
    const Shape& s = e.shape();
    if (s.size() != 4 || mp.mu.shape() != Shape{s[0], s[1]}) throw ShapeError("reassemble: moment/feature shape mismatch");
    const Shape col{s[0], s[1], 1, 1};
    Var normalized = div(sub(e, reshape(mp.mu, col)), reshape(mp.sigma, col));
    return add(mul(normalized, reshape(pm.sigma_hat, col)), reshape(pm.mu_hat, col));
}

std::size_t LpmLog::count_for_stage(std::size_t stage) const {
    return static_cast<std::size_t>(
        std::count_if(records_.begin(), records_.end(), [stage](const LpmRecord& r) { return r.stage == stage; }));
}

void LpmLog::write_csv(std::ostream& out) const {
    out << "iteration,domain,stage,mean_abs_dmu,mean_abs_dsigma\n";
    for (const auto& r : records_)
        out << r.iteration << ',' << r.domain << ',' << r.stage << ',' << r.mean_abs_dmu << ',' << r.mean_abs_dsigma
            << '\n';
}

const LpmFreeze::Entry* LpmFreeze::find(std::size_t domain, std::size_t stage) const {
    const auto it = entries_.find({domain, stage});
    return it == entries_.end() ? nullptr : &it->second;
}

void LpmFreeze::store(std::size_t domain, std::size_t stage, Entry entry) {
    entries_.insert_or_assign({domain, stage}, std::move(entry));
}

RngStream lpm_stream(std::uint64_t seed, std::uint64_t iteration, std::size_t domain, std::size_t stage) {
    return RngStream(StreamTag::lpm, {seed, iteration, domain, stage});
}

Var lpm_apply(Var e, std::span<const std::size_t> sample_domains, std::size_t stage, bool enabled,
              const LpmContext& ctx) {
    if (!enabled) return e;
    if (e.value().rank() != 4) throw ShapeError("lpm_apply needs [B, C, H, W], got " + shape_str(e.shape()));
    if (sample_domains.size() != e.shape()[0])
        throw ContractError("lpm_apply: expected one domain id per instance");
    const std::size_t domain = sample_domains.front();
    for (auto d : sample_domains)
        if (d != domain) throw ContractError("lpm_apply: batch mixes domains " + std::to_string(domain) + " and " +
                                             std::to_string(d));

    const MomentPair mp = instance_moments(e, ctx.eps_num);
    const LpmFreeze::Entry* frozen = ctx.freeze ? ctx.freeze->find(domain, stage) : nullptr;
    PerturbedMoments pm = [&] {
        if (frozen) return perturb_moments(mp, frozen->h_mu, frozen->h_sigma, frozen->noise, ctx.eps_num);
        const Tensor h_mu = dispersion(mp.mu.value());
        const Tensor h_sigma = dispersion(mp.sigma.value());
        if (ctx.injected_noise) return perturb_moments(mp, h_mu, h_sigma, *ctx.injected_noise, ctx.eps_num);
        RngStream rng = lpm_stream(ctx.seed, ctx.iteration, domain, stage);
        return perturb_moments(mp, h_mu, h_sigma, rng, ctx.eps_num);
    }();
    if (ctx.freeze && !frozen)
        ctx.freeze->store(domain, stage, {{pm.eps_mu, pm.eps_sigma}, pm.h_mu, pm.h_sigma});

    if (ctx.observer) {
        LpmRecord rec{domain, stage, ctx.iteration, 0.0, 0.0};
        const auto n = static_cast<double>(mp.mu.value().numel());
        for (std::size_t i = 0; i < mp.mu.value().numel(); ++i) {
            rec.mean_abs_dmu += std::fabs(pm.mu_hat.value()[i] - mp.mu.value()[i]) / n;
            rec.mean_abs_dsigma += std::fabs(pm.sigma_hat.value()[i] - mp.sigma.value()[i]) / n;
        }
        ctx.observer->on_apply(rec);
    }
    return reassemble(e, mp, pm);
}

}  // namespace peca
