#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <utility>
#include <span>
#include <vector>

#include "peca/graph.hpp"
#include "peca/rng.hpp"
#include "peca/tensor.hpp"

namespace peca {

// Numerical floor for standard deviations: sigma = sqrt(var + kEpsNum), and
// perturbed sigmas are clamped to at least kEpsNum.
inline constexpr double kEpsNum = 1e-5;

// Per-instance, per-channel moments of a [B, C, H, W] feature map, both [B, C].
struct MomentPair {
    Var mu;
    Var sigma;
};

// Gaussian factors for one LPM application, each [B, C].
struct NoiseDraw {
    Tensor eps_mu;
    Tensor eps_sigma;
};

struct PerturbedMoments {
    Var mu_hat;
    Var sigma_hat;
    Tensor eps_mu;
    Tensor eps_sigma;
    Tensor h_mu;     // [C]
    Tensor h_sigma;  // [C]
};

MomentPair instance_moments(Var e, double eps_num = kEpsNum);

// Per-channel population standard deviation across the batch axis of a
// [B, C] moment table. Plain values; nothing flows back through it.
Tensor dispersion(const Tensor& moments);

NoiseDraw draw_noise(std::size_t batch, std::size_t channels, RngStream& rng);

// mu_hat = mu + eps_mu * h_mu, sigma_hat = max(sigma + eps_sigma * h_sigma, eps_num).
PerturbedMoments perturb_moments(const MomentPair& mp, const Tensor& h_mu, const Tensor& h_sigma,
                                 const NoiseDraw& noise, double eps_num = kEpsNum);
PerturbedMoments perturb_moments(const MomentPair& mp, const Tensor& h_mu, const Tensor& h_sigma, RngStream& rng,
                                 double eps_num = kEpsNum);

// e_hat = sigma_hat * (e - mu) / sigma + mu_hat, per instance and channel.
Var reassemble(Var e, const MomentPair& mp, const PerturbedMoments& pm);

struct LpmRecord {
    std::size_t domain = 0;
    std::size_t stage = 0;
    std::uint64_t iteration = 0;
    double mean_abs_dmu = 0.0;     // mean |mu_hat - mu|
    double mean_abs_dsigma = 0.0;  // mean |sigma_hat - sigma|
};

class LpmObserver {
public:
    virtual ~LpmObserver() = default;
    virtual void on_apply(const LpmRecord& record) = 0;
};

// Collects invocation records; writes them as CSV on request.
class LpmLog : public LpmObserver {
public:
    void on_apply(const LpmRecord& record) override { records_.push_back(record); }
    const std::vector<LpmRecord>& records() const { return records_; }
    std::size_t count_for_stage(std::size_t stage) const;
    void write_csv(std::ostream& out) const;

private:
    std::vector<LpmRecord> records_;
};

// Records each application's noise and dispersion the first time a
// (domain, stage) pair is seen and replays them afterwards, so repeated
// evaluations perturb with identical constants.
class LpmFreeze {
public:
    struct Entry {
        NoiseDraw noise;
        Tensor h_mu;
        Tensor h_sigma;
    };
    const Entry* find(std::size_t domain, std::size_t stage) const;
    void store(std::size_t domain, std::size_t stage, Entry entry);
    std::size_t size() const { return entries_.size(); }

private:
    std::map<std::pair<std::size_t, std::size_t>, Entry> entries_;
};

struct LpmContext {
    std::uint64_t seed = 0;
    std::uint64_t iteration = 0;
    double eps_num = kEpsNum;
    // Test hook: use these factors instead of drawing from the stream.
    const NoiseDraw* injected_noise = nullptr;
    LpmObserver* observer = nullptr;
    LpmFreeze* freeze = nullptr;
};

// Noise stream for one (seed, iteration, domain, stage) application.
RngStream lpm_stream(std::uint64_t seed, std::uint64_t iteration, std::size_t domain, std::size_t stage);

// Full local perturbation of one single-domain batch. Disabled returns `e`
// itself. `sample_domains` holds one domain id per instance; a mixed batch
// raises ContractError.
Var lpm_apply(Var e, std::span<const std::size_t> sample_domains, std::size_t stage, bool enabled,
              const LpmContext& ctx);

}  // namespace peca
