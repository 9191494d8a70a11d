#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace peca {

// Purpose tags keep streams for different consumers disjoint even when the
// remaining key components coincide.
enum class StreamTag : std::uint64_t {
    lpm = 1,
    sampler = 2,
    render = 3,
    param_init = 4,
    latent = 5,
    style = 6,
    test = 99,
};

// Deterministic random stream keyed by a tuple of integers, e.g.
// (seed, iteration, domain, stage). Same key, same sequence.
class RngStream {
public:
    RngStream(StreamTag tag, std::initializer_list<std::uint64_t> key);

    double normal() { return normal_(engine_); }
    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
    // Uniform integer in [0, n).
    std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_); }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace peca
