#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "peca/graph.hpp"
#include "peca/lpm.hpp"
#include "peca/serialize.hpp"

namespace peca {

// (domain, identity) coordinates of a prototype slot.
struct ClassRef {
    std::size_t domain = 0;
    std::size_t identity = 0;
    friend bool operator==(const ClassRef&, const ClassRef&) = default;
};

inline constexpr double kDefaultTau = 0.05;
inline constexpr double kDefaultBeta = 0.8;

// Per-domain, per-identity prototype table. Initialized prototypes have unit
// L2 norm. The table is a plain buffer: nothing differentiates through it.
class PrototypeMemory {
public:
    PrototypeMemory(std::vector<std::size_t> identity_counts, std::size_t dim, double tau = kDefaultTau,
                    double beta = kDefaultBeta);

    std::size_t num_domains() const { return banks_.size(); }
    std::size_t dim() const { return dim_; }
    double tau() const { return tau_; }
    double beta() const { return beta_; }
    std::size_t identity_count(std::size_t domain) const { return bank(domain).count; }
    std::size_t total_slots() const;

    bool initialized(ClassRef ref) const;
    std::size_t initialized_count() const;
    std::size_t initialized_count(std::size_t domain) const;
    std::span<const double> prototype(ClassRef ref) const;

    // Initialized slots in (domain, identity) order; this is the column
    // order of memory_classify's logits.
    std::vector<ClassRef> classes() const;
    std::optional<std::size_t> class_index(ClassRef ref) const;

    // Stores value / ||value|| and marks the slot initialized.
    void write_normalized(ClassRef ref, std::span<const double> value);

    std::vector<NamedTensor> to_named() const;
    static PrototypeMemory from_named(std::span<const NamedTensor> tensors);

private:
    struct Bank {
        std::size_t count = 0;
        std::vector<double> prototypes;  // count x dim
        std::vector<std::uint8_t> initialized;
    };
    const Bank& bank(std::size_t domain) const;
    void check(ClassRef ref) const;

    std::vector<Bank> banks_;
    std::size_t dim_ = 0;
    double tau_ = kDefaultTau;
    double beta_ = kDefaultBeta;
};

PrototypeMemory memory_init(std::vector<std::size_t> identity_counts, std::size_t dim, double tau = kDefaultTau,
                            double beta = kDefaultBeta);

struct GlobalMoments {
    Tensor mu_g;     // [d]
    Tensor sigma_g;  // [d]
};

// Domain-balanced mean and standard deviation of the initialized
// prototypes: every domain with at least one initialized slot weighs 1/K,
// every slot inside it 1/N^k.
GlobalMoments global_moments(const PrototypeMemory& memory);

// (1/K) sum_k ||mean(v_k) - mu_g||_1 + ||std(v_k) - sigma_g||_1 with batch
// statistics over axis 0 and std = sqrt(var + eps_num).
Var calibration_loss(std::span<const Var> v_hat_by_domain, const GlobalMoments& gm, double eps_num = kEpsNum);

struct MemoryLogits {
    Var logits;  // [B, J], cos(v, M_j) / tau
    std::vector<ClassRef> classes;
};

MemoryLogits memory_classify(Var v_hat, const PrototypeMemory& memory);

// Softmax cross-entropy of each row against its target prototype, averaged.
Var identity_loss(const MemoryLogits& logits, std::span<const ClassRef> targets);

// EMA refresh, folded in sample order: M <- normalize(beta * M + (1 - beta) * v).
// An uninitialized target takes normalize(v) directly.
void memory_update(PrototypeMemory& memory, const Tensor& v_hat, std::span<const ClassRef> labels, double beta);
inline void memory_update(PrototypeMemory& memory, const Tensor& v_hat, std::span<const ClassRef> labels) {
    memory_update(memory, v_hat, labels, memory.beta());
}

}  // namespace peca
