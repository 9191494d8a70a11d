#include "peca/gcm_memory.hpp"

#include <cmath>

#include "peca/error.hpp"
#include "peca/ops.hpp"

namespace peca {
namespace {

double l2_norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

}  // namespace

PrototypeMemory::PrototypeMemory(std::vector<std::size_t> identity_counts, std::size_t dim, double tau, double beta)
    : dim_(dim), tau_(tau), beta_(beta) {
    if (dim == 0) throw ContractError("memory dimension must be positive");
    if (identity_counts.empty()) throw ContractError("memory needs at least one domain");
    if (!(tau > 0.0)) throw ContractError("memory temperature must be positive");
    if (!(beta >= 0.0 && beta <= 1.0)) throw ContractError("EMA momentum must lie in [0, 1]");
    for (auto n : identity_counts) {
        if (n == 0) throw ContractError("every domain needs at least one identity");
        banks_.push_back({n, std::vector<double>(n * dim, 0.0), std::vector<std::uint8_t>(n, 0)});
    }
}

const PrototypeMemory::Bank& PrototypeMemory::bank(std::size_t domain) const {
    if (domain >= banks_.size()) throw ContractError("domain " + std::to_string(domain) + " out of range");
    return banks_[domain];
}

void PrototypeMemory::check(ClassRef ref) const {
    if (ref.identity >= bank(ref.domain).count)
        throw ContractError("identity " + std::to_string(ref.identity) + " out of range for domain " +
                            std::to_string(ref.domain));
}

std::size_t PrototypeMemory::total_slots() const {
    std::size_t n = 0;
    for (const auto& b : banks_) n += b.count;
    return n;
}

bool PrototypeMemory::initialized(ClassRef ref) const {
    check(ref);
    return banks_[ref.domain].initialized[ref.identity] != 0;
}

std::size_t PrototypeMemory::initialized_count(std::size_t domain) const {
    std::size_t n = 0;
    for (auto f : bank(domain).initialized) n += f;
    return n;
}

std::size_t PrototypeMemory::initialized_count() const {
    std::size_t n = 0;
    for (std::size_t k = 0; k < banks_.size(); ++k) n += initialized_count(k);
    return n;
}

std::span<const double> PrototypeMemory::prototype(ClassRef ref) const {
    check(ref);
    return std::span<const double>(banks_[ref.domain].prototypes).subspan(ref.identity * dim_, dim_);
}

std::vector<ClassRef> PrototypeMemory::classes() const {
    std::vector<ClassRef> out;
    for (std::size_t k = 0; k < banks_.size(); ++k)
        for (std::size_t n = 0; n < banks_[k].count; ++n)
            if (banks_[k].initialized[n]) out.push_back({k, n});
    return out;
}

std::optional<std::size_t> PrototypeMemory::class_index(ClassRef ref) const {
    if (!initialized(ref)) return std::nullopt;
    std::size_t idx = 0;
    for (std::size_t k = 0; k < ref.domain; ++k) idx += initialized_count(k);
    for (std::size_t n = 0; n < ref.identity; ++n) idx += banks_[ref.domain].initialized[n];
    return idx;
}

void PrototypeMemory::write_normalized(ClassRef ref, std::span<const double> value) {
    check(ref);
    if (value.size() != dim_) throw ShapeError("prototype value has wrong dimension");
    const double norm = l2_norm(value);
    if (!(norm > 0.0) || !std::isfinite(norm))
        throw NumericsError("cannot normalize prototype for domain " + std::to_string(ref.domain) + " identity " +
                            std::to_string(ref.identity));
    Bank& b = banks_[ref.domain];
    for (std::size_t j = 0; j < dim_; ++j) b.prototypes[ref.identity * dim_ + j] = value[j] / norm;
    b.initialized[ref.identity] = 1;
}

std::vector<NamedTensor> PrototypeMemory::to_named() const {
    std::vector<NamedTensor> out;
    out.push_back({"memory.dim", Tensor::vector({static_cast<double>(dim_)})});
    out.push_back({"memory.tau", Tensor::vector({tau_})});
    out.push_back({"memory.beta", Tensor::vector({beta_})});
    std::vector<double> counts;
    for (const auto& b : banks_) counts.push_back(static_cast<double>(b.count));
    out.push_back({"memory.identity_counts", Tensor({counts.size()}, counts)});
    for (std::size_t k = 0; k < banks_.size(); ++k) {
        const auto& b = banks_[k];
        out.push_back({"memory.domain" + std::to_string(k) + ".prototypes", Tensor({b.count, dim_}, b.prototypes)});
        out.push_back({"memory.domain" + std::to_string(k) + ".initialized",
                       Tensor({b.count}, std::vector<double>(b.initialized.begin(), b.initialized.end()))});
    }
    return out;
}

PrototypeMemory PrototypeMemory::from_named(std::span<const NamedTensor> tensors) {
    const auto dim = static_cast<std::size_t>(require_tensor(tensors, "memory.dim")[0]);
    const double tau = require_tensor(tensors, "memory.tau")[0];
    const double beta = require_tensor(tensors, "memory.beta")[0];
    const auto& counts_t = require_tensor(tensors, "memory.identity_counts");
    std::vector<std::size_t> counts(counts_t.data().begin(), counts_t.data().end());
    PrototypeMemory mem(counts, dim, tau, beta);
    for (std::size_t k = 0; k < counts.size(); ++k) {
        const auto& protos = require_tensor(tensors, "memory.domain" + std::to_string(k) + ".prototypes");
        const auto& init = require_tensor(tensors, "memory.domain" + std::to_string(k) + ".initialized");
        if (protos.shape() != Shape{counts[k], dim} || init.shape() != Shape{counts[k]})
            throw ShapeError("memory bank " + std::to_string(k) + " has inconsistent shape");
        auto& bank = mem.banks_[k];
        bank.prototypes = protos.values();
        for (std::size_t n = 0; n < counts[k]; ++n) {
            if (init[n] != 0.0 && init[n] != 1.0)
                throw ContractError("memory bank " + std::to_string(k) + " mask holds a value other than 0/1");
            bank.initialized[n] = init[n] == 1.0 ? 1 : 0;
        }
    }
    return mem;
}

PrototypeMemory memory_init(std::vector<std::size_t> identity_counts, std::size_t dim, double tau, double beta) {
    return PrototypeMemory(std::move(identity_counts), dim, tau, beta);
}

GlobalMoments global_moments(const PrototypeMemory& memory) {
    const std::size_t d = memory.dim();
    std::vector<double> mu(d, 0.0), var(d, 0.0);
    std::size_t active = 0;
    for (std::size_t k = 0; k < memory.num_domains(); ++k) {
        const std::size_t nk = memory.initialized_count(k);
        if (nk == 0) continue;
        ++active;
        std::vector<double> dom(d, 0.0);
        for (std::size_t n = 0; n < memory.identity_count(k); ++n) {
            if (!memory.initialized({k, n})) continue;
            const auto p = memory.prototype({k, n});
            for (std::size_t j = 0; j < d; ++j) dom[j] += p[j];
        }
        for (std::size_t j = 0; j < d; ++j) mu[j] += dom[j] / static_cast<double>(nk);
    }
    if (active == 0) throw EmptyMemoryError("global_moments: memory has no initialized prototypes");
    for (auto& m : mu) m /= static_cast<double>(active);

    for (std::size_t k = 0; k < memory.num_domains(); ++k) {
        const std::size_t nk = memory.initialized_count(k);
        if (nk == 0) continue;
        std::vector<double> dom(d, 0.0);
        for (std::size_t n = 0; n < memory.identity_count(k); ++n) {
            if (!memory.initialized({k, n})) continue;
            const auto p = memory.prototype({k, n});
            for (std::size_t j = 0; j < d; ++j) dom[j] += (p[j] - mu[j]) * (p[j] - mu[j]);
        }
        for (std::size_t j = 0; j < d; ++j) var[j] += dom[j] / static_cast<double>(nk);
    }
    std::vector<double> sigma(d);
    for (std::size_t j = 0; j < d; ++j) sigma[j] = std::sqrt(var[j] / static_cast<double>(active));
    return {Tensor({d}, std::move(mu)), Tensor({d}, std::move(sigma))};
}

Var calibration_loss(std::span<const Var> v_hat_by_domain, const GlobalMoments& gm, double eps_num) {
    if (v_hat_by_domain.empty()) throw ContractError("calibration_loss needs at least one domain batch");
    const std::size_t d = gm.mu_g.numel();
    Graph& g = v_hat_by_domain.front().graph();
    const Var mu_g = g.constant(gm.mu_g);
    const Var sigma_g = g.constant(gm.sigma_g);
    std::vector<Var> terms;
    for (const Var& v : v_hat_by_domain) {
        if (v.value().rank() != 2 || v.shape()[1] != d)
            throw ShapeError("calibration_loss batch " + shape_str(v.shape()) + " vs dimension " + std::to_string(d));
        if (v.shape()[0] < 2) throw ContractError("calibration_loss needs at least 2 samples per domain batch");
        Var mu = mean(v, {0});
        Var sigma = sqrt(add_scalar(variance(v, {0}), eps_num));
        terms.push_back(add(l1_distance(mu, mu_g), l1_distance(sigma, sigma_g)));
    }
    Var total = terms.front();
    for (std::size_t i = 1; i < terms.size(); ++i) total = add(total, terms[i]);
    return scale(total, 1.0 / static_cast<double>(terms.size()));
}

MemoryLogits memory_classify(Var v_hat, const PrototypeMemory& memory) {
    if (v_hat.value().rank() != 2 || v_hat.shape()[1] != memory.dim())
        throw ShapeError("memory_classify input " + shape_str(v_hat.shape()) + " vs dimension " +
                         std::to_string(memory.dim()));
    auto classes = memory.classes();
    if (classes.empty()) throw EmptyMemoryError("memory_classify: no initialized prototypes");
    const std::size_t d = memory.dim(), J = classes.size();
    // [d, J] with one prototype per column; a constant, so the memory never
    // receives gradient.
    std::vector<double> mt(d * J);
    for (std::size_t j = 0; j < J; ++j) {
        const auto p = memory.prototype(classes[j]);
        for (std::size_t i = 0; i < d; ++i) mt[i * J + j] = p[i];
    }
    Graph& g = v_hat.graph();
    Var cosine = matmul(l2_normalize(v_hat), g.constant(Tensor({d, J}, std::move(mt))));
    return {scale(cosine, 1.0 / memory.tau()), std::move(classes)};
}

Var identity_loss(const MemoryLogits& logits, std::span<const ClassRef> targets) {
    std::vector<std::size_t> columns;
    columns.reserve(targets.size());
    for (const auto& t : targets) {
        std::size_t col = logits.classes.size();
        for (std::size_t j = 0; j < logits.classes.size(); ++j)
            if (logits.classes[j] == t) col = j;
        if (col == logits.classes.size())
            throw ContractError("identity_loss: target (domain " + std::to_string(t.domain) + ", identity " +
                                std::to_string(t.identity) + ") has no initialized prototype");
        columns.push_back(col);
    }
    return softmax_cross_entropy(logits.logits, columns);
}

void memory_update(PrototypeMemory& memory, const Tensor& v_hat, std::span<const ClassRef> labels, double beta) {
    if (!(beta >= 0.0 && beta <= 1.0)) throw ContractError("EMA momentum must lie in [0, 1]");
    const std::size_t d = memory.dim();
    if (v_hat.rank() != 2 || v_hat.shape()[1] != d || v_hat.shape()[0] != labels.size())
        throw ShapeError("memory_update batch " + shape_str(v_hat.shape()) + " with " + std::to_string(labels.size()) +
                         " labels");
    std::vector<double> next(d);
    for (std::size_t b = 0; b < labels.size(); ++b) {
        const ClassRef ref = labels[b];
        const auto v = v_hat.data().subspan(b * d, d);
        if (!memory.initialized(ref)) {
            memory.write_normalized(ref, v);
            continue;
        }
        if (beta == 1.0) continue;
        const auto old = memory.prototype(ref);
        for (std::size_t j = 0; j < d; ++j) next[j] = beta * old[j] + (1.0 - beta) * v[j];
        memory.write_normalized(ref, next);
    }
}

}  // namespace peca
