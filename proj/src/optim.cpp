#include "peca/optim.hpp"

#include <cmath>

#include "peca/error.hpp"

namespace peca {

Adam::Adam(std::span<const Tensor> params, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& p : params) {
        m_.emplace_back(p.numel(), 0.0);
        v_.emplace_back(p.numel(), 0.0);
    }
}

void Adam::step(std::vector<Tensor*> params, std::span<const std::span<const double>> grads, double lr) {
    if (params.size() != m_.size() || grads.size() != m_.size())
        throw ContractError("Adam::step: parameter list does not match the optimizer state");
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        if (grads[i].size() != p.numel()) throw ShapeError("Adam::step: gradient size mismatch");
        std::vector<double> next = p.values();
        for (std::size_t j = 0; j < next.size(); ++j) {
            const double g = grads[i][j];
            m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * g;
            v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * g * g;
            next[j] -= lr * (m_[i][j] / c1) / (std::sqrt(v_[i][j] / c2) + eps_);
        }
        p = Tensor(p.shape(), std::move(next));
    }
}

}  // namespace peca
