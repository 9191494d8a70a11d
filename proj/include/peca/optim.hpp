#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "peca/tensor.hpp"

namespace peca {

// Adam with bias correction over a fixed list of parameter tensors.
class Adam {
public:
    explicit Adam(std::span<const Tensor> params, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    // params[i] <- params[i] - lr * m_hat / (sqrt(v_hat) + eps)
    void step(std::vector<Tensor*> params, std::span<const std::span<const double>> grads, double lr);
    std::size_t steps() const { return t_; }

private:
    double beta1_, beta2_, eps_;
    std::size_t t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

}  // namespace peca
