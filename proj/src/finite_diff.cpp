#include "peca/finite_diff.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>

#include "peca/error.hpp"

namespace peca {

Tensor finite_diff_grad(const ScalarFn& f, const Tensor& x, double step) {
    if (!(step > 0.0)) throw ContractError("finite_diff_grad: step must be positive");
    const double first = f(x);
    const double second = f(x);
    if (std::bit_cast<std::uint64_t>(first) != std::bit_cast<std::uint64_t>(second))
        throw OracleError("finite_diff_grad: function is not deterministic");

    std::vector<double> probe = x.values();
    std::vector<double> grad(probe.size());
    for (std::size_t i = 0; i < probe.size(); ++i) {
        const double orig = probe[i];
        probe[i] = orig + step;
        const double hi = f(Tensor(x.shape(), probe));
        probe[i] = orig - step;
        const double lo = f(Tensor(x.shape(), probe));
        probe[i] = orig;
        grad[i] = (hi - lo) / (2.0 * step);
    }
    return Tensor(x.shape(), std::move(grad));
}

double max_relative_error(const Tensor& a, const Tensor& b, double floor) {
    if (a.shape() != b.shape()) throw ShapeError("max_relative_error: shape mismatch");
    double worst = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        const double denom = std::max({std::fabs(a[i]), std::fabs(b[i]), floor});
        worst = std::max(worst, std::fabs(a[i] - b[i]) / denom);
    }
    return worst;
}

}  // namespace peca
