#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "peca/graph.hpp"

namespace peca {

struct GradcheckConfig {
    double lambda = 1.0;
    double step = 1e-4;
    double tolerance = 1e-3;
    std::uint64_t seed = 3;
    // Negative-control fixture: corrupt this op's backward rule.
    std::optional<OpKind> corrupt_op;
};

struct BlockError {
    std::string name;
    std::size_t size = 0;
    double max_rel_error = 0.0;
};

struct GradcheckReport {
    double lambda = 0.0;
    std::size_t parameter_count = 0;
    double loss = 0.0;
    std::vector<BlockError> blocks;
    double max_rel_error = 0.0;
    bool passed = false;

    std::vector<std::string> failing_blocks(double tolerance) const;
    void print(std::ostream& out, double tolerance) const;
};

// Compares reverse-mode gradients of L = L_id + lambda * L_g against central
// finite differences on a tiny backbone (two domains, two samples each, LPM on
// every stage with frozen noise).
GradcheckReport gradcheck(const GradcheckConfig& config);

}  // namespace peca
