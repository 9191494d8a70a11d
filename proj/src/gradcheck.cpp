#include "peca/gradcheck.hpp"

#include <algorithm>
#include <ostream>

#include "peca/backbone.hpp"
#include "peca/finite_diff.hpp"
#include "peca/gcm_memory.hpp"
#include "peca/ops.hpp"
#include "peca/rng.hpp"

namespace peca {
namespace {

struct TinyProblem {
    BackboneConfig config;
    BackboneParams params;
    std::vector<Tensor> images;  // one [2, C, H, W] batch per domain
    std::vector<std::vector<ClassRef>> labels;
    PrototypeMemory memory{{2, 2}, 4};
};

TinyProblem make_problem(std::uint64_t seed) {
    TinyProblem p;
    p.config.in_channels = 2;
    p.config.stage_channels = {3, 3};
    p.config.stage_strides = {1, 2};
    p.config.feature_dim = 4;
    p.config.perturb_plan = PerturbPlan::all;
    p.params = BackboneParams::init(p.config, seed);
    RngStream rng(StreamTag::test, {seed, 1});
    // Nonzero biases keep pre-activations away from exact zeros.
    for (auto& b : p.params.biases) {
        std::vector<double> v(b.numel());
        for (auto& x : v) x = 0.1 * rng.normal();
        b = Tensor(b.shape(), std::move(v));
    }
    for (std::size_t k = 0; k < 2; ++k) {
        std::vector<double> px(2 * 2 * 4 * 4);
        for (auto& x : px) x = rng.normal();
        p.images.emplace_back(Shape{2, 2, 4, 4}, std::move(px));
        p.labels.push_back({{k, 0}, {k, 1}});
    }
    p.memory = PrototypeMemory({2, 2}, p.config.feature_dim, 0.5, 0.8);
    for (std::size_t k = 0; k < 2; ++k)
        for (std::size_t n = 0; n < 2; ++n) {
            std::vector<double> v(p.config.feature_dim);
            for (auto& x : v) x = rng.normal();
            p.memory.write_normalized({k, n}, v);
        }
    return p;
}

// Builds L on a fresh graph. Parameters are leaves in (kernel, bias) stage
// order followed by the projection.
Var build_loss(Graph& g, const TinyProblem& p, const BackboneParams& params, double lambda, LpmFreeze& freeze,
               std::vector<Var>* leaves) {
    const BackboneVars vars = bind_params(g, params, true);
    if (leaves) *leaves = vars.all();
    const LpmContext ctx{17, 0, kEpsNum, nullptr, nullptr, &freeze};
    std::vector<Var> v_hats;
    Var loss_id;
    for (std::size_t k = 0; k < p.images.size(); ++k) {
        const std::vector<std::size_t> domains(2, k);
        const auto out = backbone_forward(g.constant(p.images[k]), vars, p.config, Mode::train, true, domains, ctx);
        const Var l = identity_loss(memory_classify(out.v, p.memory), p.labels[k]);
        loss_id = k == 0 ? l : add(loss_id, l);
        v_hats.push_back(l2_normalize(out.v));
    }
    loss_id = scale(loss_id, 1.0 / static_cast<double>(p.images.size()));
    if (lambda == 0.0) return loss_id;
    return add(loss_id, scale(calibration_loss(v_hats, global_moments(p.memory)), lambda));
}

std::vector<std::pair<std::string, Tensor*>> blocks_of(BackboneParams& params) {
    std::vector<std::pair<std::string, Tensor*>> out;
    for (std::size_t s = 0; s < params.kernels.size(); ++s) {
        out.emplace_back("stage" + std::to_string(s) + ".kernel", &params.kernels[s]);
        out.emplace_back("stage" + std::to_string(s) + ".bias", &params.biases[s]);
    }
    out.emplace_back("projection", &params.projection);
    return out;
}

}  // namespace

std::vector<std::string> GradcheckReport::failing_blocks(double tolerance) const {
    std::vector<std::string> out;
    for (const auto& b : blocks)
        if (!(b.max_rel_error < tolerance)) out.push_back(b.name);
    return out;
}

void GradcheckReport::print(std::ostream& out, double tolerance) const {
    out << "gradcheck lambda=" << lambda << " params=" << parameter_count << " loss=" << loss << '\n';
    for (const auto& b : blocks)
        out << "  " << b.name << " (" << b.size << "): max rel err " << b.max_rel_error
            << (b.max_rel_error < tolerance ? "" : "  FAIL") << '\n';
    out << "  overall max rel err " << max_rel_error << (passed ? "  PASS" : "  FAIL") << '\n';
}

GradcheckReport gradcheck(const GradcheckConfig& config) {
    const TinyProblem problem = make_problem(config.seed);
    GradcheckReport report;
    report.lambda = config.lambda;
    report.parameter_count = problem.params.parameter_count();

    Graph g;
    if (config.corrupt_op) g.inject_fault(*config.corrupt_op, 2.0);
    // The first build records the LPM noise and dispersion; finite-difference
    // probes replay them, matching the constants that backward assumes.
    LpmFreeze freeze;
    std::vector<Var> leaves;
    const Var loss = build_loss(g, problem, problem.params, config.lambda, freeze, &leaves);
    report.loss = loss.value().item();
    const Gradients grads = g.backward(loss);

    BackboneParams probe = problem.params;
    const auto blocks = blocks_of(probe);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        const auto& [name, slot] = blocks[i];
        const Tensor original = *slot;
        const ScalarFn f = [&, slot = slot](const Tensor& x) {
            *slot = x;
            Graph fg;
            return build_loss(fg, problem, probe, config.lambda, freeze, nullptr).value().item();
        };
        const Tensor numeric = finite_diff_grad(f, original, config.step);
        *slot = original;
        const Tensor analytic = grads.of(leaves[i]);
        const double err = max_relative_error(analytic, numeric);
        report.blocks.push_back({name, original.numel(), err});
        report.max_rel_error = std::max(report.max_rel_error, err);
    }
    report.passed = report.max_rel_error < config.tolerance;
    return report;
}

}  // namespace peca
