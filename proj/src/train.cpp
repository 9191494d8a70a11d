#include "peca/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "json.hpp"
#include "peca/error.hpp"
#include "peca/gcm_memory.hpp"
#include "peca/ops.hpp"
#include "peca/optim.hpp"

namespace peca {
namespace {

double mean_map(const std::vector<DomainScore>& xs, bool rank1) {
    if (xs.empty()) return 0.0;
    double s = 0.0;
    for (const auto& x : xs) s += rank1 ? x.score.rank1 : x.score.map;
    return s / static_cast<double>(xs.size());
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

double MetricsReport::source_map() const { return mean_map(source, false); }
double MetricsReport::source_rank1() const { return mean_map(source, true); }
double MetricsReport::target_map() const { return mean_map(target, false); }
double MetricsReport::target_rank1() const { return mean_map(target, true); }

void MetricsReport::write_metrics_csv(std::ostream& out) const {
    out << "epoch,lr,loss_id,loss_g,loss\n";
    for (const auto& e : epochs)
        out << e.epoch << ',' << fmt(e.lr) << ',' << fmt(e.loss_id) << ',' << fmt(e.loss_g) << ',' << fmt(e.loss)
            << '\n';
}

void MetricsReport::write_report_json(std::ostream& out) const {
    nlohmann::json j;
    auto scores = [](const std::vector<DomainScore>& xs) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& x : xs)
            arr.push_back({{"domain_id", x.domain_id}, {"mAP", x.score.map}, {"rank1", x.score.rank1},
                           {"queries", x.score.valid_queries}});
        return arr;
    };
    j["source"] = scores(source);
    j["target"] = scores(target);
    j["source_mAP"] = source_map();
    j["source_rank1"] = source_rank1();
    j["target_mAP"] = target_map();
    j["target_rank1"] = target_rank1();
    j["wall_seconds"] = wall_seconds;
    if (!epochs.empty()) j["final_loss"] = epochs.back().loss;
    out << j.dump(2) << '\n';
}

std::size_t iterations_per_epoch(const TrainConfig& config, const SyntheticData& data) {
    const std::size_t batch = config.P * config.Kins;
    std::size_t most = 1;
    for (const auto& d : data.sources) most = std::max(most, (d.size() + batch - 1) / batch);
    return most;
}

PrototypeMemory warm_start_memory(const TrainConfig& config, const BackboneParams& params, const SyntheticData& data) {
    std::vector<std::size_t> counts;
    for (const auto& d : data.sources) counts.push_back(d.spec.n_identities);
    const BackboneConfig bcfg = config.backbone_config();
    PrototypeMemory memory = memory_init(counts, bcfg.feature_dim, config.tau, config.beta);
    for (std::size_t k = 0; k < data.sources.size(); ++k) {
        const auto& d = data.sources[k];
        const Tensor v = embed(bcfg, params, d.images);
        const std::size_t dim = bcfg.feature_dim;
        std::vector<double> sums(d.spec.n_identities * dim, 0.0);
        std::vector<std::size_t> counts_k(d.spec.n_identities, 0);
        for (std::size_t i = 0; i < d.size(); ++i) {
            ++counts_k[d.labels[i]];
            double norm = 0.0;
            for (std::size_t j = 0; j < dim; ++j) norm += v.at(i, j) * v.at(i, j);
            norm = std::sqrt(norm);
            if (!(norm > 0.0)) throw NumericsError("zero embedding while initializing the memory");
            for (std::size_t j = 0; j < dim; ++j) sums[d.labels[i] * dim + j] += v.at(i, j) / norm;
        }
        std::vector<ClassRef> refs;
        std::vector<double> rows;
        for (std::size_t n = 0; n < d.spec.n_identities; ++n) {
            if (counts_k[n] == 0) continue;
            refs.push_back({k, n});
            for (std::size_t j = 0; j < dim; ++j) rows.push_back(sums[n * dim + j] / static_cast<double>(counts_k[n]));
        }
        memory_update(memory, Tensor({refs.size(), dim}, std::move(rows)), refs);
    }
    return memory;
}

TrainResult train(const TrainConfig& config, const SyntheticData& data, TrainObserver* observer) {
    config.validate();
    if (data.sources.size() < 2) throw ContractError("train needs at least 2 source domains");
    const auto t0 = std::chrono::steady_clock::now();

    const BackboneConfig bcfg = config.backbone_config();
    BackboneParams params = BackboneParams::init(bcfg, config.seed);
    PrototypeMemory memory = warm_start_memory(config, params, data);

    std::vector<Tensor*> param_ptrs;
    for (std::size_t s = 0; s < params.kernels.size(); ++s) {
        param_ptrs.push_back(&params.kernels[s]);
        param_ptrs.push_back(&params.biases[s]);
    }
    param_ptrs.push_back(&params.projection);
    std::vector<Tensor> snapshot;
    for (auto* p : param_ptrs) snapshot.push_back(*p);
    Adam adam(snapshot);

    const double lambda = config.effective_lambda();
    const std::size_t per_epoch = iterations_per_epoch(config, data);
    LpmObserver* lpm_obs = observer ? observer->lpm_observer() : nullptr;
    MetricsReport report;
    std::size_t iteration = 0;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr = config.learning_rate(epoch);
        EpochMetrics em{epoch, lr, 0.0, 0.0, 0.0};
        for (std::size_t it = 0; it < per_epoch; ++it, ++iteration) {
            IterationStats stats{iteration, epoch, lr, 0.0, 0.0, 0.0, lambda};
            try {
                Graph g;
                const BackboneVars vars = bind_params(g, params, true);
                const LpmContext lpm_ctx{config.seed, iteration, config.eps_num, nullptr, lpm_obs};

                std::vector<Var> v_hats, id_losses;
                std::vector<std::vector<ClassRef>> labels;
                for (std::size_t k = 0; k < data.sources.size(); ++k) {
                    RngStream rng(StreamTag::sampler, {config.seed, iteration, k});
                    const DomainBatch batch = sample_batch(data.sources[k], config.P, config.Kins, rng);
                    const std::vector<std::size_t> domains(batch.labels.size(), k);
                    const auto out = backbone_forward(g.constant(batch.images), vars, bcfg, Mode::train,
                                                      config.lpm_enabled, domains, lpm_ctx);
                    std::vector<ClassRef> refs;
                    for (auto y : batch.labels) refs.push_back({k, y});
                    id_losses.push_back(identity_loss(memory_classify(out.v, memory), refs));
                    // Prototypes live on the unit sphere; calibration and the
                    // EMA refresh see v_hat on the same scale.
                    v_hats.push_back(l2_normalize(out.v));
                    labels.push_back(std::move(refs));
                }
                Var loss_id = id_losses.front();
                for (std::size_t k = 1; k < id_losses.size(); ++k) loss_id = add(loss_id, id_losses[k]);
                loss_id = scale(loss_id, 1.0 / static_cast<double>(id_losses.size()));

                Var loss = loss_id;
                stats.loss_id = loss_id.value().item();
                if (config.gcm_enabled) {
                    const GlobalMoments gm = global_moments(memory);
                    if (observer) observer->on_event(TrainEvent::global_moments, iteration);
                    const Var loss_g = calibration_loss(v_hats, gm, config.eps_num);
                    stats.loss_g = loss_g.value().item();
                    loss = add(loss_id, scale(loss_g, lambda));
                }
                stats.loss = loss.value().item();

                const Gradients grads = g.backward(loss);
                const auto leaves = vars.all();
                std::vector<std::span<const double>> grad_spans;
                for (std::size_t i = 0; i < leaves.size(); ++i) {
                    const auto gr = grads.raw(leaves[i].id());
                    for (double x : gr)
                        if (!std::isfinite(x)) throw NumericsError("non-finite gradient");
                    grad_spans.push_back(gr);
                }
                adam.step(param_ptrs, grad_spans, lr);
                if (observer) observer->on_event(TrainEvent::optimizer_step, iteration);

                for (std::size_t k = 0; k < v_hats.size(); ++k) memory_update(memory, v_hats[k].value(), labels[k]);
                if (observer) observer->on_event(TrainEvent::memory_update, iteration);
            } catch (const NumericsError& e) {
                throw NumericsError("training diverged at iteration " + std::to_string(iteration) + ": " + e.what());
            }
            em.loss_id += stats.loss_id / static_cast<double>(per_epoch);
            em.loss_g += stats.loss_g / static_cast<double>(per_epoch);
            em.loss += stats.loss / static_cast<double>(per_epoch);
            if (observer) observer->on_iteration(stats);
        }
        report.epochs.push_back(em);
    }

    Checkpoint checkpoint{bcfg, std::move(params), std::move(memory)};
    for (const auto& d : data.source_tests)
        report.source.push_back({d.spec.domain_id, evaluate_domain(checkpoint, d, config.metric)});
    for (const auto& d : data.targets)
        report.target.push_back({d.spec.domain_id, evaluate_domain(checkpoint, d, config.metric)});
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {std::move(checkpoint), std::move(report)};
}

}  // namespace peca
