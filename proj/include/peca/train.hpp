#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "peca/checkpoint.hpp"
#include "peca/config.hpp"
#include "peca/evaluate.hpp"
#include "peca/lpm.hpp"
#include "peca/synthdata.hpp"

namespace peca {

struct EpochMetrics {
    std::size_t epoch = 0;
    double lr = 0.0;
    double loss_id = 0.0;
    double loss_g = 0.0;
    double loss = 0.0;
};

struct DomainScore {
    std::size_t domain_id = 0;
    RetrievalScore score;
};

struct MetricsReport {
    std::vector<EpochMetrics> epochs;
    std::vector<DomainScore> source;  // held-out identities of each source domain
    std::vector<DomainScore> target;
    double wall_seconds = 0.0;

    double source_map() const;
    double source_rank1() const;
    double target_map() const;
    double target_rank1() const;

    // Epoch rows only; byte-identical across runs with the same inputs.
    void write_metrics_csv(std::ostream& out) const;
    void write_report_json(std::ostream& out) const;
};

// Points in one training iteration, in the order they occur.
enum class TrainEvent { global_moments, optimizer_step, memory_update };

struct IterationStats {
    std::size_t iteration = 0;
    std::size_t epoch = 0;
    double lr = 0.0;
    double loss_id = 0.0;
    double loss_g = 0.0;
    double loss = 0.0;
    double lambda = 0.0;  // effective weight of loss_g
};

class TrainObserver {
public:
    virtual ~TrainObserver() = default;
    virtual void on_event(TrainEvent, std::size_t /*iteration*/) {}
    virtual void on_iteration(const IterationStats&) {}
    // Receives every LPM application when set.
    virtual LpmObserver* lpm_observer() { return nullptr; }
};

struct TrainResult {
    Checkpoint checkpoint;
    MetricsReport report;
};

std::size_t iterations_per_epoch(const TrainConfig& config, const SyntheticData& data);

// Prototypes set to the normalized mean clean embedding of each source
// training identity under `params`.
PrototypeMemory warm_start_memory(const TrainConfig& config, const BackboneParams& params, const SyntheticData& data);

// Per iteration: one PK batch per source domain -> perturbed forward ->
// L = mean_k L_id + lambda * L_g -> Adam step -> EMA memory refresh.
// Non-finite values abort with NumericsError naming the iteration.
TrainResult train(const TrainConfig& config, const SyntheticData& data, TrainObserver* observer = nullptr);

}  // namespace peca
