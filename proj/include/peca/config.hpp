#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "peca/backbone.hpp"
#include "peca/gcm_memory.hpp"
#include "peca/lpm.hpp"
#include "peca/synthdata.hpp"

namespace peca {

enum class Metric { cosine, euclidean };

std::string_view to_string(Metric metric);
Metric parse_metric(std::string_view text);

struct TrainConfig {
    double lambda = 1.0;
    double beta = kDefaultBeta;
    double tau = kDefaultTau;
    std::size_t epochs = 20;
    std::optional<std::size_t> warmup_epochs;          // default: 10% of epochs, at least 1
    double base_lr = 3e-3;
    std::optional<std::vector<std::size_t>> milestones;  // default: 30/60 and 50/60 of epochs
    std::size_t P = 4;
    std::size_t Kins = 4;
    PerturbPlan perturb_plan = PerturbPlan::all;
    bool lpm_enabled = true;
    bool gcm_enabled = true;
    std::uint64_t seed = 0;
    double eps_num = kEpsNum;
    Metric metric = Metric::cosine;
    BackboneConfig backbone;
    DataTemplate data;

    void validate() const;
    std::size_t resolved_warmup() const;
    std::vector<std::size_t> resolved_milestones() const;
    // Linear warmup to base_lr, then x0.1 at each milestone reached.
    double learning_rate(std::size_t epoch) const;
    // Backbone config with this run's perturbation plan applied.
    BackboneConfig backbone_config() const;
    // Weight actually applied to the calibration loss.
    double effective_lambda() const { return gcm_enabled ? lambda : 0.0; }
};

TrainConfig load_train_config(const std::filesystem::path& path);

}  // namespace peca
