#include "peca/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "peca/error.hpp"
#include "peca/json_io.hpp"

namespace peca {

std::string_view to_string(Metric metric) { return metric == Metric::cosine ? "cosine" : "euclidean"; }

Metric parse_metric(std::string_view text) {
    if (text == "cosine") return Metric::cosine;
    if (text == "euclidean") return Metric::euclidean;
    throw ContractError("unknown metric '" + std::string(text) + "'");
}

void TrainConfig::validate() const {
    if (!(lambda >= 0.0)) throw ContractError("lambda must be non-negative");
    if (!(beta >= 0.0 && beta <= 1.0)) throw ContractError("beta must lie in [0, 1]");
    if (!(tau > 0.0)) throw ContractError("tau must be positive");
    if (epochs < 1) throw ContractError("epochs must be at least 1");
    if (!(base_lr > 0.0)) throw ContractError("base_lr must be positive");
    if (P < 1 || Kins < 1) throw ContractError("P and Kins must be positive");
    if (P * Kins < 2) throw ContractError("per-domain batches need at least 2 samples");
    if (!(eps_num >= 0.0)) throw ContractError("eps_num must be non-negative");
    if (P > data.n_identities) throw ContractError("P exceeds identities per source domain");
    if (backbone.in_channels != data.channels)
        throw ContractError("backbone in_channels must equal data channels");
    backbone_config().validate();
    data.validate();
}

std::size_t TrainConfig::resolved_warmup() const {
    if (warmup_epochs) return *warmup_epochs;
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(0.1 * static_cast<double>(epochs))));
}

std::vector<std::size_t> TrainConfig::resolved_milestones() const {
    if (milestones) return *milestones;
    const auto e = static_cast<double>(epochs);
    return {static_cast<std::size_t>(std::lround(e * 30.0 / 60.0)),
            static_cast<std::size_t>(std::lround(e * 50.0 / 60.0))};
}

double TrainConfig::learning_rate(std::size_t epoch) const {
    const std::size_t warm = resolved_warmup();
    double lr = base_lr;
    if (epoch < warm) lr *= static_cast<double>(epoch + 1) / static_cast<double>(warm);
    for (auto m : resolved_milestones())
        if (epoch >= m) lr *= 0.1;
    return lr;
}

BackboneConfig TrainConfig::backbone_config() const {
    BackboneConfig c = backbone;
    c.perturb_plan = perturb_plan;
    return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ContractError("cannot open config " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ContractError("malformed config " + path.string() + ": " + e.what());
    }
    return j.get<TrainConfig>();
}

}  // namespace peca
