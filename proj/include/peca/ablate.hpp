#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "peca/config.hpp"
#include "peca/synthdata.hpp"

namespace peca {

struct AblationSetting {
    std::string study;  // components | lambda | placement
    std::string name;
    bool lpm_enabled = true;
    bool gcm_enabled = true;
    double lambda = 1.0;
    PerturbPlan plan = PerturbPlan::all;

    TrainConfig apply(TrainConfig base) const;
};

// {baseline, +LPM, +GCM, full}
std::vector<AblationSetting> component_settings(const TrainConfig& base);
// full model with lambda in {0.1, 1, 10, 100}
std::vector<AblationSetting> lambda_settings(const TrainConfig& base);
// full model with perturb_plan in {none, shallow, deep, all}
std::vector<AblationSetting> placement_settings(const TrainConfig& base);
// Settings for a comma-separated list of studies or setting names
// ("components", "lambda", "placement", "all", or e.g. "baseline,full").
std::vector<AblationSetting> resolve_settings(const TrainConfig& base, const std::string& selection);

struct AblationRow {
    AblationSetting setting;
    std::uint64_t seed = 0;
    double source_map = 0.0;
    double source_rank1 = 0.0;
    double target_map = 0.0;
    double target_rank1 = 0.0;
};

struct AblationSummary {
    AblationSetting setting;
    double source_map = 0.0;  // medians over seeds
    double source_rank1 = 0.0;
    double target_map = 0.0;
    double target_rank1 = 0.0;
    double target_map_min = 0.0;
    double target_map_max = 0.0;
};

struct AblationTable {
    std::vector<AblationRow> rows;  // one per (setting, seed), setting-major

    std::vector<AblationSummary> summarize() const;
    const AblationSummary& summary(const std::vector<AblationSummary>& all, const std::string& study,
                                   const std::string& name) const;
    void write_csv(std::ostream& out) const;
    void write_summary_csv(std::ostream& out) const;
};

double median(std::vector<double> xs);

using AblationProgress = std::function<void(const AblationRow&)>;

// Trains every (setting, seed) pair on the same data. Identical settings
// (same switches, lambda and plan) are trained once and reused across studies.
AblationTable ablate(const TrainConfig& base, const SyntheticData& data, std::span<const AblationSetting> settings,
                     std::span<const std::uint64_t> seeds, const AblationProgress& progress = {});

}  // namespace peca
