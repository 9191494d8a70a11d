#include "peca/ablate.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <ostream>
#include <sstream>
#include <tuple>

#include "peca/error.hpp"
#include "peca/train.hpp"

namespace peca {
namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

std::string fmt_lambda(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

// Key identifying settings that lead to the same training run.
auto run_key(const AblationSetting& s, std::uint64_t seed) {
    const bool lpm_effective = s.lpm_enabled && s.plan != PerturbPlan::none;
    return std::make_tuple(lpm_effective, s.gcm_enabled, s.gcm_enabled ? s.lambda : 0.0,
                           lpm_effective ? static_cast<int>(s.plan) : -1, seed);
}

}  // namespace

TrainConfig AblationSetting::apply(TrainConfig base) const {
    base.lpm_enabled = lpm_enabled;
    base.gcm_enabled = gcm_enabled;
    base.lambda = lambda;
    base.perturb_plan = plan;
    return base;
}

std::vector<AblationSetting> component_settings(const TrainConfig& base) {
    const PerturbPlan p = base.perturb_plan;
    return {{"components", "baseline", false, false, base.lambda, p},
            {"components", "+LPM", true, false, base.lambda, p},
            {"components", "+GCM", false, true, base.lambda, p},
            {"components", "full", true, true, base.lambda, p}};
}

std::vector<AblationSetting> lambda_settings(const TrainConfig& base) {
    std::vector<AblationSetting> out;
    for (double l : {0.1, 1.0, 10.0, 100.0})
        out.push_back({"lambda", "lambda=" + fmt_lambda(l), true, true, l, base.perturb_plan});
    return out;
}

std::vector<AblationSetting> placement_settings(const TrainConfig& base) {
    std::vector<AblationSetting> out;
    for (auto p : {PerturbPlan::none, PerturbPlan::shallow, PerturbPlan::deep, PerturbPlan::all})
        out.push_back({"placement", "plan=" + std::string(to_string(p)), true, true, base.lambda, p});
    return out;
}

std::vector<AblationSetting> resolve_settings(const TrainConfig& base, const std::string& selection) {
    std::vector<AblationSetting> everything;
    for (auto& s : component_settings(base)) everything.push_back(s);
    for (auto& s : lambda_settings(base)) everything.push_back(s);
    for (auto& s : placement_settings(base)) everything.push_back(s);

    std::vector<AblationSetting> out;
    std::stringstream ss(selection);
    std::string token;
    while (std::getline(ss, token, ',')) {
        if (token.empty()) continue;
        bool matched = false;
        for (const auto& s : everything)
            if (token == "all" || s.study == token || s.name == token) {
                out.push_back(s);
                matched = true;
            }
        if (!matched) throw ContractError("unknown ablation setting or study '" + token + "'");
    }
    if (out.empty()) throw ContractError("no ablation settings selected");
    return out;
}

double median(std::vector<double> xs) {
    if (xs.empty()) throw ContractError("median of an empty list");
    std::sort(xs.begin(), xs.end());
    const std::size_t n = xs.size();
    return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

std::vector<AblationSummary> AblationTable::summarize() const {
    std::vector<AblationSummary> out;
    std::vector<std::pair<std::string, std::string>> order;
    for (const auto& r : rows) {
        const auto key = std::make_pair(r.setting.study, r.setting.name);
        if (std::find(order.begin(), order.end(), key) == order.end()) order.push_back(key);
    }
    for (const auto& [study, name] : order) {
        std::vector<double> sm, sr, tm, tr;
        AblationSummary s;
        for (const auto& r : rows)
            if (r.setting.study == study && r.setting.name == name) {
                s.setting = r.setting;
                sm.push_back(r.source_map);
                sr.push_back(r.source_rank1);
                tm.push_back(r.target_map);
                tr.push_back(r.target_rank1);
            }
        s.source_map = median(sm);
        s.source_rank1 = median(sr);
        s.target_map = median(tm);
        s.target_rank1 = median(tr);
        s.target_map_min = *std::min_element(tm.begin(), tm.end());
        s.target_map_max = *std::max_element(tm.begin(), tm.end());
        out.push_back(s);
    }
    return out;
}

const AblationSummary& AblationTable::summary(const std::vector<AblationSummary>& all, const std::string& study,
                                              const std::string& name) const {
    for (const auto& s : all)
        if (s.setting.study == study && s.setting.name == name) return s;
    throw ContractError("no ablation summary for " + study + "/" + name);
}

void AblationTable::write_csv(std::ostream& out) const {
    out << "study,setting,lpm_enabled,gcm_enabled,lambda,perturb_plan,seed,source_mAP,source_rank1,target_mAP,"
           "target_rank1\n";
    for (const auto& r : rows)
        out << r.setting.study << ',' << r.setting.name << ',' << r.setting.lpm_enabled << ','
            << r.setting.gcm_enabled << ',' << fmt_lambda(r.setting.lambda) << ',' << to_string(r.setting.plan) << ','
            << r.seed << ',' << fmt(r.source_map) << ',' << fmt(r.source_rank1) << ',' << fmt(r.target_map) << ','
            << fmt(r.target_rank1) << '\n';
}

void AblationTable::write_summary_csv(std::ostream& out) const {
    out << "study,setting,lpm_enabled,gcm_enabled,lambda,perturb_plan,median_source_mAP,median_source_rank1,"
           "median_target_mAP,median_target_rank1,min_target_mAP,max_target_mAP\n";
    for (const auto& s : summarize())
        out << s.setting.study << ',' << s.setting.name << ',' << s.setting.lpm_enabled << ','
            << s.setting.gcm_enabled << ',' << fmt_lambda(s.setting.lambda) << ',' << to_string(s.setting.plan)
            << ',' << fmt(s.source_map) << ',' << fmt(s.source_rank1) << ',' << fmt(s.target_map) << ','
            << fmt(s.target_rank1) << ',' << fmt(s.target_map_min) << ',' << fmt(s.target_map_max) << '\n';
}

AblationTable ablate(const TrainConfig& base, const SyntheticData& data, std::span<const AblationSetting> settings,
                     std::span<const std::uint64_t> seeds, const AblationProgress& progress) {
    if (seeds.empty()) throw ContractError("ablate needs at least one seed");
    AblationTable table;
    std::map<decltype(run_key(settings[0], 0)), AblationRow> cache;
    for (const auto& setting : settings)
        for (auto seed : seeds) {
            const auto key = run_key(setting, seed);
            AblationRow row;
            if (auto it = cache.find(key); it != cache.end()) {
                row = it->second;
            } else {
                TrainConfig cfg = setting.apply(base);
                cfg.seed = seed;
                const auto result = train(cfg, data);
                row.source_map = result.report.source_map();
                row.source_rank1 = result.report.source_rank1();
                row.target_map = result.report.target_map();
                row.target_rank1 = result.report.target_rank1();
                cache.emplace(key, row);
            }
            row.setting = setting;
            row.seed = seed;
            if (progress) progress(row);
            table.rows.push_back(row);
        }
    return table;
}

}  // namespace peca
