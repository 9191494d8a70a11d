#include "peca/json_io.hpp"

#include <algorithm>
#include <initializer_list>
#include <string_view>

#include "peca/error.hpp"

namespace peca {
namespace {

void reject_unknown(const nlohmann::json& j, std::string_view what, std::initializer_list<std::string_view> keys) {
    if (!j.is_object()) throw ContractError(std::string(what) + " must be a JSON object");
    for (const auto& item : j.items())
        if (std::find(keys.begin(), keys.end(), item.key()) == keys.end())
            throw ContractError("unknown " + std::string(what) + " field '" + item.key() + "'");
}

template <class T>
void read(const nlohmann::json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        j.at(key).get_to(out);
    } catch (const nlohmann::json::exception& e) {
        throw ContractError(std::string("bad value for '") + key + "': " + e.what());
    }
}

}  // namespace

void to_json(nlohmann::json& j, const DataTemplate& t) {
    j = {{"channels", t.channels},
         {"height", t.height},
         {"width", t.width},
         {"latent_dim", t.latent_dim},
         {"k_source", t.k_source},
         {"k_target", t.k_target},
         {"n_identities", t.n_identities},
         {"n_test_identities", t.n_test_identities},
         {"n_target_identities", t.n_target_identities},
         {"views", t.views},
         {"gain_spread", t.gain_spread},
         {"bias_spread", t.bias_spread},
         {"target_gap", t.target_gap},
         {"texture_scale", t.texture_scale},
         {"noise_std", t.noise_std},
         {"seed", t.seed}};
}

void from_json(const nlohmann::json& j, DataTemplate& t) {
    reject_unknown(j, "data",
                   {"channels", "height", "width", "latent_dim", "k_source", "k_target", "n_identities",
                    "n_test_identities", "n_target_identities", "views", "gain_spread", "bias_spread", "target_gap",
                    "texture_scale", "noise_std", "seed"});
    read(j, "channels", t.channels);
    read(j, "height", t.height);
    read(j, "width", t.width);
    read(j, "latent_dim", t.latent_dim);
    read(j, "k_source", t.k_source);
    read(j, "k_target", t.k_target);
    read(j, "n_identities", t.n_identities);
    read(j, "n_test_identities", t.n_test_identities);
    read(j, "n_target_identities", t.n_target_identities);
    read(j, "views", t.views);
    read(j, "gain_spread", t.gain_spread);
    read(j, "bias_spread", t.bias_spread);
    read(j, "target_gap", t.target_gap);
    read(j, "texture_scale", t.texture_scale);
    read(j, "noise_std", t.noise_std);
    read(j, "seed", t.seed);
}

void to_json(nlohmann::json& j, const DomainSpec& s) {
    j = {{"domain_id", s.domain_id},   {"n_identities", s.n_identities},
         {"gain", s.gain},             {"bias", s.bias},
         {"texture_scale", s.texture_scale}, {"noise_std", s.noise_std},
         {"views_per_identity", s.views_per_identity}, {"is_target", s.is_target}};
}

void from_json(const nlohmann::json& j, DomainSpec& s) {
    reject_unknown(j, "domain spec",
                   {"domain_id", "n_identities", "gain", "bias", "texture_scale", "noise_std", "views_per_identity",
                    "is_target"});
    read(j, "domain_id", s.domain_id);
    read(j, "n_identities", s.n_identities);
    read(j, "gain", s.gain);
    read(j, "bias", s.bias);
    read(j, "texture_scale", s.texture_scale);
    read(j, "noise_std", s.noise_std);
    read(j, "views_per_identity", s.views_per_identity);
    read(j, "is_target", s.is_target);
    s.validate();
}

void to_json(nlohmann::json& j, const BackboneConfig& c) {
    j = {{"in_channels", c.in_channels},   {"stage_channels", c.stage_channels}, {"stage_strides", c.stage_strides},
         {"feature_dim", c.feature_dim},   {"kernel_size", c.kernel_size}};
    if (c.perturb_plan == PerturbPlan::custom) j["custom_mask"] = c.custom_mask;
}

void from_json(const nlohmann::json& j, BackboneConfig& c) {
    reject_unknown(j, "backbone",
                   {"in_channels", "stage_channels", "stage_strides", "feature_dim", "kernel_size", "custom_mask"});
    read(j, "in_channels", c.in_channels);
    read(j, "stage_channels", c.stage_channels);
    read(j, "stage_strides", c.stage_strides);
    read(j, "feature_dim", c.feature_dim);
    read(j, "kernel_size", c.kernel_size);
    read(j, "custom_mask", c.custom_mask);
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"lambda", c.lambda},
         {"beta", c.beta},
         {"tau", c.tau},
         {"epochs", c.epochs},
         {"warmup_epochs", c.resolved_warmup()},
         {"base_lr", c.base_lr},
         {"milestones", c.resolved_milestones()},
         {"P", c.P},
         {"Kins", c.Kins},
         {"perturb_plan", std::string(to_string(c.perturb_plan))},
         {"lpm_enabled", c.lpm_enabled},
         {"gcm_enabled", c.gcm_enabled},
         {"seed", c.seed},
         {"eps_num", c.eps_num},
         {"metric", std::string(to_string(c.metric))},
         {"backbone", c.backbone},
         {"data", c.data}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
    reject_unknown(j, "config",
                   {"lambda", "beta", "tau", "epochs", "warmup_epochs", "base_lr", "milestones", "P", "Kins",
                    "perturb_plan", "lpm_enabled", "gcm_enabled", "seed", "eps_num", "metric", "backbone", "data"});
    read(j, "lambda", c.lambda);
    read(j, "beta", c.beta);
    read(j, "tau", c.tau);
    read(j, "epochs", c.epochs);
    if (j.contains("warmup_epochs")) {
        std::size_t w = 0;
        read(j, "warmup_epochs", w);
        c.warmup_epochs = w;
    }
    read(j, "base_lr", c.base_lr);
    if (j.contains("milestones")) {
        std::vector<std::size_t> m;
        read(j, "milestones", m);
        c.milestones = m;
    }
    read(j, "P", c.P);
    read(j, "Kins", c.Kins);
    if (j.contains("perturb_plan")) {
        std::string plan;
        read(j, "perturb_plan", plan);
        c.perturb_plan = parse_perturb_plan(plan);
    }
    read(j, "lpm_enabled", c.lpm_enabled);
    read(j, "gcm_enabled", c.gcm_enabled);
    read(j, "seed", c.seed);
    read(j, "eps_num", c.eps_num);
    if (j.contains("metric")) {
        std::string metric;
        read(j, "metric", metric);
        c.metric = parse_metric(metric);
    }
    if (j.contains("backbone")) from_json(j.at("backbone"), c.backbone);
    if (j.contains("data")) from_json(j.at("data"), c.data);
    c.validate();
}

}  // namespace peca
