#pragma once

#include "json.hpp"
#include "peca/backbone.hpp"
#include "peca/config.hpp"
#include "peca/synthdata.hpp"

// JSON mappings; keys mirror struct field names. Unknown keys raise
// ContractError, missing keys keep their defaults.
namespace peca {

void to_json(nlohmann::json& j, const DataTemplate& t);
void from_json(const nlohmann::json& j, DataTemplate& t);
void to_json(nlohmann::json& j, const DomainSpec& s);
void from_json(const nlohmann::json& j, DomainSpec& s);
void to_json(nlohmann::json& j, const BackboneConfig& c);
void from_json(const nlohmann::json& j, BackboneConfig& c);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

}  // namespace peca
