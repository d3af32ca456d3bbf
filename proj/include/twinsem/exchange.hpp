#pragma once

#include "twinsem/path_parser.hpp"
#include "twinsem/ram_model.hpp"

#include <json.hpp>

namespace twinsem {

/// Exchange document: {name, manifests, latents, defvars, paths:[{from,to,arrows,free,value,label,defn}]}.
/// Paths are written in normalized form.
nlohmann::json to_exchange(const ParsedPathSet& set);
nlohmann::json to_exchange(const RamModel& model);

/// Throws ParseError on a schema violation.
ParsedPathSet parse_exchange(const nlohmann::json& doc);

nlohmann::json path_to_json(const PathSpec& spec);
PathSpec path_from_json(const nlohmann::json& doc);

}  // namespace twinsem
