#include "twinsem/exchange.hpp"

#include "twinsem/error.hpp"

namespace twinsem {

namespace {

using nlohmann::json;

std::vector<std::string> string_list(const json& doc, const char* field, bool required) {
    if (!doc.contains(field)) {
        if (required) throw ParseError(0, std::string("exchange document lacks field '") + field + "'");
        return {};
    }
    const json& v = doc.at(field);
    if (!v.is_array()) throw ParseError(0, std::string("field '") + field + "' must be an array of strings");
    std::vector<std::string> out;
    for (const auto& item : v) {
        if (!item.is_string()) throw ParseError(0, std::string("field '") + field + "' must be an array of strings");
        out.push_back(item.get<std::string>());
    }
    return out;
}

}  // namespace

json path_to_json(const PathSpec& spec) {
    const PathSpec p = normalized(spec);
    json out;
    out["from"] = p.from;
    out["to"] = p.to;
    out["arrows"] = p.arrows;
    out["free"] = p.free;
    out["value"] = p.value.value_or(0.0);
    out["label"] = p.label ? json(*p.label) : json(nullptr);
    out["defn"] = p.defn;
    return out;
}

PathSpec path_from_json(const json& doc) {
    if (!doc.is_object()) throw ParseError(0, "path entry must be an object");
    PathSpec p;
    try {
        if (!doc.contains("from")) throw ParseError(0, "path entry lacks 'from'");
        p.from = doc.at("from").get<std::string>();
        p.defn = doc.value("defn", false);
        if (doc.contains("to") && !doc.at("to").is_null()) p.to = doc.at("to").get<std::string>();
        else if (!p.defn) throw ParseError(0, "path entry lacks 'to'");
        if (doc.contains("arrows")) {
            const json& a = doc.at("arrows");
            if (!a.is_number_integer()) throw ParseError(0, "'arrows' must be the integer 1 or 2");
            p.arrows = a.get<int>();
        }
        if (p.arrows != 1 && p.arrows != 2)
            throw ParseError(0, "'arrows' must be 1 or 2, got " + std::to_string(p.arrows));
        p.free = doc.value("free", false);
        if (doc.contains("value") && !doc.at("value").is_null()) p.value = doc.at("value").get<double>();
        if (doc.contains("label") && !doc.at("label").is_null()) p.label = doc.at("label").get<std::string>();
    } catch (const json::exception& e) {
        throw ParseError(0, std::string("malformed path entry: ") + e.what());
    }
    for (const auto& [key, value] : doc.items()) {
        (void)value;
        if (key != "from" && key != "to" && key != "arrows" && key != "free" && key != "value" && key != "label" &&
            key != "defn")
            throw ParseError(0, "unknown path field '" + key + "'");
    }
    return p;
}

json to_exchange(const ParsedPathSet& set) {
    json out;
    out["name"] = set.name;
    out["manifests"] = set.declared_manifests;
    out["latents"] = set.declared_latents;
    out["defvars"] = set.defvars;
    out["paths"] = json::array();
    for (const auto& p : set.paths) out["paths"].push_back(path_to_json(p));
    return out;
}

json to_exchange(const RamModel& model) {
    ParsedPathSet set;
    set.name = model.name();
    set.declared_manifests = model.manifests();
    for (const auto& l : model.latents()) {
        const bool proxy = is_def_label(l) && std::find(model.defvars().begin(), model.defvars().end(),
                                                        l.substr(kDefPrefix.size())) != model.defvars().end();
        if (!proxy) set.declared_latents.push_back(l);
    }
    set.defvars = model.defvars();
    set.paths = model.paths();
    return to_exchange(set);
}

ParsedPathSet parse_exchange(const json& doc) {
    if (!doc.is_object()) throw ParseError(0, "exchange document must be an object");
    ParsedPathSet out;
    if (!doc.contains("name") || !doc.at("name").is_string())
        throw ParseError(0, "exchange document lacks string field 'name'");
    out.name = doc.at("name").get<std::string>();
    out.declared_manifests = string_list(doc, "manifests", true);
    out.declared_latents = string_list(doc, "latents", true);
    out.defvars = string_list(doc, "defvars", false);
    if (!doc.contains("paths") || !doc.at("paths").is_array())
        throw ParseError(0, "exchange document lacks array field 'paths'");
    for (const auto& entry : doc.at("paths")) out.paths.push_back(path_from_json(entry));
    for (const auto& p : out.paths)
        if (p.defn && std::find(out.defvars.begin(), out.defvars.end(), p.from) == out.defvars.end())
            out.defvars.push_back(p.from);
    for (const auto& column : out.defvars) {
        const bool declared = std::any_of(out.paths.begin(), out.paths.end(),
                                          [&](const PathSpec& p) { return p.defn && p.from == column; });
        if (!declared) {
            PathSpec spec;
            spec.from = column;
            spec.defn = true;
            out.paths.insert(out.paths.begin(), normalized(spec));
        }
    }
    return out;
}

}  // namespace twinsem
