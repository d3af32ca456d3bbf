#include "twinsem/run.hpp"

#include "twinsem/builders.hpp"
#include "twinsem/data_prep.hpp"
#include "twinsem/error.hpp"
#include "twinsem/exchange.hpp"
#include "twinsem/formula.hpp"
#include "twinsem/path_parser.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

namespace twinsem {

namespace fs = std::filesystem;
using nlohmann::json;

ReportFormat parse_report_format(const std::string& text) {
    if (text == "tsv") return ReportFormat::tsv;
    if (text == "csv") return ReportFormat::csv;
    if (text == "json") return ReportFormat::json;
    throw DataError("unknown report format '" + text + "' (expected tsv, csv or json)");
}

namespace {

[[noreturn]] void schema_error(const std::string& field, const std::string& message) {
    throw DataError("config field '" + field + "': " + message);
}

const json* field(const json& obj, const std::string& key) {
    const auto it = obj.find(key);
    return it == obj.end() || it->is_null() ? nullptr : &*it;
}

std::string get_string(const json& obj, const std::string& key, const std::string& where, std::string fallback = {}) {
    const json* v = field(obj, key);
    if (!v) return fallback;
    if (!v->is_string()) schema_error(where + key, "expected a string");
    return v->get<std::string>();
}

double get_number(const json& obj, const std::string& key, const std::string& where, double fallback) {
    const json* v = field(obj, key);
    if (!v) return fallback;
    if (!v->is_number()) schema_error(where + key, "expected a number");
    return v->get<double>();
}

std::uint64_t get_unsigned(const json& obj, const std::string& key, const std::string& where,
                           std::uint64_t fallback) {
    const json* v = field(obj, key);
    if (!v) return fallback;
    if (!v->is_number_integer() || (!v->is_number_unsigned() && v->get<std::int64_t>() < 0))
        schema_error(where + key, "expected a non-negative integer");
    return v->get<std::uint64_t>();
}

bool get_bool(const json& obj, const std::string& key, const std::string& where, bool fallback) {
    const json* v = field(obj, key);
    if (!v) return fallback;
    if (!v->is_boolean()) schema_error(where + key, "expected true or false");
    return v->get<bool>();
}

std::vector<std::string> get_strings(const json& obj, const std::string& key, const std::string& where) {
    const json* v = field(obj, key);
    if (!v) return {};
    if (v->is_string()) return {v->get<std::string>()};
    if (!v->is_array()) schema_error(where + key, "expected a string or a list of strings");
    std::vector<std::string> out;
    for (const auto& e : *v) {
        if (!e.is_string()) schema_error(where + key, "expected a list of strings");
        out.push_back(e.get<std::string>());
    }
    return out;
}

std::vector<double> get_numbers(const json& v, const std::string& where) {
    if (!v.is_array()) schema_error(where, "expected a list of numbers");
    std::vector<double> out;
    for (const auto& e : v) {
        if (!e.is_number()) schema_error(where, "expected a list of numbers");
        out.push_back(e.get<double>());
    }
    return out;
}

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
    if (!obj.is_object()) schema_error(where.empty() ? "<root>" : where, "expected an object");
    for (const auto& [key, value] : obj.items()) {
        (void)value;
        if (!allowed.count(key)) schema_error(where + key, "unknown field");
    }
}

OrdinalLevels parse_levels(const json& doc, const std::string& where) {
    if (!doc.is_object()) schema_error(where, "expected an object of column -> level list");
    OrdinalLevels out;
    for (const auto& [column, levels] : doc.items()) out[column] = get_strings(doc, column, where + ".");
    return out;
}

json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path.string() + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw DataError("'" + path.string() + "': " + e.what());
    }
}

PrepStep parse_prep_step(const json& doc, const std::string& where) {
    check_keys(doc, {"op", "vars", "covs", "formula", "suffixes", "censp", "covar", "pheno"}, where);
    PrepStep s;
    s.op = get_string(doc, "op", where);
    static const std::set<std::string> ops{"bin-cont", "placeholder", "residualize", "scale"};
    if (!ops.count(s.op)) schema_error(where + "op", "unknown prep step '" + s.op + "'");
    s.vars = get_strings(doc, "vars", where);
    s.covs = get_strings(doc, "covs", where);
    s.formula = get_string(doc, "formula", where);
    s.suffixes = get_strings(doc, "suffixes", where);
    s.covar = get_string(doc, "covar", where);
    s.pheno = get_string(doc, "pheno", where);
    if (s.op == "bin-cont") {
        if (!field(doc, "censp")) schema_error(where + "censp", "required for bin-cont");
        s.censp = get_number(doc, "censp", where, 0.0);
    }
    if (s.op == "placeholder" && (s.covar.empty() || s.pheno.empty()))
        schema_error(where + "covar", "placeholder needs covar and pheno");
    if (s.op == "residualize" && s.formula.empty() && s.vars.empty())
        schema_error(where + "vars", "residualize needs vars or a formula");
    return s;
}

TwinOptions twin_options(const json& o) {
    TwinOptions t;
    t.sep = get_string(o, "sep", "options.", t.sep);
    t.dzAr = get_number(o, "dzAr", "options.", t.dzAr);
    t.dzCr = get_number(o, "dzCr", "options.", t.dzCr);
    t.covariates = get_strings(o, "covariates", "options.");
    return t;
}

ColumnTable take(std::map<std::string, ColumnTable>& data, const std::string& key) {
    auto it = data.find(key);
    if (it == data.end()) return {};
    ColumnTable out = std::move(it->second);
    data.erase(it);
    return out;
}

void require_groups(const std::map<std::string, ColumnTable>& data, const std::vector<std::string>& keys,
                    const std::string& design) {
    if (data.empty()) return;
    for (const auto& [key, table] : data) {
        (void)table;
        if (std::find(keys.begin(), keys.end(), key) == keys.end())
            schema_error("data." + key, "design '" + design + "' has no group of that name");
    }
    for (const auto& k : keys)
        if (!data.count(k)) schema_error("data." + k, "required by design '" + design + "'");
}

}  // namespace

RunConfig parse_config(const json& doc, const fs::path& base_dir) {
    check_keys(doc,
               {"name", "design", "options", "manifests", "latents", "defvars", "paths", "path_file", "data",
                "ordinal", "prep", "fix", "equate", "thresholds", "bounds", "fit", "simulate"},
               "");
    RunConfig c;
    c.base_dir = base_dir;
    c.design = get_string(doc, "design", "");
    static const std::set<std::string> designs{"ace",  "clpm",   "riclpm", "mrdoc",      "mrdoc2",
                                               "doc",  "sexlim", "twin_maker", "ram"};
    if (c.design.empty()) schema_error("design", "required");
    if (!designs.count(c.design)) schema_error("design", "unknown design '" + c.design + "'");
    c.name = get_string(doc, "name", "", c.design);
    if (const json* o = field(doc, "options")) {
        if (!o->is_object()) schema_error("options", "expected an object");
        c.options = *o;
    }

    if (const json* pf = field(doc, "path_file")) {
        if (!pf->is_string()) schema_error("path_file", "expected a string");
        ParsedPathSet set = read_path_file(base_dir / pf->get<std::string>());
        c.paths = set.paths;
        c.manifests = set.declared_manifests;
    }
    if (field(doc, "paths")) {
        json exchange = {{"name", c.name}, {"paths", doc.at("paths")}};
        exchange["manifests"] = doc.value("manifests", json::array());
        exchange["latents"] = doc.value("latents", json::array());
        if (field(doc, "defvars")) exchange["defvars"] = doc.at("defvars");
        try {
            ParsedPathSet set = parse_exchange(exchange);
            c.paths = set.paths;
            c.manifests = set.declared_manifests;
        } catch (const ParseError& e) {
            schema_error("paths", e.what());
        }
    } else if (field(doc, "manifests")) {
        c.manifests = get_strings(doc, "manifests", "");
    }

    if (const json* d = field(doc, "data")) {
        if (d->is_string())
            c.data["data"] = base_dir / d->get<std::string>();
        else if (d->is_object())
            for (const auto& [group, path] : d->items()) {
                if (!path.is_string()) schema_error("data." + group, "expected a file path");
                c.data[group] = base_dir / path.get<std::string>();
            }
        else
            schema_error("data", "expected a file path or an object of group -> file path");
    }
    if (const json* o = field(doc, "ordinal")) {
        if (o->is_string())
            c.ordinal = parse_levels(read_json_file(base_dir / o->get<std::string>()), "ordinal");
        else
            c.ordinal = parse_levels(*o, "ordinal");
    }
    if (const json* p = field(doc, "prep")) {
        if (!p->is_array()) schema_error("prep", "expected a list of steps");
        for (std::size_t i = 0; i < p->size(); ++i)
            c.prep.push_back(parse_prep_step((*p)[i], "prep[" + std::to_string(i) + "]."));
    }
    if (const json* f = field(doc, "fix")) {
        if (!f->is_object()) schema_error("fix", "expected an object of label -> value");
        for (const auto& [label, value] : f->items()) c.fix[label] = get_number(*f, label, "fix.", 0.0);
    }
    if (const json* e = field(doc, "equate")) {
        if (!e->is_array()) schema_error("equate", "expected a list of [from, to] pairs");
        for (const auto& pair : *e) {
            if (!pair.is_array() || pair.size() != 2 || !pair[0].is_string() || !pair[1].is_string())
                schema_error("equate", "expected a list of [from, to] pairs");
            c.equate.emplace_back(pair[0].get<std::string>(), pair[1].get<std::string>());
        }
    }
    if (const json* t = field(doc, "thresholds")) {
        if (!t->is_object()) schema_error("thresholds", "expected an object of column -> cut points");
        for (const auto& [column, cuts] : t->items()) c.thresholds[column] = get_numbers(cuts, "thresholds." + column);
    }
    if (const json* b = field(doc, "bounds")) {
        if (!b->is_object()) schema_error("bounds", "expected an object of label -> [lower, upper]");
        for (const auto& [label, pair] : b->items()) {
            if (!pair.is_array() || pair.size() != 2) schema_error("bounds." + label, "expected [lower, upper]");
            Bounds bound;
            if (!pair[0].is_null()) bound.lower = get_numbers(json::array({pair[0]}), "bounds." + label)[0];
            if (!pair[1].is_null()) bound.upper = get_numbers(json::array({pair[1]}), "bounds." + label)[0];
            if (!(bound.lower < bound.upper)) schema_error("bounds." + label, "lower must be below upper");
            c.bounds[label] = bound;
        }
    }
    if (const json* f = field(doc, "fit")) {
        check_keys(*f, {"max_iterations", "tolerance", "multistart", "seed", "threads", "standard_errors"}, "fit.");
        c.fit.max_iterations = get_unsigned(*f, "max_iterations", "fit.", c.fit.max_iterations);
        c.fit.gradient_tolerance = get_number(*f, "tolerance", "fit.", c.fit.gradient_tolerance);
        c.fit.multistart = get_unsigned(*f, "multistart", "fit.", c.fit.multistart);
        c.fit.seed = get_unsigned(*f, "seed", "fit.", c.fit.seed);
        c.fit.fiml.threads = static_cast<int>(get_unsigned(*f, "threads", "fit.", 0));
        c.fit.standard_errors = get_bool(*f, "standard_errors", "fit.", true);
    }
    if (const json* s = field(doc, "simulate")) {
        check_keys(*s, {"n", "n_per_group", "truth", "ordinal_cuts", "lod", "censor", "covariate_missing_rate", "seed"},
                   "simulate.");
        c.simulate.n = get_unsigned(*s, "n", "simulate.", c.simulate.n);
        c.simulate.seed = get_unsigned(*s, "seed", "simulate.", c.simulate.seed);
        if (const json* npg = field(*s, "n_per_group"))
            for (const auto& [group, n] : npg->items()) {
                (void)n;
                c.simulate.n_per_group[group] = get_unsigned(*npg, group, "simulate.n_per_group.", 0);
            }
        if (const json* truth = field(*s, "truth")) {
            if (!truth->is_object()) schema_error("simulate.truth", "expected an object of label -> value");
            for (const auto& [label, v] : truth->items()) {
                (void)v;
                c.truth[label] = get_number(*truth, label, "simulate.truth.", 0.0);
            }
        }
        if (const json* cuts = field(*s, "ordinal_cuts"))
            for (const auto& [column, v] : cuts->items())
                c.simulate.ordinal_cuts[column] = get_numbers(v, "simulate.ordinal_cuts." + column);
        if (field(*s, "lod")) c.simulate.lod = get_number(*s, "lod", "simulate.", 0.0);
        c.simulate.censor_columns = get_strings(*s, "censor", "simulate.");
        c.simulate.covariate_missing_rate = get_number(*s, "covariate_missing_rate", "simulate.", 0.0);
    }
    return c;
}

RunConfig load_config(const fs::path& path) {
    return parse_config(read_json_file(path), path.parent_path());
}

ColumnTable apply_prep(ColumnTable table, const PrepStep& step, const std::string& group,
                       std::vector<RunDiagnostic>* diagnostics) {
    if (step.op == "bin-cont") return make_bin_cont_pair(table, step.vars, step.censp, step.suffixes);
    if (step.op == "placeholder") {
        const auto& suffixes = step.suffixes.empty() ? kDefaultTwinSuffixes : step.suffixes;
        ColumnTable out = update_covariate_placeholders(table, step.covar, step.pheno, suffixes);
        if (diagnostics)
            for (const auto& w : validate_placeholders(out, step.covar, step.pheno, suffixes))
                diagnostics->push_back({group, "placeholder", w.message});
        return out;
    }
    if (step.op == "residualize") {
        std::vector<std::string> warnings;
        ColumnTable out = step.formula.empty()
                              ? residualize(table, step.vars, step.covs, step.suffixes, &warnings)
                              : residualize(table, parse_formula(step.formula), step.suffixes, &warnings);
        if (diagnostics)
            for (auto& w : warnings) diagnostics->push_back({group, "residualize", std::move(w)});
        return out;
    }
    if (step.op == "scale")
        return scale_wide_twin(table, step.vars, step.suffixes.empty() ? kDefaultTwinSuffixes : step.suffixes);
    throw DataError("unknown prep step '" + step.op + "'");
}

std::map<std::string, ColumnTable> load_data(const RunConfig& config, std::vector<RunDiagnostic>* diagnostics) {
    std::map<std::string, ColumnTable> out;
    for (const auto& [group, path] : config.data) {
        if (!fs::exists(path)) throw DataError("data file '" + path.string() + "' for group '" + group + "' not found");
        ColumnTable table = read_csv(path, config.ordinal);
        for (const auto& step : config.prep) table = apply_prep(std::move(table), step, group, diagnostics);
        out.emplace(group, std::move(table));
    }
    return out;
}

GroupedModel build_design(const RunConfig& config, std::map<std::string, ColumnTable> data) {
    const json& o = config.options;
    const std::string& d = config.design;
    GroupedModel model;
    if (d == "ace" || d == "twin_maker") {
        require_groups(data, {"MZ", "DZ"}, d);
        const TwinOptions t = twin_options(o);
        if (d == "ace") {
            const auto phenotypes = get_strings(o, "phenotypes", "options.");
            if (phenotypes.empty()) schema_error("options.phenotypes", "required for design 'ace'");
            model = build_ace(phenotypes, take(data, "MZ"), take(data, "DZ"), t, config.name);
        } else {
            if (config.paths.empty()) schema_error("paths", "design 'twin_maker' needs paths or a path_file");
            auto manifests = get_strings(o, "manifests", "options.");
            std::optional<std::vector<std::string>> chosen;
            if (!manifests.empty()) chosen = manifests;
            else if (data.empty() && !config.manifests.empty()) chosen = config.manifests;
            model = twin_maker(config.name, config.paths, take(data, "MZ"), take(data, "DZ"), t, chosen);
        }
    } else if (d == "clpm" || d == "riclpm") {
        require_groups(data, {"data"}, d);
        ClpmOptions c;
        c.x_base = get_string(o, "x_base", "options.");
        c.y_base = get_string(o, "y_base", "options.");
        c.equal_innovations = get_bool(o, "equal_innovations", "options.", false);
        c.covariates = get_strings(o, "covariates", "options.");
        const std::size_t waves = get_unsigned(o, "waves", "options.", 0);
        model = build_clpm(waves, d == "clpm" ? ClpmVariant::clpm : ClpmVariant::riclpm, take(data, "data"), c,
                           config.name);
    } else if (d == "mrdoc" || d == "mrdoc2" || d == "doc") {
        MrdocOptions m;
        static_cast<TwinOptions&>(m) = twin_options(o);
        m.sibling_mode = get_bool(o, "sibling_mode", "options.", false);
        m.sibling_r = get_number(o, "sibling_r", "options.", m.sibling_r);
        if (m.sibling_mode)
            require_groups(data, {"DZ"}, d);
        else
            require_groups(data, {"MZ", "DZ"}, d);
        const auto variant = d == "doc" ? MrdocVariant::doc : d == "mrdoc" ? MrdocVariant::mrdoc : MrdocVariant::mrdoc2;
        model = build_mrdoc(get_strings(o, "phenotypes", "options."), get_strings(o, "prs", "options."),
                            take(data, "MZ"), take(data, "DZ"), variant, m, config.name);
    } else if (d == "sexlim") {
        require_groups(data, {"MZM", "DZM", "MZF", "DZF", "DZO"}, d);
        const std::string a_or_c = get_string(o, "a_or_c", "options.", "A");
        const std::string v = get_string(o, "variant", "options.", "nonscalar");
        SexlimVariant variant;
        if (v == "homogeneity") variant = SexlimVariant::homogeneity;
        else if (v == "scalar") variant = SexlimVariant::scalar;
        else if (v == "nonscalar") variant = SexlimVariant::nonscalar;
        else schema_error("options.variant", "expected homogeneity, scalar or nonscalar");
        if (a_or_c.size() != 1) schema_error("options.a_or_c", "expected \"A\" or \"C\"");
        SexlimData s{take(data, "MZM"), take(data, "DZM"), take(data, "MZF"), take(data, "DZF"), take(data, "DZO")};
        model = build_sexlim(get_strings(o, "phenotypes", "options."), std::move(s), a_or_c[0], variant,
                             twin_options(o), config.name);
    } else if (d == "ram") {
        require_groups(data, {"data"}, d);
        if (config.paths.empty()) schema_error("paths", "design 'ram' needs paths or a path_file");
        std::vector<std::string> manifests = config.manifests;
        if (manifests.empty()) {
            if (data.empty()) schema_error("manifests", "required to simulate a 'ram' design");
            for (const auto& v : path_variables(config.paths))
                if (data.at("data").has(v)) manifests.push_back(v);
        }
        model.name = config.name;
        model.groups.push_back(Group{config.name, build_ram(config.name, config.paths, manifests), {}, nullptr});
        if (!data.empty()) {
            model.groups.back().data = std::make_shared<const ColumnTable>(take(data, "data"));
            wire_ordinal_thresholds(model, get_string(o, "sep", "options.", "_T"));
        }
    } else {
        schema_error("design", "unknown design '" + d + "'");
    }

    for (const auto& [column, cuts] : config.thresholds) model = fix_thresholds(std::move(model), {column}, cuts);
    if (!config.fix.empty()) model = fix_parameters(std::move(model), config.fix);
    for (const auto& [from, to] : config.equate) model = equate_parameters(std::move(model), from, to);
    for (const auto& [label, bound] : config.bounds) model.bounds[label] = bound;
    for (const auto& g : model.groups)
        if (g.data) check_binding(g);
    return model;
}

std::string parameter_matrix(const GroupedModel& model, const std::string& label) {
    for (const auto& g : model.groups) {
        std::string found;
        g.model.for_each_cell([&](CellRef ref, const Cell& cell) {
            if (!found.empty() || !cell.free || cell.label != label) return;
            found = ref.matrix == CellMatrix::A ? "A" : ref.matrix == CellMatrix::S ? "S" : "M";
        });
        if (!found.empty()) return found;
        for (const auto& [variable, devs] : g.thresholds.columns()) {
            (void)variable;
            for (const auto& e : devs)
                if (e.free && e.label == label) return "thresholds";
        }
    }
    return "?";
}

namespace {

std::string cell(double v) { return std::isnan(v) ? "NA" : format_number(v); }

std::string quote_csv(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
    return out + "\"";
}

std::string table_text(const std::vector<std::vector<std::string>>& rows, char sep) {
    std::string out;
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out += sep;
            out += sep == ',' ? quote_csv(row[i]) : row[i];
        }
        out += '\n';
    }
    return out;
}

std::vector<Estimate> sorted_estimates(const Report& r) {
    std::vector<Estimate> out = r.result.estimates;
    std::stable_sort(out.begin(), out.end(), [&](const Estimate& a, const Estimate& b) {
        const auto& ma = r.matrix.at(a.label);
        const auto& mb = r.matrix.at(b.label);
        return ma != mb ? ma < mb : a.label < b.label;
    });
    return out;
}

}  // namespace

std::map<std::string, std::string> render_report(const Report& report, ReportFormat format) {
    const FitResult& f = report.result;
    std::size_t used = 0, dropped = 0;
    for (const auto& g : f.rows) {
        used += g.rows_used;
        dropped += g.rows_dropped();
    }
    std::vector<RunDiagnostic> diagnostics = report.diagnostics;
    for (const auto& g : f.rows) {
        if (g.rows_empty)
            diagnostics.push_back({g.group, "rows_dropped",
                                   std::to_string(g.rows_empty) + " rows with no observed model variable"});
        if (g.rows_missing_definition)
            diagnostics.push_back({g.group, "rows_dropped",
                                   std::to_string(g.rows_missing_definition) +
                                       " rows missing a definition variable"});
    }
    const auto estimates = sorted_estimates(report);

    if (format == ReportFormat::json) {
        json doc;
        doc["model"] = report.model_name;
        doc["status"] = std::string(to_string(f.status));
        doc["fit"] = {{"neg2ll", f.neg2ll},           {"start_neg2ll", f.start_neg2ll}, {"nfree", f.nfree},
                      {"aic", f.aic},                 {"iterations", f.iterations},     {"evaluations", f.evaluations},
                      {"rows_used", used},            {"rows_dropped", dropped}};
        json rows = json::array();
        for (const auto& g : f.rows)
            rows.push_back({{"group", g.group},
                            {"rows_used", g.rows_used},
                            {"rows_empty", g.rows_empty},
                            {"rows_missing_definition", g.rows_missing_definition}});
        doc["groups"] = rows;
        json est = json::array();
        for (const auto& e : estimates)
            est.push_back({{"label", e.label},
                           {"matrix", report.matrix.at(e.label)},
                           {"estimate", e.value},
                           {"se", e.se ? json(*e.se) : json(nullptr)},
                           {"at_bound", e.at_bound}});
        doc["estimates"] = est;
        json diag = json::array();
        for (const auto& d : diagnostics) diag.push_back({{"group", d.group}, {"kind", d.kind}, {"message", d.message}});
        doc["diagnostics"] = diag;
        return {{"report.json", doc.dump(2) + "\n"}};
    }

    const char sep = format == ReportFormat::csv ? ',' : '\t';
    const std::string ext = format == ReportFormat::csv ? ".csv" : ".tsv";
    std::vector<std::vector<std::string>> est{{"matrix", "label", "estimate", "se", "at_bound"}};
    for (const auto& e : estimates)
        est.push_back({report.matrix.at(e.label), e.label, cell(e.value), e.se ? cell(*e.se) : "NA",
                       e.at_bound ? "true" : "false"});
    std::vector<std::vector<std::string>> fit{{"statistic", "value"},
                                              {"model", report.model_name},
                                              {"status", std::string(to_string(f.status))},
                                              {"neg2ll", cell(f.neg2ll)},
                                              {"start_neg2ll", cell(f.start_neg2ll)},
                                              {"nfree", std::to_string(f.nfree)},
                                              {"aic", cell(f.aic)},
                                              {"iterations", std::to_string(f.iterations)},
                                              {"evaluations", std::to_string(f.evaluations)},
                                              {"rows_used", std::to_string(used)},
                                              {"rows_dropped", std::to_string(dropped)}};
    std::vector<std::vector<std::string>> diag{{"group", "kind", "message"}};
    for (const auto& d : diagnostics) diag.push_back({d.group, d.kind, d.message});
    return {{"estimates" + ext, table_text(est, sep)},
            {"fit" + ext, table_text(fit, sep)},
            {"diagnostics" + ext, table_text(diag, sep)}};
}

void write_files_atomically(const fs::path& dir, const std::map<std::string, std::string>& files) {
    fs::create_directories(dir);
    std::vector<std::pair<fs::path, fs::path>> staged;
    try {
        for (const auto& [name, contents] : files) {
            const fs::path target = dir / name;
            const fs::path temp = dir / ("." + name + ".partial");
            std::ofstream out(temp, std::ios::binary | std::ios::trunc);
            out << contents;
            out.close();
            if (!out) throw DataError("cannot write '" + temp.string() + "'");
            staged.emplace_back(temp, target);
        }
    } catch (...) {
        for (const auto& [temp, target] : staged) {
            (void)target;
            std::error_code ec;
            fs::remove(temp, ec);
        }
        throw;
    }
    for (const auto& [temp, target] : staged) fs::rename(temp, target);
}

namespace {

template <class Fn>
int guarded(std::ostream& err, Fn&& fn) {
    try {
        return fn();
    } catch (const ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kExitInputError;
    } catch (const DataError& e) {
        err << "error: " << e.what() << "\n";
        return kExitInputError;
    } catch (const ModelError& e) {
        err << "error: " << e.what() << "\n";
        return kExitInputError;
    } catch (const json::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitInputError;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return kExitInputError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
}

}  // namespace

int run_fit(const fs::path& config_path, const RunFlags& flags, std::ostream& err) {
    return guarded(err, [&] {
        RunConfig config = load_config(config_path);
        if (flags.seed) config.fit.seed = *flags.seed;
        if (config.data.empty()) throw DataError("config field 'data': required for fit");
        std::vector<RunDiagnostic> diagnostics;
        GroupedModel model = build_design(config, load_data(config, &diagnostics));
        Report report;
        report.model_name = config.name;
        report.result = fit(model, config.fit);
        for (const auto& e : report.result.estimates) report.matrix[e.label] = parameter_matrix(model, e.label);
        report.diagnostics = std::move(diagnostics);
        write_files_atomically(flags.out, render_report(report, flags.report));
        if (report.result.status != FitStatus::converged && !flags.allow_nonconverged) {
            err << "error: fit did not converge (status " << to_string(report.result.status)
                << "); rerun with --allow-nonconverged to accept it\n";
            return kExitNotConverged;
        }
        return kExitOk;
    });
}

int run_simulate(const fs::path& config_path, const RunFlags& flags, std::ostream& err) {
    return guarded(err, [&] {
        RunConfig config = load_config(config_path);
        if (flags.seed) config.simulate.seed = *flags.seed;
        const GroupedModel structure = build_design(config, {});
        const auto groups = simulate(structure, config.truth, config.simulate);
        std::map<std::string, std::string> files;
        for (const auto& g : groups) files[g.name + ".csv"] = format_csv(g.data);
        ParameterVector theta = pack_parameters(structure);
        for (const auto& [label, value] : config.truth) theta.set(label, value);
        json truth = json::object();
        for (std::size_t i = 0; i < theta.size(); ++i) truth[theta.labels()[i]] = theta.values()[i];
        json doc = {{"design", config.design}, {"name", config.name}, {"seed", config.simulate.seed}, {"truth", truth}};
        json n = json::object();
        for (const auto& g : groups) n[g.name] = g.data.nrows();
        doc["n"] = n;
        files["truth.json"] = doc.dump(2) + "\n";
        write_files_atomically(flags.out, files);
        return kExitOk;
    });
}

int run_parse_paths(const fs::path& input, const std::optional<fs::path>& output, std::ostream& out,
                    std::ostream& err) {
    return guarded(err, [&] {
        if (!fs::exists(input)) throw DataError("path file '" + input.string() + "' not found");
        ParsedPathSet set = read_path_file(input);
        for (const auto& d : set.diagnostics) err << "warning: line " << d.line << ": " << d.message << "\n";
        const std::string text = to_exchange(set).dump(2) + "\n";
        if (output)
            write_files_atomically(output->parent_path().empty() ? fs::path(".") : output->parent_path(),
                                   {{output->filename().string(), text}});
        else
            out << text;
        return kExitOk;
    });
}

int run_prep(const PrepCommand& command, std::ostream& err) {
    return guarded(err, [&] {
        if (!fs::exists(command.input)) throw DataError("input '" + command.input.string() + "' not found");
        OrdinalLevels levels;
        if (command.levels) levels = parse_levels(read_json_file(*command.levels), "levels");
        const ColumnTable table = read_csv(command.input, levels);
        const fs::path dir = command.output.parent_path().empty() ? fs::path(".") : command.output.parent_path();
        const std::string name = command.output.filename().string();
        if (name.empty()) throw DataError("--out must name a file");

        if (command.step.op == "summarize") {
            ZygosityLabels labels;
            if (!command.mz_labels.empty()) labels.mz = command.mz_labels;
            if (!command.dz_labels.empty()) labels.dz = command.dz_labels;
            const auto& suffixes = command.step.suffixes.empty() ? kDefaultTwinSuffixes : command.step.suffixes;
            const auto rows = summarize_twin_data(table, command.step.vars, command.zygosity, suffixes, labels);
            std::vector<std::vector<std::string>> text{{"variable", "mean", "sd", "n_mz", "r_mz", "n_dz", "r_dz"}};
            for (const auto& r : rows)
                text.push_back({r.variable, cell(r.mean), cell(r.sd), std::to_string(r.n_mz), cell(r.r_mz),
                                std::to_string(r.n_dz), cell(r.r_dz)});
            write_files_atomically(dir, {{name, table_text(text, ',')}});
            return kExitOk;
        }
        std::vector<RunDiagnostic> diagnostics;
        const ColumnTable out = apply_prep(table, command.step, "", &diagnostics);
        for (const auto& d : diagnostics) err << "warning: " << d.message << "\n";
        write_files_atomically(dir, {{name, format_csv(out)}});
        return kExitOk;
    });
}

}  // namespace twinsem
