#include "builder_util.hpp"

#include "twinsem/path_parser.hpp"

#include <algorithm>
#include <cmath>
#include <regex>
#include <set>

namespace twinsem {

namespace {

void check_relatedness(const TwinOptions& options) {
    if (!(options.dzAr > 0.0 && options.dzAr <= 1.0)) throw ModelError("dzAr must lie in (0, 1]");
    if (!(options.dzCr > 0.0 && options.dzCr <= 1.0)) throw ModelError("dzCr must lie in (0, 1]");
    if (options.sep.empty()) throw ModelError("twin suffix separator is empty");
}

std::string strip_twin_suffix(const std::string& column, const std::string& sep) {
    const auto at = column.rfind(sep);
    if (at == std::string::npos || at + sep.size() >= column.size()) return column;
    const std::string tail = column.substr(at + sep.size());
    if (!std::all_of(tail.begin(), tail.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
        return column;
    return column.substr(0, at);
}

}  // namespace

std::string twin_column(const std::string& base, const std::string& sep, int twin) {
    return base + sep + std::to_string(twin);
}

bool is_variance_component(const std::string& latent) {
    static const std::regex pattern("^[ace][0-9]+$");
    return std::regex_match(latent, pattern);
}

GroupedModel twin_maker(const std::string& name, const std::vector<PathSpec>& paths, ColumnTable mz_data,
                        ColumnTable dz_data, const TwinOptions& options,
                        const std::optional<std::vector<std::string>>& manifests) {
    check_relatedness(options);
    const std::vector<std::string> variables = path_variables(paths);

    std::vector<std::string> bases;
    if (manifests) {
        bases = *manifests;
    } else {
        if (mz_data.ncols() == 0)
            throw ModelError("twin_maker: manifest bases must be given when no data are supplied");
        for (const auto& v : variables)
            if (mz_data.has(twin_column(v, options.sep, 1))) bases.push_back(v);
    }
    std::vector<std::string> latents;
    for (const auto& v : variables)
        if (std::find(bases.begin(), bases.end(), v) == bases.end()) latents.push_back(v);

    std::vector<std::string> components;
    for (const auto& l : latents)
        if (is_variance_component(l)) components.push_back(l);
    if (components.empty())
        throw ModelError("twin_maker: nothing to constrain (no latent named a1.., c1.. or e1..)");

    const std::string& sep = options.sep;
    auto rename = [&](const std::string& v, int twin) { return v == kConstant ? v : twin_column(v, sep, twin); };

    std::vector<std::string> manifest_names;
    std::vector<std::string> latent_names;
    for (int t = 1; t <= 2; ++t) {
        for (const auto& b : bases) manifest_names.push_back(twin_column(b, sep, t));
        for (const auto& l : latents) latent_names.push_back(twin_column(l, sep, t));
    }

    GroupedModel out;
    out.name = name;
    for (const char* zyg : {"MZ", "DZ"}) {
        const bool mz = std::string(zyg) == "MZ";
        RamModel model(zyg, manifest_names, latent_names);
        for (int t = 1; t <= 2; ++t)
            for (const auto& p : paths)
                if (p.defn) model.add_path(detail::defn(twin_column(p.from, sep, t)));
        for (int t = 1; t <= 2; ++t) {
            for (const auto& p : paths) {
                if (p.defn) continue;
                PathSpec q = normalized(p);
                q.from = rename(q.from, t);
                q.to = rename(q.to, t);
                if (q.label && is_def_label(*q.label)) q.label = twin_column(*q.label, sep, t);
                model.add_path(q);
            }
        }
        for (const auto& comp : components) {
            if (comp[0] == 'e') continue;
            const double r = mz ? 1.0 : (comp[0] == 'a' ? options.dzAr : options.dzCr);
            model.add_path(detail::path(twin_column(comp, sep, 1), twin_column(comp, sep, 2), false, r, {}, 2));
        }
        out.groups.push_back(Group{zyg, std::move(model), {}, nullptr});
        detail::attach(out.groups.back(), mz ? std::move(mz_data) : std::move(dz_data));
    }
    detail::finish(out, sep);
    return out;
}

GroupedModel build_ace(const std::vector<std::string>& phenotypes, ColumnTable mz_data, ColumnTable dz_data,
                       const TwinOptions& options, const std::string& name) {
    if (phenotypes.empty()) throw ModelError("build_ace: no phenotypes selected");
    const std::size_t k = phenotypes.size();
    const std::string& sep = options.sep;

    std::vector<PathSpec> paths;
    std::vector<std::string> binary;
    for (std::size_t i = 0; i < k; ++i) {
        const std::string& p = phenotypes[i];
        const std::string first = twin_column(p, sep, 1);
        double var = 1.0;
        double mean = 0.0;
        if (mz_data.ncols() > 0) {
            if (!mz_data.has(first)) throw DataError("build_ace: MZ data lack column '" + first + "'");
            const Column& col = mz_data.column(first);
            if (col.is_ordinal()) {
                if (std::get<OrdinalColumn>(col.data).levels.size() == 2) binary.push_back(p);
            } else {
                var = detail::column_variance(mz_data, first);
                mean = detail::column_mean(mz_data, first);
            }
        }
        const double start = std::sqrt(var / 3.0);
        for (const char comp : {'a', 'c', 'e'})
            for (std::size_t j = 0; j <= i; ++j) {
                const std::string latent = std::string(1, comp) + std::to_string(j + 1);
                const std::string label =
                    std::string(1, comp) + "_r" + std::to_string(i + 1) + "c" + std::to_string(j + 1);
                paths.push_back(detail::path(latent, p, true, i == j ? start : 0.0, label));
            }
        paths.push_back(detail::path(std::string(kConstant), p, true, mean, "mean_" + p));
        for (const auto& cov : options.covariates) {
            if (std::none_of(paths.begin(), paths.end(), [&](const PathSpec& s) { return s.defn && s.from == cov; }))
                paths.insert(paths.begin(), detail::defn(cov));
            paths.push_back(detail::path(def_proxy_name(cov), p, true, 0.0, "beta_" + cov + "_" + p));
        }
    }
    for (const char comp : {'a', 'c', 'e'})
        for (std::size_t j = 0; j < k; ++j) {
            const std::string latent = std::string(1, comp) + std::to_string(j + 1);
            paths.push_back(detail::path(latent, latent, false, 1.0, {}, 2));
        }

    GroupedModel model = twin_maker(name, paths, std::move(mz_data), std::move(dz_data), options, phenotypes);
    std::map<std::string, double> fixes;
    for (const auto& p : binary) {
        const auto i = static_cast<std::size_t>(std::find(phenotypes.begin(), phenotypes.end(), p) -
                                                phenotypes.begin());
        fixes["e_r" + std::to_string(i + 1) + "c" + std::to_string(i + 1)] = 1.0;
    }
    if (!fixes.empty()) model = fix_parameters(std::move(model), fixes);
    return model;
}

AceShares ace_shares(double a, double c, double e) {
    const double total = a * a + c * c + e * e;
    if (!(total > 0.0)) throw NumericError("ACE shares undefined for zero total variance");
    return {a * a / total, c * c / total, e * e / total};
}

GroupedModel fix_thresholds(GroupedModel model, const std::vector<std::string>& columns,
                            const std::vector<double>& cut_points) {
    for (const auto& column : columns) {
        bool found = false;
        for (auto& g : model.groups) {
            const auto idx = g.model.find_variable(column);
            if (!idx || !g.model.is_manifest(*idx)) continue;
            g.thresholds.set(column, ThresholdSet::fixed_at(cut_points));
            found = true;
            if (g.data) check_binding(g);
        }
        if (!found) throw ModelError("fix_thresholds: no group has manifest '" + column + "'");
    }
    return model;
}

void wire_ordinal_thresholds(GroupedModel& model, const std::string& sep) {
    for (auto& g : model.groups) {
        if (!g.data) continue;
        for (const auto& manifest : g.model.manifests()) {
            if (g.thresholds.contains(manifest)) continue;
            const Column* col = g.data->find(manifest);
            if (!col || !col->is_ordinal()) continue;
            const std::size_t levels = std::get<OrdinalColumn>(col->data).levels.size();
            if (levels < 2) throw DataError("ordinal column '" + manifest + "' needs at least two levels");
            const std::string prefix = "thr_" + strip_twin_suffix(manifest, sep);
            std::vector<ThresholdEntry> devs;
            for (std::size_t t = 0; t + 1 < levels; ++t) {
                if (t == 0) devs.push_back({0.0, false, {}});
                else if (t == 1) devs.push_back({1.0, false, {}});
                else devs.push_back({1.0, true, prefix + "_" + std::to_string(t + 1)});
            }
            g.thresholds.set(manifest, std::move(devs));
        }
    }
}

}  // namespace twinsem
