#include "builder_util.hpp"

#include <array>
#include <cmath>

namespace twinsem {

namespace {

struct SexlimSpec {
    const std::vector<std::string>& phenotypes;
    std::string sep;
    SexlimVariant variant;
    char chosen;
    std::map<char, std::vector<double>> magnitude_start;  // by sex
    std::map<char, std::vector<double>> mean_start;
};

std::string lower(char comp) { return std::string(1, static_cast<char>(comp - 'A' + 'a')); }

std::string magnitude_label(const SexlimSpec& spec, char comp, char sex, std::size_t i) {
    const std::string sexkey = spec.variant == SexlimVariant::homogeneity ? "" : std::string(1, sex);
    return lower(comp) + sexkey + "_" + spec.phenotypes[i];
}

/// Sex key of the correlation matrix used by component `comp` for a person of `sex`.
std::string correlation_key(const SexlimSpec& spec, char comp, char sex) {
    if (spec.variant != SexlimVariant::nonscalar) return "";
    if (comp == 'E' || comp == spec.chosen) return std::string(1, sex);
    return "";
}

std::string correlation_label(char comp, const std::string& key, std::size_t i, std::size_t j) {
    return "r" + lower(comp) + key + "_" + std::to_string(i + 1) + "_" + std::to_string(j + 1);
}

std::string latent(char comp, std::size_t i, const std::string& tag) {
    return std::string(1, comp) + std::to_string(i + 1) + tag;
}

/// Unit variances on `names` with within-set correlations labelled by `key`.
void correlated_block(RamModel& model, char comp, const std::string& key, const std::vector<std::string>& names) {
    using detail::path;
    for (std::size_t i = 0; i < names.size(); ++i) {
        model.add_path(path(names[i], names[i], false, 1.0, {}, 2));
        for (std::size_t j = 0; j < i; ++j)
            model.add_path(path(names[j], names[i], true, 0.0, correlation_label(comp, key, j, i), 2));
    }
}

RamModel sexlim_group(const std::string& name, std::array<char, 2> sexes, double r_a, double r_c, bool dzo,
                      const SexlimSpec& spec) {
    using detail::path;
    const std::size_t k = spec.phenotypes.size();
    std::vector<std::string> manifests;
    std::vector<std::string> latents;
    for (int t = 1; t <= 2; ++t) {
        for (const auto& p : spec.phenotypes) manifests.push_back(twin_column(p, spec.sep, t));
        for (char comp : {'A', 'C', 'E'})
            for (std::size_t i = 0; i < k; ++i) latents.push_back(latent(comp, i, twin_column("", spec.sep, t)));
    }
    const bool direct = dzo && spec.variant == SexlimVariant::nonscalar;
    for (char comp : {'A', 'C'}) {
        if (direct && comp == spec.chosen) continue;
        const double r = comp == 'A' ? r_a : r_c;
        for (std::size_t i = 0; i < k; ++i) latents.push_back(latent(comp, i, "_G"));
        if (r < 1.0)
            for (int t = 1; t <= 2; ++t)
                for (std::size_t i = 0; i < k; ++i)
                    latents.push_back(latent(comp, i, "_U" + twin_column("", spec.sep, t)));
    }

    RamModel model(name, manifests, latents);
    for (int t = 1; t <= 2; ++t) {
        const char sex = sexes[static_cast<std::size_t>(t - 1)];
        const std::string tag = twin_column("", spec.sep, t);
        for (std::size_t i = 0; i < k; ++i) {
            const std::string v = twin_column(spec.phenotypes[i], spec.sep, t);
            const double start = spec.magnitude_start.at(sex)[i];
            for (char comp : {'A', 'C', 'E'})
                model.add_path(path(latent(comp, i, tag), v, true, start, magnitude_label(spec, comp, sex, i)));
            model.add_path(path(std::string(kConstant), v, true, spec.mean_start.at(sex)[i],
                                "mean_" + std::string(1, sex) + "_" + spec.phenotypes[i]));
        }
        std::vector<std::string> e_names;
        for (std::size_t i = 0; i < k; ++i) e_names.push_back(latent('E', i, tag));
        correlated_block(model, 'E', correlation_key(spec, 'E', sex), e_names);
    }

    for (char comp : {'A', 'C'}) {
        const double r = comp == 'A' ? r_a : r_c;
        if (direct && comp == spec.chosen) {
            std::array<std::vector<std::string>, 2> names;
            for (int t = 1; t <= 2; ++t) {
                const std::string tag = twin_column("", spec.sep, t);
                for (std::size_t i = 0; i < k; ++i) names[static_cast<std::size_t>(t - 1)].push_back(latent(comp, i, tag));
                correlated_block(model, comp, correlation_key(spec, comp, sexes[static_cast<std::size_t>(t - 1)]),
                                 names[static_cast<std::size_t>(t - 1)]);
            }
            for (std::size_t i = 0; i < k; ++i)
                for (std::size_t j = 0; j < k; ++j)
                    model.add_path(path(names[0][i], names[1][j], true, i == j ? r : 0.0,
                                        correlation_label(comp, "mf", std::min(i, j), std::max(i, j)), 2));
            continue;
        }
        const std::string key = correlation_key(spec, comp, sexes[0]);
        if (key != correlation_key(spec, comp, sexes[1]))
            throw ModelError("sex limitation: component " + std::string(1, comp) +
                             " cannot share a factor across sexes with sex-specific correlations");
        std::vector<std::string> shared;
        for (std::size_t i = 0; i < k; ++i) shared.push_back(latent(comp, i, "_G"));
        correlated_block(model, comp, key, shared);
        for (int t = 1; t <= 2; ++t) {
            const std::string tag = twin_column("", spec.sep, t);
            for (std::size_t i = 0; i < k; ++i)
                model.add_path(path(shared[i], latent(comp, i, tag), false, std::sqrt(r)));
            if (r < 1.0) {
                std::vector<std::string> unique;
                for (std::size_t i = 0; i < k; ++i) unique.push_back(latent(comp, i, "_U" + tag));
                correlated_block(model, comp, key, unique);
                for (std::size_t i = 0; i < k; ++i)
                    model.add_path(path(unique[i], latent(comp, i, tag), false, std::sqrt(1.0 - r)));
            }
        }
    }
    return model;
}

}  // namespace

GroupedModel build_sexlim(const std::vector<std::string>& phenotypes, SexlimData data, char a_or_c,
                          SexlimVariant variant, const TwinOptions& options, const std::string& name) {
    if (phenotypes.empty()) throw ModelError("sex limitation: selDVs is empty");
    if (a_or_c != 'A' && a_or_c != 'C') throw ModelError("sex limitation: A_or_C must be \"A\" or \"C\"");
    if (!(options.dzAr > 0.0 && options.dzAr <= 1.0) || !(options.dzCr > 0.0 && options.dzCr <= 1.0))
        throw ModelError("dzAr and dzCr must lie in (0, 1]");

    std::array<ColumnTable*, 5> tables{&data.mzm, &data.dzm, &data.mzf, &data.dzf, &data.dzo};
    const std::array<const char*, 5> names{"MZM", "DZM", "MZF", "DZF", "DZO"};
    const bool structure_only =
        std::all_of(tables.begin(), tables.end(), [](const ColumnTable* t) { return t->ncols() == 0; });
    if (!structure_only)
        for (std::size_t g = 0; g < tables.size(); ++g)
            if (tables[g]->ncols() == 0) throw DataError("sex limitation: group " + std::string(names[g]) + " has no data");
    if (!structure_only)
        for (std::size_t g = 0; g < tables.size(); ++g)
            for (const auto& p : phenotypes)
                for (int t = 1; t <= 2; ++t)
                    if (!tables[g]->has(twin_column(p, options.sep, t)))
                        throw DataError("sex limitation: group " + std::string(names[g]) + " lacks column '" +
                                        twin_column(p, options.sep, t) + "'");

    SexlimSpec spec{phenotypes, options.sep, variant, a_or_c, {}, {}};
    for (char sex : {'m', 'f'}) {
        const ColumnTable& ref = sex == 'm' ? data.mzm : data.mzf;
        std::vector<double> start;
        std::vector<double> means;
        for (const auto& p : phenotypes) {
            const std::string column = twin_column(p, options.sep, 1);
            const double var = structure_only ? 1.0 : detail::column_variance(ref, column);
            start.push_back(std::sqrt(var / 3.0));
            means.push_back(structure_only ? 0.0 : detail::column_mean(ref, column));
        }
        spec.magnitude_start[sex] = std::move(start);
        spec.mean_start[sex] = std::move(means);
    }

    GroupedModel out;
    out.name = name;
    const std::array<std::array<char, 2>, 5> sexes{{{'m', 'm'}, {'m', 'm'}, {'f', 'f'}, {'f', 'f'}, {'m', 'f'}}};
    for (std::size_t g = 0; g < 5; ++g) {
        const bool mz = g == 0 || g == 2;
        RamModel model = sexlim_group(names[g], sexes[g], mz ? 1.0 : options.dzAr, mz ? 1.0 : options.dzCr, g == 4,
                                      spec);
        for (const auto& cov : options.covariates)
            for (int t = 1; t <= 2; ++t)
                for (const auto& p : phenotypes)
                    detail::add_covariate(model, twin_column(cov, options.sep, t), twin_column(p, options.sep, t),
                                          "beta_" + cov + "_" + p);
        out.groups.push_back(Group{names[g], std::move(model), {}, nullptr});
        detail::attach(out.groups.back(), std::move(*tables[g]));
    }

    detail::finish(out, options.sep);
    return out;
}

}  // namespace twinsem
