#include "builder_util.hpp"

#include <cmath>

namespace twinsem {

GroupedModel build_mrdoc(const std::vector<std::string>& pheno, const std::vector<std::string>& prss,
                         ColumnTable mz_data, ColumnTable dz_data, MrdocVariant variant,
                         const MrdocOptions& options, const std::string& name) {
    if (pheno.size() != 2) throw ModelError("MR-DoC needs exactly two phenotypes (exposure, outcome)");
    const std::size_t needed = variant == MrdocVariant::doc ? 0 : variant == MrdocVariant::mrdoc ? 1 : 2;
    if (prss.size() != needed)
        throw ModelError(std::string(variant == MrdocVariant::doc     ? "DoC"
                                     : variant == MrdocVariant::mrdoc ? "MRDoC"
                                                                      : "MRDoC2") +
                         " needs exactly " + std::to_string(needed) + " instrument(s), got " +
                         std::to_string(prss.size()));
    if (options.sibling_mode && variant != MrdocVariant::mrdoc2)
        throw ModelError("sibling mode is only identified for MRDoC2");
    if (!(options.dzAr > 0.0 && options.dzAr <= 1.0) || !(options.dzCr > 0.0 && options.dzCr <= 1.0))
        throw ModelError("dzAr and dzCr must lie in (0, 1]");
    if (options.sibling_mode && !(options.sibling_r > 0.0 && options.sibling_r <= 1.0))
        throw ModelError("sibling_r must lie in (0, 1]");

    const std::string& sep = options.sep;
    const std::string& x = pheno[0];
    const std::string& y = pheno[1];
    const std::vector<std::string> familial = options.sibling_mode ? std::vector<std::string>{"F"}
                                                                   : std::vector<std::string>{"A", "C"};
    std::vector<std::string> components = familial;
    components.push_back("E");

    std::vector<std::string> manifests;
    std::vector<std::string> latents;
    for (int t = 1; t <= 2; ++t) {
        manifests.push_back(twin_column(x, sep, t));
        manifests.push_back(twin_column(y, sep, t));
        for (const auto& p : prss) manifests.push_back(twin_column(p, sep, t));
        for (const auto& comp : components)
            for (int f = 1; f <= 2; ++f) latents.push_back(twin_column(comp + std::to_string(f), sep, t));
    }

    std::map<std::string, double> variance;
    std::map<std::string, double> mean;
    {
        const ColumnTable& reference = options.sibling_mode || mz_data.ncols() == 0 ? dz_data : mz_data;
        std::vector<std::string> bases = {x, y};
        bases.insert(bases.end(), prss.begin(), prss.end());
        for (const auto& b : bases) {
            variance[b] = reference.ncols() ? detail::column_variance(reference, twin_column(b, sep, 1)) : 1.0;
            mean[b] = reference.ncols() ? detail::column_mean(reference, twin_column(b, sep, 1)) : 0.0;
        }
    }
    auto var_of = [&](const std::string& base) { return variance.at(base); };
    auto mean_of = [&](const std::string& base) { return mean.at(base); };
    const double sx = std::sqrt(var_of(x) / 3.0);
    const double sy = std::sqrt(var_of(y) / 3.0);

    std::vector<std::string> groups =
        options.sibling_mode ? std::vector<std::string>{"SIB"} : std::vector<std::string>{"MZ", "DZ"};
    GroupedModel out;
    out.name = name;
    using detail::path;
    for (const auto& group : groups) {
        const bool mz = group == "MZ";
        RamModel model(group, manifests, latents);
        for (int t = 1; t <= 2; ++t) {
            const std::string xt = twin_column(x, sep, t);
            const std::string yt = twin_column(y, sep, t);
            for (const auto& comp : components) {
                const std::string lower = comp == "F" ? "f" : std::string(1, static_cast<char>(comp[0] + 32));
                const std::string l1 = twin_column(comp + "1", sep, t);
                const std::string l2 = twin_column(comp + "2", sep, t);
                model.add_path(path(l1, l1, false, 1.0, {}, 2));
                model.add_path(path(l2, l2, false, 1.0, {}, 2));
                model.add_path(path(l1, xt, true, sx, lower + "11"));
                model.add_path(path(l2, yt, true, sy, lower + "22"));
                const bool fixed_e21 = comp == "E" && variant != MrdocVariant::mrdoc2;
                model.add_path(path(l1, yt, !fixed_e21, 0.0, lower + "21"));
            }
            model.add_path(path(xt, yt, true, 0.0, "g1"));
            if (variant == MrdocVariant::mrdoc2) model.add_path(path(yt, xt, true, 0.0, "g2"));
            model.add_path(path(std::string(kConstant), xt, true, mean_of(x), "mean_" + x));
            model.add_path(path(std::string(kConstant), yt, true, mean_of(y), "mean_" + y));
            for (std::size_t i = 0; i < prss.size(); ++i) {
                const std::string pt = twin_column(prss[i], sep, t);
                model.add_path(path(pt, pt, true, var_of(prss[i]), "var_" + prss[i], 2));
                model.add_path(path(std::string(kConstant), pt, true, mean_of(prss[i]), "mean_" + prss[i]));
                if (variant == MrdocVariant::mrdoc) {
                    model.add_path(path(pt, xt, true, 0.0, "b1"));
                    model.add_path(path(pt, yt, true, 0.0, "b2"));
                } else {
                    model.add_path(path(pt, i == 0 ? xt : yt, true, 0.0, i == 0 ? "b1" : "b2"));
                }
            }
            if (prss.size() == 2)
                model.add_path(path(twin_column(prss[0], sep, t), twin_column(prss[1], sep, t), true, 0.0,
                                    "cov_" + prss[0] + "_" + prss[1], 2));
            for (const auto& cov : options.covariates) {
                const std::string column = twin_column(cov, sep, t);
                detail::add_covariate(model, column, xt, "beta_" + cov + "_" + x);
                detail::add_covariate(model, column, yt, "beta_" + cov + "_" + y);
            }
        }
        for (const auto& comp : familial) {
            const double r = options.sibling_mode ? options.sibling_r
                             : mz                 ? 1.0
                                                  : (comp == "A" ? options.dzAr : options.dzCr);
            for (int f = 1; f <= 2; ++f)
                model.add_path(path(twin_column(comp + std::to_string(f), sep, 1),
                                    twin_column(comp + std::to_string(f), sep, 2), false, r, {}, 2));
        }
        for (std::size_t i = 0; i < prss.size(); ++i)
            model.add_path(path(twin_column(prss[i], sep, 1), twin_column(prss[i], sep, 2), true,
                                (mz ? 0.5 : 0.25) * var_of(prss[i]), group + "_cov_" + prss[i], 2));
        if (prss.size() == 2) {
            const std::string label = group + "_cov_" + prss[0] + "_" + prss[1] + "_cross";
            model.add_path(path(twin_column(prss[0], sep, 1), twin_column(prss[1], sep, 2), true, 0.0, label, 2));
            model.add_path(path(twin_column(prss[1], sep, 1), twin_column(prss[0], sep, 2), true, 0.0, label, 2));
        }
        out.groups.push_back(Group{group, std::move(model), {}, nullptr});
        detail::attach(out.groups.back(), options.sibling_mode || !mz ? std::move(dz_data) : std::move(mz_data));
    }
    detail::finish(out, sep);
    return out;
}

}  // namespace twinsem
