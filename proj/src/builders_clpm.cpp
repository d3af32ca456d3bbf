#include "builder_util.hpp"

namespace twinsem {

std::string clpm_label(const std::string& kind, std::size_t from_wave, std::size_t to_wave) {
    const bool joined = from_wave >= 10 || to_wave >= 10;
    return kind + "_" + std::to_string(from_wave) + (joined ? "_" : "") + std::to_string(to_wave);
}

GroupedModel build_clpm(std::size_t waves, ClpmVariant variant, ColumnTable data, const ClpmOptions& options,
                        const std::string& name) {
    const bool ri = variant == ClpmVariant::riclpm;
    if (waves < 2) throw ModelError("CLPM needs at least 2 waves");
    if (ri && waves < 3) throw ModelError("RI-CLPM needs at least 3 waves to identify its variance structure");

    std::vector<std::string> xs;
    std::vector<std::string> ys;
    if (!options.x_base.empty() || !options.y_base.empty()) {
        if (options.x_base.empty() || options.y_base.empty())
            throw ModelError("CLPM: give both x and y column bases");
        for (std::size_t t = 1; t <= waves; ++t) {
            xs.push_back(options.x_base + std::to_string(t));
            ys.push_back(options.y_base + std::to_string(t));
        }
    } else {
        if (data.ncols() == 0) throw ModelError("CLPM: column bases are required when no data are supplied");
        std::vector<std::string> numeric;
        for (const auto& c : data.columns())
            if (c.is_continuous()) numeric.push_back(c.name);
        if (numeric.size() < 2 * waves)
            throw DataError("CLPM: data have " + std::to_string(numeric.size()) + " numeric columns, need " +
                            std::to_string(2 * waves));
        xs.assign(numeric.begin(), numeric.begin() + static_cast<std::ptrdiff_t>(waves));
        ys.assign(numeric.begin() + static_cast<std::ptrdiff_t>(waves),
                  numeric.begin() + static_cast<std::ptrdiff_t>(2 * waves));
    }
    if (data.ncols() > 0)
        for (const auto* set : {&xs, &ys})
            for (const auto& c : *set)
                if (!data.has(c)) throw DataError("CLPM: data lack column '" + c + "'");

    std::vector<std::string> manifests = xs;
    manifests.insert(manifests.end(), ys.begin(), ys.end());
    std::vector<std::string> latents;
    std::vector<std::string> wx = xs;
    std::vector<std::string> wy = ys;
    if (ri) {
        latents = {"RIx", "RIy"};
        for (std::size_t t = 1; t <= waves; ++t) {
            wx[t - 1] = "wx" + std::to_string(t);
            wy[t - 1] = "wy" + std::to_string(t);
        }
        latents.insert(latents.end(), wx.begin(), wx.end());
        latents.insert(latents.end(), wy.begin(), wy.end());
    }

    RamModel model(name, manifests, latents);
    using detail::path;
    for (std::size_t t = 1; t <= waves; ++t) {
        const std::string ts = std::to_string(t);
        model.add_path(path(std::string(kConstant), xs[t - 1], true, detail::column_mean(data, xs[t - 1]),
                            "mean_x" + ts));
        model.add_path(path(std::string(kConstant), ys[t - 1], true, detail::column_mean(data, ys[t - 1]),
                            "mean_y" + ts));
        if (ri) {
            model.add_path(path("RIx", xs[t - 1], false, 1.0));
            model.add_path(path("RIy", ys[t - 1], false, 1.0));
            model.add_path(path(wx[t - 1], xs[t - 1], false, 1.0));
            model.add_path(path(wy[t - 1], ys[t - 1], false, 1.0));
        }
    }
    if (ri) {
        model.add_path(path("RIx", "RIx", true, 0.5, "var_RIx", 2));
        model.add_path(path("RIy", "RIy", true, 0.5, "var_RIy", 2));
        model.add_path(path("RIx", "RIy", true, 0.0, "cov_RI", 2));
    }
    const double vx = data.ncols() ? detail::column_variance(data, xs[0]) : 1.0;
    const double vy = data.ncols() ? detail::column_variance(data, ys[0]) : 1.0;
    const double share = ri ? 0.5 : 1.0;
    model.add_path(path(wx[0], wx[0], true, share * vx, "var_x1", 2));
    model.add_path(path(wy[0], wy[0], true, share * vy, "var_y1", 2));
    model.add_path(path(wx[0], wy[0], true, 0.0, "cov_xy1", 2));
    for (std::size_t t = 1; t < waves; ++t) {
        const std::size_t next = t + 1;
        const std::string ns = std::to_string(next);
        model.add_path(path(wx[t - 1], wx[t], true, 0.3, clpm_label("x2x", t, next)));
        model.add_path(path(wy[t - 1], wy[t], true, 0.3, clpm_label("y2y", t, next)));
        model.add_path(path(wx[t - 1], wy[t], true, 0.0, clpm_label("x2y", t, next)));
        model.add_path(path(wy[t - 1], wx[t], true, 0.0, clpm_label("y2x", t, next)));
        const bool shared = options.equal_innovations;
        model.add_path(path(wx[t], wx[t], true, share * 0.7 * vx, shared ? "res_x" : "res_x" + ns, 2));
        model.add_path(path(wy[t], wy[t], true, share * 0.7 * vy, shared ? "res_y" : "res_y" + ns, 2));
        model.add_path(path(wx[t], wy[t], true, 0.0, shared ? "rcov_xy" : "rcov_xy" + ns, 2));
    }
    for (const auto& cov : options.covariates)
        for (std::size_t i = 0; i < manifests.size(); ++i)
            detail::add_covariate(model, cov, manifests[i],
                                  "beta_" + cov + "_" + (i < waves ? "x" : "y") + std::to_string(i % waves + 1));

    GroupedModel out;
    out.name = name;
    out.groups.push_back(Group{name, std::move(model), {}, nullptr});
    detail::attach(out.groups.back(), std::move(data));
    detail::finish(out, "");
    return out;
}

}  // namespace twinsem
