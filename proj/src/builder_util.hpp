#pragma once

#include "twinsem/builders.hpp"
#include "twinsem/error.hpp"

#include <memory>
#include <string>
#include <vector>

namespace twinsem::detail {

/// Attaches `data` unless it is empty (structure-only build).
inline void attach(Group& group, ColumnTable data) {
    if (data.ncols() == 0) return;
    group.data = std::make_shared<const ColumnTable>(std::move(data));
}

/// Wires ordinal thresholds and validates every bound group.
inline void finish(GroupedModel& model, const std::string& sep) {
    wire_ordinal_thresholds(model, sep);
    for (const auto& g : model.groups)
        if (g.data) check_binding(g);
}

inline PathSpec path(std::string from, std::string to, bool free, double value, std::string label = {},
                     int arrows = 1) {
    PathSpec p;
    p.from = std::move(from);
    p.to = std::move(to);
    p.arrows = arrows;
    p.free = free;
    p.value = value;
    if (!label.empty()) p.label = std::move(label);
    return p;
}

inline PathSpec defn(std::string column) {
    PathSpec p;
    p.from = std::move(column);
    p.defn = true;
    return p;
}

/// Mean shift def_<covar> -> target labelled beta_<covar>_<pheno>.
inline void add_covariate(RamModel& model, const std::string& covar_column, const std::string& target,
                          const std::string& label) {
    model.add_path(defn(covar_column));
    model.add_path(path(def_proxy_name(covar_column), target, true, 0.0, label));
}

inline double column_variance(const ColumnTable& data, const std::string& column) {
    const Column* col = data.find(column);
    if (!col || !col->is_continuous()) return 1.0;
    const auto& v = std::get<ContinuousColumn>(col->data).values;
    double n = 0.0, mean = 0.0, m2 = 0.0;
    for (double x : v) {
        if (is_missing(x)) continue;
        n += 1.0;
        const double d = x - mean;
        mean += d / n;
        m2 += d * (x - mean);
    }
    return n > 1.0 && m2 > 0.0 ? m2 / (n - 1.0) : 1.0;
}

inline double column_mean(const ColumnTable& data, const std::string& column) {
    const Column* col = data.find(column);
    if (!col || !col->is_continuous()) return 0.0;
    double n = 0.0, sum = 0.0;
    for (double x : std::get<ContinuousColumn>(col->data).values)
        if (!is_missing(x)) {
            n += 1.0;
            sum += x;
        }
    return n > 0.0 ? sum / n : 0.0;
}

}  // namespace twinsem::detail
