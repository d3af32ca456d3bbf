#include "twinsem/grouped_model.hpp"

#include "twinsem/error.hpp"

#include <algorithm>
#include <set>
#include <unordered_map>

namespace twinsem {

void ThresholdSet::set(const std::string& variable, std::vector<ThresholdEntry> deviations) {
    if (deviations.empty()) throw ModelError("ordinal variable '" + variable + "' needs at least one threshold");
    for (const auto& d : deviations) {
        if (d.free && d.label.empty()) throw ModelError("free threshold of '" + variable + "' without a label");
        if (d.free && is_def_label(d.label)) throw ModelError("threshold label '" + d.label + "' uses the def_ prefix");
    }
    columns_[variable] = std::move(deviations);
}

const std::vector<ThresholdEntry>& ThresholdSet::deviations(std::string_view variable) const {
    auto it = columns_.find(variable);
    if (it == columns_.end()) throw ModelError("no thresholds for '" + std::string(variable) + "'");
    return it->second;
}

std::vector<ThresholdEntry>& ThresholdSet::deviations(std::string_view variable) {
    auto it = columns_.find(variable);
    if (it == columns_.end()) throw ModelError("no thresholds for '" + std::string(variable) + "'");
    return it->second;
}

std::vector<ThresholdEntry> ThresholdSet::free_deviations(const std::string& prefix, std::size_t count) {
    std::vector<ThresholdEntry> out;
    const double step = count > 1 ? 2.0 / static_cast<double>(count - 1) : 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        const double value = i == 0 ? (count > 1 ? -1.0 : 0.0) : step;
        out.push_back({value, true, prefix + "_" + std::to_string(i + 1)});
    }
    return out;
}

std::vector<ThresholdEntry> ThresholdSet::fixed_at(const std::vector<double>& cut_points) {
    std::vector<ThresholdEntry> out;
    for (std::size_t i = 0; i < cut_points.size(); ++i) {
        const double value = i == 0 ? cut_points[0] : cut_points[i] - cut_points[i - 1];
        if (i > 0 && !(value > 0.0)) throw ModelError("fixed thresholds must be strictly increasing");
        out.push_back({value, false, {}});
    }
    return out;
}

std::vector<double> cumulative_thresholds(const std::vector<double>& deviations) {
    std::vector<double> out(deviations.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < deviations.size(); ++i) {
        if (i > 0 && !(deviations[i] > 0.0))
            throw ParameterSpaceError("threshold increments must be strictly positive");
        acc = i == 0 ? deviations[0] : acc + deviations[i];
        out[i] = acc;
    }
    return out;
}

Group& GroupedModel::group(std::string_view group_name) {
    for (auto& g : groups)
        if (g.name == group_name) return g;
    throw ModelError("no group named '" + std::string(group_name) + "'");
}

const Group& GroupedModel::group(std::string_view group_name) const {
    for (const auto& g : groups)
        if (g.name == group_name) return g;
    throw ModelError("no group named '" + std::string(group_name) + "'");
}

void check_binding(const Group& group) {
    if (!group.data) throw DataError("group '" + group.name + "' has no bound dataset");
    const ColumnTable& data = *group.data;
    for (const auto& manifest : group.model.manifests()) {
        const Column* col = data.find(manifest);
        if (!col) throw DataError("group '" + group.name + "': dataset lacks column '" + manifest + "'");
        if (group.thresholds.contains(manifest)) {
            if (!col->is_ordinal())
                throw DataError("group '" + group.name + "': column '" + manifest + "' must be ordinal");
            const auto& levels = std::get<OrdinalColumn>(col->data).levels;
            if (levels.size() != group.thresholds.deviations(manifest).size() + 1)
                throw DataError("group '" + group.name + "': column '" + manifest + "' has " +
                                std::to_string(levels.size()) + " levels but " +
                                std::to_string(group.thresholds.deviations(manifest).size()) + " thresholds");
        } else if (!col->is_continuous()) {
            throw DataError("group '" + group.name + "': column '" + manifest +
                            "' must be continuous (or declare thresholds for it)");
        }
    }
    for (const auto& [variable, devs] : group.thresholds.columns()) {
        (void)devs;
        if (!group.model.find_variable(variable) || !group.model.is_manifest(group.model.variable_index(variable)))
            throw ModelError("group '" + group.name + "': thresholds declared for non-manifest '" + variable + "'");
    }
    for (const auto& column : group.model.defvars()) {
        const Column* col = data.find(column);
        if (!col) throw DataError("group '" + group.name + "': dataset lacks definition column '" + column + "'");
        if (!col->is_continuous())
            throw DataError("group '" + group.name + "': definition column '" + column + "' must be numeric");
    }
}

GroupedModel single_group(const RamModel& model, ColumnTable data, ThresholdSet thresholds) {
    GroupedModel out;
    out.name = model.name();
    out.groups.push_back(Group{model.name(), model, std::move(thresholds), nullptr});
    bind_data(out, model.name(), std::move(data));
    return out;
}

void bind_data(GroupedModel& model, std::string_view group_name, ColumnTable data) {
    Group& g = model.group(group_name);
    g.data = std::make_shared<const ColumnTable>(std::move(data));
    check_binding(g);
}

namespace {

struct LabelUse {
    bool free = false;
    bool fixed = false;
};

template <class Fn>
void for_each_labelled(const GroupedModel& model, Fn&& fn) {
    for (const auto& g : model.groups) {
        g.model.for_each_cell([&](CellRef, const Cell& cell) {
            if (!cell.label.empty()) fn(cell.label, cell.free, cell.value, false);
        });
        for (const auto& [variable, devs] : g.thresholds.columns()) {
            (void)variable;
            for (std::size_t i = 0; i < devs.size(); ++i)
                if (!devs[i].label.empty()) fn(devs[i].label, devs[i].free, devs[i].value, i > 0);
        }
    }
}

}  // namespace

ParameterVector pack_parameters(const GroupedModel& model) {
    std::unordered_map<std::string, LabelUse> uses;
    for_each_labelled(model, [&](const std::string& label, bool free, double, bool) {
        auto& use = uses[label];
        (free ? use.free : use.fixed) = true;
    });
    for (const auto& [label, use] : uses) {
        if (use.free && use.fixed)
            throw ModelError("label '" + label + "' is free in one cell and fixed in another");
        if (use.free && is_def_label(label))
            throw ModelError("free parameter label '" + label + "' collides with a definition variable");
    }

    ParameterVector out;
    for_each_labelled(model, [&](const std::string& label, bool free, double value, bool increment) {
        if (!free) return;
        auto idx = out.find(label);
        if (!idx) {
            Bounds b;
            if (auto it = model.bounds.find(label); it != model.bounds.end()) b = it->second;
            out.add(label, value, b);
            idx = out.find(label);
        }
        if (increment) {
            auto& b = out.bounds()[*idx];
            b.lower = std::max(b.lower, kMinThresholdGap);
        }
    });
    return out;
}

GroupedModel unpack_parameters(GroupedModel model, const ParameterVector& theta) {
    for (auto& g : model.groups) {
        g.model.for_each_cell_mut([&](CellRef, Cell& cell) {
            if (!cell.free) return;
            if (auto idx = theta.find(cell.label)) cell.value = theta.values()[*idx];
        });
        for (auto& [variable, devs] : g.thresholds.columns()) {
            (void)variable;
            for (auto& d : devs)
                if (d.free)
                    if (auto idx = theta.find(d.label)) d.value = theta.values()[*idx];
        }
    }
    return model;
}

GroupedModel fix_parameters(GroupedModel model, const std::map<std::string, double>& values) {
    std::set<std::string> seen;
    for (auto& g : model.groups) {
        g.model.for_each_cell_mut([&](CellRef, Cell& cell) {
            if (!cell.free) return;
            if (auto it = values.find(cell.label); it != values.end()) {
                cell.free = false;
                cell.value = it->second;
                seen.insert(cell.label);
            }
        });
        for (auto& [variable, devs] : g.thresholds.columns()) {
            (void)variable;
            for (auto& d : devs) {
                if (!d.free) continue;
                if (auto it = values.find(d.label); it != values.end()) {
                    d.free = false;
                    d.value = it->second;
                    seen.insert(d.label);
                }
            }
        }
    }
    for (const auto& [label, value] : values) {
        (void)value;
        if (!seen.count(label)) throw ModelError("cannot fix '" + label + "': not a free parameter");
    }
    return model;
}

GroupedModel rename_parameters(GroupedModel model, const std::map<std::string, std::string>& renames) {
    std::set<std::string> targets;
    for (const auto& [from, to] : renames) {
        (void)from;
        if (!targets.insert(to).second) throw ModelError("rename is not one-to-one at '" + to + "'");
    }
    std::set<std::string> existing;
    for_each_labelled(model, [&](const std::string& label, bool, double, bool) { existing.insert(label); });
    for (const auto& to : targets)
        if (existing.count(to) && !renames.count(to)) throw ModelError("rename target '" + to + "' already in use");

    auto apply = [&](std::string& label) {
        if (auto it = renames.find(label); it != renames.end()) label = it->second;
    };
    for (auto& g : model.groups) {
        g.model.for_each_cell_mut([&](CellRef, Cell& cell) { apply(cell.label); });
        for (auto& [variable, devs] : g.thresholds.columns()) {
            (void)variable;
            for (auto& d : devs) apply(d.label);
        }
    }
    std::map<std::string, Bounds> bounds;
    for (const auto& [old_label, b] : model.bounds) {
        std::string label = old_label;
        apply(label);
        bounds[label] = b;
    }
    model.bounds = std::move(bounds);
    return model;
}

GroupedModel equate_parameters(GroupedModel model, const std::string& from, const std::string& to) {
    for (auto& g : model.groups) {
        g.model.for_each_cell_mut([&](CellRef, Cell& cell) {
            if (cell.label == from) cell.label = to;
        });
        for (auto& [variable, devs] : g.thresholds.columns()) {
            (void)variable;
            for (auto& d : devs)
                if (d.label == from) d.label = to;
        }
    }
    return model;
}

std::vector<std::string> free_labels(const GroupedModel& model) {
    const ParameterVector p = pack_parameters(model);
    std::vector<std::string> out = p.labels();
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace twinsem
