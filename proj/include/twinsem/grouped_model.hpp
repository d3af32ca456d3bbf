#pragma once

#include "twinsem/column_table.hpp"
#include "twinsem/ram_model.hpp"

#include <map>
#include <memory>
#include <string>
#include <vector>

namespace twinsem {

/// Smallest admissible increment between consecutive free thresholds.
inline constexpr double kMinThresholdGap = 1e-6;

struct ThresholdEntry {
    double value = 0.0;
    bool free = false;
    std::string label;

    bool operator==(const ThresholdEntry&) const = default;
};

/// Per ordinal manifest: a base threshold followed by strictly positive increments.
class ThresholdSet {
public:
    void set(const std::string& variable, std::vector<ThresholdEntry> deviations);
    bool contains(std::string_view variable) const { return columns_.find(variable) != columns_.end(); }
    bool empty() const { return columns_.empty(); }
    const std::vector<ThresholdEntry>& deviations(std::string_view variable) const;
    std::vector<ThresholdEntry>& deviations(std::string_view variable);
    const std::map<std::string, std::vector<ThresholdEntry>, std::less<>>& columns() const { return columns_; }
    std::map<std::string, std::vector<ThresholdEntry>, std::less<>>& columns() { return columns_; }

    /// Free deviations labelled `<prefix>_1..n`, spread evenly over [-1, 1].
    static std::vector<ThresholdEntry> free_deviations(const std::string& prefix, std::size_t count);
    /// All-fixed deviations reproducing the given increasing cut points.
    static std::vector<ThresholdEntry> fixed_at(const std::vector<double>& cut_points);

    bool operator==(const ThresholdSet&) const = default;

private:
    std::map<std::string, std::vector<ThresholdEntry>, std::less<>> columns_;
};

/// Cumulative cut points; throws ParameterSpaceError if they are not strictly increasing.
std::vector<double> cumulative_thresholds(const std::vector<double>& deviations);

struct Group {
    std::string name;
    RamModel model;
    ThresholdSet thresholds;
    std::shared_ptr<const ColumnTable> data;
};

/// Named submodels over distinct data tables sharing parameters by label.
struct GroupedModel {
    std::string name;
    std::vector<Group> groups;
    /// Optional box constraints by parameter label.
    std::map<std::string, Bounds> bounds;

    Group& group(std::string_view group_name);
    const Group& group(std::string_view group_name) const;
};

GroupedModel single_group(const RamModel& model, ColumnTable data, ThresholdSet thresholds = {});

/// Attaches a dataset to a group after checking that it covers the group's variables.
void bind_data(GroupedModel& model, std::string_view group_name, ColumnTable data);
void check_binding(const Group& group);

/// One entry per distinct free label across all groups, in first-appearance order.
ParameterVector pack_parameters(const GroupedModel& model);
/// Writes theta into every free cell that carries one of its labels.
GroupedModel unpack_parameters(GroupedModel model, const ParameterVector& theta);

/// Turns the named free parameters into fixed cells at the given values.
GroupedModel fix_parameters(GroupedModel model, const std::map<std::string, double>& values);
/// Bijective label rename.
GroupedModel rename_parameters(GroupedModel model, const std::map<std::string, std::string>& renames);
/// Makes every cell labelled `from` carry label `to` (equality constraint).
GroupedModel equate_parameters(GroupedModel model, const std::string& from, const std::string& to);

/// Free labels, sorted.
std::vector<std::string> free_labels(const GroupedModel& model);

}  // namespace twinsem
