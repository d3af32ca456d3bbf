#pragma once

#include "twinsem/grouped_model.hpp"
#include "twinsem/mvn.hpp"
#include "twinsem/ram_model.hpp"

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace twinsem {

enum class RowStatus {
    ok,
    /// No modelled variable observed; contributes zero.
    empty,
    /// Trimmed continuous (or conditional ordinal) covariance not positive definite.
    not_positive_definite,
    /// Ordinal rectangle with zero probability.
    zero_probability,
};

struct RowResult {
    double neg2ll = 0.0;
    RowStatus status = RowStatus::ok;
};

/// One data row aligned with a model's manifests.
struct RowData {
    /// Continuous manifests; NaN when missing. Entries for ordinal manifests are ignored.
    std::vector<double> values;
    /// Level index for ordinal manifests, kMissingCode otherwise.
    std::vector<int> codes;
    DefinitionRow defs;
};

RowData extract_row(const Group& group, std::size_t row);

/// -2 ln L of the observed part of one row. Continuous observations contribute the
/// trimmed normal density; ordinal observations the rectangle probability of their
/// liabilities conditional on the observed continuous block.
RowResult row_neg2ll(const RamModel& model, const ParameterVector& theta, const ThresholdSet& thresholds,
                     const RowData& row, const RectangleOptions& options = {});

/// Same, from already computed moments. `cut_points[i]` is empty for continuous manifests.
RowResult row_neg2ll_from_moments(const Moments& moments, const std::vector<std::vector<double>>& cut_points,
                                  std::span<const double> values, std::span<const int> codes,
                                  const RectangleOptions& options = {});

struct FimlOptions {
    RectangleOptions rectangle;
    /// OpenMP worker count for row evaluation; 0 keeps the runtime default.
    int threads = 0;
};

struct GroupRowCounts {
    std::string group;
    std::size_t rows_used = 0;
    std::size_t rows_empty = 0;
    std::size_t rows_missing_definition = 0;

    std::size_t rows_dropped() const { return rows_empty + rows_missing_definition; }
};

/// Serial row-by-row evaluation that recomputes the moments for every row. Kept as
/// the reference the pattern-grouped parallel kernel is tested against.
double total_neg2ll_reference(const GroupedModel& model, const ParameterVector& theta,
                              const FimlOptions& options = {}, std::vector<GroupRowCounts>* counts = nullptr);

/// Multi-group FIML objective with data preprocessed once: complete-pattern
/// continuous rows are reduced to per-pattern sufficient statistics, the remaining
/// rows are evaluated in parallel and summed in row order.
class FimlObjective {
public:
    explicit FimlObjective(const GroupedModel& model, FimlOptions options = {});
    ~FimlObjective();
    FimlObjective(FimlObjective&&) noexcept;
    FimlObjective& operator=(FimlObjective&&) noexcept;

    /// Parameter layout with start values and bounds.
    const ParameterVector& parameters() const { return layout_; }
    const std::vector<GroupRowCounts>& row_counts() const { return counts_; }

    /// Total -2 ln L at `theta` (aligned with parameters()); +inf when rejected.
    double operator()(std::span<const double> theta) const;
    /// Per-group contributions, in group order.
    std::vector<double> group_values(std::span<const double> theta) const;

private:
    struct GroupPlan;
    double evaluate_group(const GroupPlan& plan, std::span<const double> theta) const;

    ParameterVector layout_;
    FimlOptions options_;
    std::vector<GroupPlan> plans_;
    std::vector<GroupRowCounts> counts_;
};

/// Total -2 ln L via FimlObjective; theta is matched to the model's free labels by name.
double total_neg2ll(const GroupedModel& model, const ParameterVector& theta, const FimlOptions& options = {});

/// Manifests whose implied mean or covariance depends on definition column `column`.
std::vector<std::string> reachable_defvar_targets(const RamModel& model, std::string_view column);

/// Neumaier-compensated sum in the given order.
double compensated_sum(std::span<const double> values);

}  // namespace twinsem
