#pragma once

#include "twinsem/column_table.hpp"
#include "twinsem/grouped_model.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace twinsem {

struct SimOptions {
    std::uint64_t seed = 1;
    /// Rows per group unless overridden in `n_per_group`.
    std::size_t n = 1000;
    std::map<std::string, std::size_t> n_per_group;
    /// Manifest columns cut into ordinal levels "0".."k" at these liability thresholds.
    std::map<std::string, std::vector<double>> ordinal_cuts;
    /// Columns replaced by their bin/cont pair at `lod` (original kept).
    std::vector<std::string> censor_columns;
    std::optional<double> lod;
    /// MCAR probability of blanking each definition-variable cell.
    double covariate_missing_rate = 0.0;
};

struct SimulatedGroup {
    std::string name;
    ColumnTable data;
};

/// Draws each group from the multivariate normal implied by `structure` at
/// `truth` (free labels missing from `truth` keep their start values).
/// Definition columns are drawn N(0, 1) and the moments are recomputed per row.
/// Group g uses its own mt19937_64 stream seeded by splitmix64(seed, g).
std::vector<SimulatedGroup> simulate(const GroupedModel& structure, const std::map<std::string, double>& truth,
                                     const SimOptions& options = {});

/// Stream seed for group `index`.
std::uint64_t group_seed(std::uint64_t seed, std::size_t index);

}  // namespace twinsem
