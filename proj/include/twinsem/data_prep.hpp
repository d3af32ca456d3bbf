#pragma once

#include "twinsem/column_table.hpp"
#include "twinsem/formula.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace twinsem {

/// Covariate placeholder written where a twin lacks a covariate its cotwin has.
inline constexpr double kPlaceholder = 99999.0;

inline const std::vector<std::string> kDefaultTwinSuffixes{"_T1", "_T2"};

/// Appends `<var>bin<suffix>` (ordinal, levels <low>/<high>) and `<var>cont<suffix>`
/// for each source column. Below `censp`: bin <low>, cont missing. Otherwise bin
/// missing, cont the value.
ColumnTable make_bin_cont_pair(const ColumnTable& data, const std::vector<std::string>& vars, double censp,
                               const std::vector<std::string>& suffixes = {});

/// Where a twin misses `covar` but the cotwin has it, writes the placeholder and
/// blanks that twin's `pheno`.
ColumnTable update_covariate_placeholders(const ColumnTable& data, const std::string& covar,
                                          const std::string& pheno,
                                          const std::vector<std::string>& suffixes = kDefaultTwinSuffixes);

struct PrepWarning {
    std::size_t row = 0;
    std::string column;
    std::string message;
};

/// One warning per row and twin where the placeholder sits next to an observed phenotype.
std::vector<PrepWarning> validate_placeholders(const ColumnTable& data, const std::string& covar,
                                               const std::string& pheno,
                                               const std::vector<std::string>& suffixes = kDefaultTwinSuffixes);

/// Replaces each dv by its OLS residuals (with intercept). Rows missing the dv or
/// any regressor get a missing residual. With suffixes, `dv`/covariate names are
/// bases and one pooled regression is fitted across the suffixed copies.
ColumnTable residualize(const ColumnTable& data, const std::vector<std::string>& dvs,
                        const std::vector<std::string>& covariates, const std::vector<std::string>& suffixes = {},
                        std::vector<std::string>* warnings = nullptr);

ColumnTable residualize(const ColumnTable& data, const Formula& formula, const std::vector<std::string>& suffixes = {},
                        std::vector<std::string>* warnings = nullptr);

/// Standardizes each base with the mean and SD pooled over its suffixed copies.
ColumnTable scale_wide_twin(const ColumnTable& data, const std::vector<std::string>& bases,
                            const std::vector<std::string>& suffixes = kDefaultTwinSuffixes);

struct ZygosityLabels {
    std::vector<std::string> mz{"MZ", "MZMM", "MZFF"};
    std::vector<std::string> dz{"DZ", "DZMM", "DZFF", "DZOS"};
};

struct TwinSummaryRow {
    std::string variable;
    double mean = 0.0;
    double sd = 0.0;
    std::size_t n_mz = 0;
    double r_mz = 0.0;
    std::size_t n_dz = 0;
    double r_dz = 0.0;
};

/// Per base: pooled mean and SD over all copies, and cross-twin Pearson
/// correlations over complete MZ and DZ pairs (NaN when undefined).
std::vector<TwinSummaryRow> summarize_twin_data(const ColumnTable& data, const std::vector<std::string>& bases,
                                                const std::string& zygosity_column,
                                                const std::vector<std::string>& suffixes = kDefaultTwinSuffixes,
                                                const ZygosityLabels& labels = {});

/// Pearson correlation over rows where both values are present; NaN when undefined.
double pearson(const std::vector<double>& x, const std::vector<double>& y, std::size_t* pairs = nullptr);

}  // namespace twinsem
