#pragma once

#include "twinsem/column_table.hpp"
#include "twinsem/grouped_model.hpp"
#include "twinsem/ram_model.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace twinsem {

/// Options shared by the twin designs. Builders given an empty ColumnTable
/// (no columns) return the structure without binding data, which is what the
/// simulators use.
struct TwinOptions {
    std::string sep = "_T";
    double dzAr = 0.5;
    double dzCr = 1.0;
    /// Definition-variable covariates on the phenotype means: the covariate base
    /// name `cov` adds def_<cov><sep>i -> <pheno><sep>i labelled beta_<cov>_<pheno>.
    std::vector<std::string> covariates;
};

/// `<base><sep><twin>`.
std::string twin_column(const std::string& base, const std::string& sep, int twin);

/// Latent names a1, a2, ..., c1, ..., e1, ... carry the variance components.
bool is_variance_component(const std::string& latent);

/// Duplicates `paths` per twin, adds cross-twin links between like-named a- and
/// c-latents (1 in MZ; dzAr / dzCr in DZ) and binds the two datasets. Labels are
/// left unsuffixed so each parameter is shared by both twins and both groups.
/// Manifest bases are the path variables with a `<name><sep>1` column in mzData,
/// unless `manifests` is given.
GroupedModel twin_maker(const std::string& name, const std::vector<PathSpec>& paths, ColumnTable mz_data,
                        ColumnTable dz_data, const TwinOptions& options = {},
                        const std::optional<std::vector<std::string>>& manifests = std::nullopt);

/// Cholesky ACE on the selected phenotypes, expressed as a path set and handed to twin_maker.
/// Loadings are labelled a_r{i}c{j}, c_r{i}c{j}, e_r{i}c{j}; means mean_<pheno>.
GroupedModel build_ace(const std::vector<std::string>& phenotypes, ColumnTable mz_data, ColumnTable dz_data,
                       const TwinOptions& options = {}, const std::string& name = "ACE");

/// Standardized variance proportions of a univariate ACE fit: {a2, c2, e2}.
struct AceShares {
    double a2 = 0.0;
    double c2 = 0.0;
    double e2 = 0.0;
};
AceShares ace_shares(double a, double c, double e);

enum class ClpmVariant { clpm, riclpm };

struct ClpmOptions {
    /// Column bases; waves are numbered 1..T after the base. When empty the first
    /// T numeric columns are x and the next T are y.
    std::string x_base;
    std::string y_base;
    /// RI-CLPM: one innovation variance per variable for all later waves.
    bool equal_innovations = false;
    std::vector<std::string> covariates;
};

/// Labels: autoregressions x2x_12, y2y_12, cross-lags x2y_12, y2x_12 (wave
/// numbers joined with '_' from wave 10 on); wave-1 var_x1, var_y1, cov_xy1;
/// innovations res_x{t}, res_y{t}, rcov_xy{t}; means mean_x{t}, mean_y{t}.
/// RI-CLPM adds RIx / RIy (var_RIx, var_RIy, cov_RI) and within-person latents.
GroupedModel build_clpm(std::size_t waves, ClpmVariant variant, ColumnTable data, const ClpmOptions& options = {},
                        const std::string& name = "CLPM");

std::string clpm_label(const std::string& kind, std::size_t from_wave, std::size_t to_wave);

enum class MrdocVariant { doc, mrdoc, mrdoc2 };

struct MrdocOptions : TwinOptions {
    /// MRDoC2 with siblings: A and C merge into F, one group bound to the DZ data.
    bool sibling_mode = false;
    /// Cross-sibling correlation of F in sibling mode.
    double sibling_r = 0.5;
};

/// Per twin: exposure X and outcome Y, each with a Cholesky ACE decomposition
/// (a11: A1->X, a21: A1->Y, a22: A2->Y; likewise c.., e..), causal path g1 (X->Y)
/// and instrument paths b1 (PRS->X). MRDoC adds b2 (PRS->Y) and fixes e21 at 0;
/// MRDoC2 uses two instruments, adds g2 (Y->X) and frees e21. DoC is the MRDoC
/// structure without instruments.
GroupedModel build_mrdoc(const std::vector<std::string>& pheno, const std::vector<std::string>& prss,
                         ColumnTable mz_data, ColumnTable dz_data, MrdocVariant variant,
                         const MrdocOptions& options = {}, const std::string& name = "MRDoC");

enum class SexlimVariant { homogeneity, scalar, nonscalar };

struct SexlimData {
    ColumnTable mzm;
    ColumnTable dzm;
    ColumnTable mzf;
    ColumnTable dzf;
    /// Opposite-sex pairs: twin 1 male, twin 2 female.
    ColumnTable dzo;
};

/// Five-group correlated-factors sex limitation. Magnitudes a_i / am_i / af_i
/// (likewise c, e); correlations ra_ij, rc_ij, re_ij (or sex-specific
/// ram_ij / raf_ij ...); means mean_m_<v>, mean_f_<v>. Nonscalar frees the
/// DZO cross-sex correlations ramf_ij (or rcmf_ij) on the chosen component.
GroupedModel build_sexlim(const std::vector<std::string>& phenotypes, SexlimData data, char a_or_c,
                          SexlimVariant variant, const TwinOptions& options = {},
                          const std::string& name = "SexLim");

/// Replaces the thresholds of the listed ordinal columns with fixed cut points, in every group.
GroupedModel fix_thresholds(GroupedModel model, const std::vector<std::string>& columns,
                            const std::vector<double>& cut_points);

/// Adds thresholds for every manifest bound to an ordinal column. Labels thr_<base>_k
/// are shared across twins and groups. With two or more thresholds the first two
/// are fixed at 0 and 1; a single threshold is fixed at 0 and the caller must fix
/// a scale parameter.
void wire_ordinal_thresholds(GroupedModel& model, const std::string& sep);

}  // namespace twinsem
