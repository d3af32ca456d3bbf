#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace twinsem {

/// Reserved pseudo-variable: one-headed paths from it write the means table.
inline constexpr std::string_view kConstant = "one";
/// Prefix of definition-variable proxies and of labels substituted per data row.
inline constexpr std::string_view kDefPrefix = "def_";

inline bool is_def_label(std::string_view label) { return label.starts_with(kDefPrefix); }
inline std::string def_proxy_name(std::string_view column) { return std::string(kDefPrefix) + std::string(column); }

/// One arc of a path diagram, or (defn=true) the declaration of a definition variable.
struct PathSpec {
    std::string from;
    std::string to;
    int arrows = 1;
    bool free = false;
    std::optional<double> value;
    std::optional<std::string> label;
    bool defn = false;

    bool operator==(const PathSpec&) const = default;
};

/// Start value used when a spec leaves `value` unset.
double default_value(const PathSpec& spec);
/// Label given to free paths that arrive without one.
std::string default_label(const PathSpec& spec);
/// Fills in value and label defaults; the canonical form used for serialization.
PathSpec normalized(PathSpec spec);

struct Cell {
    double value = 0.0;
    bool free = false;
    std::string label;

    bool operator==(const Cell&) const = default;
};

enum class CellMatrix { A, S, M };

/// Position of a cell. A: (row=to, col=from). S: row <= col. M: (row=variable, col=0).
struct CellRef {
    CellMatrix matrix;
    std::size_t row;
    std::size_t col;
};

using CellTable = std::map<std::pair<std::size_t, std::size_t>, Cell>;

/// RAM model: variables are ordered manifests first, then latents. Only non-default
/// cells are stored; anything absent is a fixed zero.
class RamModel {
public:
    RamModel() = default;
    RamModel(std::string name, std::vector<std::string> manifests, std::vector<std::string> latents);

    /// Adds (or overwrites) the cell(s) described by `spec`.
    RamModel& add_path(const PathSpec& spec);
    RamModel& add_paths(std::span<const PathSpec> specs);

    /// Direct cell access for builders. The S position is canonicalized.
    void set_cell(CellMatrix matrix, std::size_t row, std::size_t col, Cell cell);
    const Cell* find_cell(CellMatrix matrix, std::size_t row, std::size_t col) const;

    const std::string& name() const { return name_; }
    void set_name(std::string name) { name_ = std::move(name); }
    const std::vector<std::string>& manifests() const { return manifests_; }
    const std::vector<std::string>& latents() const { return latents_; }
    const std::vector<std::string>& defvars() const { return defvars_; }
    const std::vector<PathSpec>& paths() const { return paths_; }

    std::size_t num_manifests() const { return manifests_.size(); }
    std::size_t num_variables() const { return manifests_.size() + latents_.size(); }
    const std::string& variable_name(std::size_t index) const;
    std::optional<std::size_t> find_variable(std::string_view name) const;
    std::size_t variable_index(std::string_view name) const;
    bool is_manifest(std::size_t index) const { return index < manifests_.size(); }

    const CellTable& a_cells() const { return a_; }
    const CellTable& s_cells() const { return s_; }
    const std::map<std::size_t, Cell>& m_cells() const { return m_; }

    template <class Fn>
    void for_each_cell(Fn&& fn) const {
        for (const auto& [key, cell] : a_) fn(CellRef{CellMatrix::A, key.first, key.second}, cell);
        for (const auto& [key, cell] : s_) fn(CellRef{CellMatrix::S, key.first, key.second}, cell);
        for (const auto& [row, cell] : m_) fn(CellRef{CellMatrix::M, row, 0}, cell);
    }

    template <class Fn>
    void for_each_cell_mut(Fn&& fn) {
        for (auto& [key, cell] : a_) fn(CellRef{CellMatrix::A, key.first, key.second}, cell);
        for (auto& [key, cell] : s_) fn(CellRef{CellMatrix::S, key.first, key.second}, cell);
        for (auto& [row, cell] : m_) fn(CellRef{CellMatrix::M, row, 0}, cell);
    }

    /// Registers `column` as a definition variable with its zero-variance proxy latent.
    void declare_defvar(const std::string& column);

private:
    void add_latent(const std::string& name);
    void check_cell_label(const Cell& cell) const;

    std::string name_;
    std::vector<std::string> manifests_;
    std::vector<std::string> latents_;
    std::vector<std::string> defvars_;
    std::vector<PathSpec> paths_;
    std::unordered_map<std::string, std::size_t> index_;
    CellTable a_;
    CellTable s_;
    std::map<std::size_t, Cell> m_;
};

struct Bounds {
    double lower = -std::numeric_limits<double>::infinity();
    double upper = std::numeric_limits<double>::infinity();

    bool operator==(const Bounds&) const = default;
};

/// Free parameters, one entry per distinct label.
class ParameterVector {
public:
    void add(std::string label, double value, Bounds bounds = {});

    std::size_t size() const { return labels_.size(); }
    bool empty() const { return labels_.empty(); }
    const std::vector<std::string>& labels() const { return labels_; }
    const std::vector<double>& values() const { return values_; }
    std::vector<double>& values() { return values_; }
    const std::vector<Bounds>& bounds() const { return bounds_; }
    std::vector<Bounds>& bounds() { return bounds_; }

    std::optional<std::size_t> find(std::string_view label) const;
    double value(std::string_view label) const;
    void set(std::string_view label, double value);

private:
    std::vector<std::string> labels_;
    std::vector<double> values_;
    std::vector<Bounds> bounds_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct Moments {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};

/// Definition-variable values for one data row, keyed by column name.
using DefinitionRow = std::map<std::string, double, std::less<>>;

/// A RamModel resolved against a parameter layout: every cell is a constant, a
/// parameter slot, or a definition-variable slot. Cheap to evaluate repeatedly.
class MomentProgram {
public:
    MomentProgram(const RamModel& model, const ParameterVector& layout);

    std::size_t num_variables() const { return nvars_; }
    std::size_t num_manifests() const { return nmanifests_; }
    const std::vector<std::string>& defvars() const { return defvars_; }

    bool defvars_in_a() const { return def_in_a_; }
    bool defvars_in_s() const { return def_in_s_; }
    bool defvars_in_m() const { return def_in_m_; }

    /// Moments with the given definition values. Returns false if (I - A) is singular.
    bool evaluate(std::span<const double> theta, std::span<const double> defvalues, Moments& out) const;

    /// As evaluate(), but also returns F (I - A)^-1 so that mean shifts from
    /// definition-labelled M cells can be applied per row without re-solving.
    bool evaluate_with_filter(std::span<const double> theta, std::span<const double> defvalues, Moments& out,
                              Eigen::MatrixXd& filtered_inverse) const;

    /// (defvar slot, variable index) for every definition-labelled M cell.
    const std::vector<std::pair<int, Eigen::Index>>& mean_def_cells() const { return mean_def_cells_; }

private:
    struct Slot {
        CellMatrix matrix;
        Eigen::Index row;
        Eigen::Index col;
        double value;
        int param;
        int defvar;
    };

    std::size_t nvars_ = 0;
    std::size_t nmanifests_ = 0;
    std::vector<Slot> slots_;
    std::vector<std::string> defvars_;
    std::vector<std::pair<int, Eigen::Index>> mean_def_cells_;
    bool def_in_a_ = false;
    bool def_in_s_ = false;
    bool def_in_m_ = false;
};

/// Model-implied manifest means and covariance, with `def_` cells substituted from `defrow`.
Moments expected_moments(const RamModel& model, const ParameterVector& theta, const DefinitionRow& defrow = {});

/// Smallest |pivot| of (I - A) below which the model is treated as singular.
inline constexpr double kSingularPivot = 1e-12;

}  // namespace twinsem
