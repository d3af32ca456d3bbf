#include "twinsem/ram_model.hpp"

#include "twinsem/error.hpp"

#include <algorithm>
#include <cmath>

namespace twinsem {

double default_value(const PathSpec& spec) {
    if (spec.value) return *spec.value;
    if (!spec.free) return 0.0;
    if (spec.from == kConstant) return 0.0;
    if (spec.arrows == 2) return spec.from == spec.to ? 1.0 : 0.0;
    return 0.9;
}

std::string default_label(const PathSpec& spec) {
    if (spec.label) return *spec.label;
    if (spec.defn) return def_proxy_name(spec.from);
    if (spec.arrows == 2) return spec.from + "_with_" + spec.to;
    return spec.from + "_to_" + spec.to;
}

PathSpec normalized(PathSpec spec) {
    if (spec.defn) {
        spec.to = spec.to.empty() ? spec.from : spec.to;
        spec.arrows = 1;
        spec.free = false;
        spec.value = spec.value.value_or(0.0);
        spec.label = def_proxy_name(spec.from);
        return spec;
    }
    spec.value = default_value(spec);
    if (spec.free && !spec.label) spec.label = default_label(spec);
    return spec;
}

RamModel::RamModel(std::string name, std::vector<std::string> manifests, std::vector<std::string> latents)
    : name_(std::move(name)) {
    for (auto& m : manifests) {
        if (m == kConstant) throw ModelError("'one' is reserved and cannot be a manifest");
        if (index_.count(m)) throw ModelError("variable '" + m + "' declared twice");
        index_.emplace(m, manifests_.size());
        manifests_.push_back(std::move(m));
    }
    for (auto& l : latents) add_latent(l);
}

void RamModel::add_latent(const std::string& name) {
    if (name == kConstant) throw ModelError("'one' is reserved and cannot be a latent");
    if (index_.count(name)) throw ModelError("variable '" + name + "' declared twice");
    index_.emplace(name, manifests_.size() + latents_.size());
    latents_.push_back(name);
}

const std::string& RamModel::variable_name(std::size_t index) const {
    return index < manifests_.size() ? manifests_.at(index) : latents_.at(index - manifests_.size());
}

std::optional<std::size_t> RamModel::find_variable(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::size_t RamModel::variable_index(std::string_view name) const {
    auto idx = find_variable(name);
    if (!idx) throw ModelError("unknown variable '" + std::string(name) + "' in model '" + name_ + "'");
    return *idx;
}

void RamModel::declare_defvar(const std::string& column) {
    if (std::find(defvars_.begin(), defvars_.end(), column) != defvars_.end()) return;
    const std::string proxy = def_proxy_name(column);
    if (!find_variable(proxy)) add_latent(proxy);
    defvars_.push_back(column);
    m_[variable_index(proxy)] = Cell{0.0, false, proxy};
}

void RamModel::check_cell_label(const Cell& cell) const {
    if (cell.free && cell.label.empty()) throw ModelError("free cell without a label");
    if (!is_def_label(cell.label)) return;
    if (cell.free) throw ModelError("definition label '" + cell.label + "' cannot be a free parameter");
    const std::string column = cell.label.substr(kDefPrefix.size());
    if (std::find(defvars_.begin(), defvars_.end(), column) == defvars_.end())
        throw ModelError("label '" + cell.label + "' refers to undeclared definition variable '" + column + "'");
}

void RamModel::set_cell(CellMatrix matrix, std::size_t row, std::size_t col, Cell cell) {
    check_cell_label(cell);
    const std::size_t n = num_variables();
    if (row >= n || (matrix != CellMatrix::M && col >= n)) throw ModelError("cell index out of range");
    switch (matrix) {
        case CellMatrix::A: a_[{row, col}] = std::move(cell); break;
        case CellMatrix::S: s_[{std::min(row, col), std::max(row, col)}] = std::move(cell); break;
        case CellMatrix::M: m_[row] = std::move(cell); break;
    }
}

const Cell* RamModel::find_cell(CellMatrix matrix, std::size_t row, std::size_t col) const {
    switch (matrix) {
        case CellMatrix::A: {
            auto it = a_.find({row, col});
            return it == a_.end() ? nullptr : &it->second;
        }
        case CellMatrix::S: {
            auto it = s_.find({std::min(row, col), std::max(row, col)});
            return it == s_.end() ? nullptr : &it->second;
        }
        case CellMatrix::M: {
            auto it = m_.find(row);
            return it == m_.end() ? nullptr : &it->second;
        }
    }
    return nullptr;
}

RamModel& RamModel::add_path(const PathSpec& spec) {
    if (spec.defn) {
        if (spec.from.empty()) throw ModelError("definition variable spec without a column name");
        declare_defvar(spec.from);
        paths_.push_back(spec);
        return *this;
    }
    if (spec.arrows != 1 && spec.arrows != 2)
        throw ModelError("arrows must be 1 or 2 (got " + std::to_string(spec.arrows) + ")");
    if (spec.to == kConstant) throw ModelError("paths cannot point into 'one'");

    Cell cell{default_value(spec), spec.free, spec.label.value_or(spec.free ? default_label(spec) : std::string{})};
    check_cell_label(cell);

    const std::size_t to = variable_index(spec.to);
    if (spec.from == kConstant) {
        if (spec.arrows == 2) throw ModelError("two-headed path from 'one' to '" + spec.to + "'");
        m_[to] = std::move(cell);
    } else {
        const std::size_t from = variable_index(spec.from);
        if (spec.arrows == 1) {
            a_[{to, from}] = std::move(cell);
        } else {
            s_[{std::min(from, to), std::max(from, to)}] = std::move(cell);
        }
    }
    paths_.push_back(spec);
    return *this;
}

RamModel& RamModel::add_paths(std::span<const PathSpec> specs) {
    for (const auto& spec : specs) add_path(spec);
    return *this;
}

void ParameterVector::add(std::string label, double value, Bounds bounds) {
    if (index_.count(label)) throw ModelError("duplicate parameter label '" + label + "'");
    index_.emplace(label, labels_.size());
    labels_.push_back(std::move(label));
    values_.push_back(value);
    bounds_.push_back(bounds);
}

std::optional<std::size_t> ParameterVector::find(std::string_view label) const {
    auto it = index_.find(std::string(label));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

double ParameterVector::value(std::string_view label) const {
    auto idx = find(label);
    if (!idx) throw ModelError("unknown parameter '" + std::string(label) + "'");
    return values_[*idx];
}

void ParameterVector::set(std::string_view label, double value) {
    auto idx = find(label);
    if (!idx) throw ModelError("unknown parameter '" + std::string(label) + "'");
    values_[*idx] = value;
}

MomentProgram::MomentProgram(const RamModel& model, const ParameterVector& layout)
    : nvars_(model.num_variables()), nmanifests_(model.num_manifests()), defvars_(model.defvars()) {
    model.for_each_cell([&](CellRef ref, const Cell& cell) {
        Slot slot{ref.matrix, static_cast<Eigen::Index>(ref.row), static_cast<Eigen::Index>(ref.col), cell.value, -1, -1};
        if (cell.free) {
            auto idx = layout.find(cell.label);
            if (!idx) throw ModelError("parameter vector lacks free label '" + cell.label + "'");
            slot.param = static_cast<int>(*idx);
        } else if (is_def_label(cell.label)) {
            const std::string column = cell.label.substr(kDefPrefix.size());
            auto it = std::find(defvars_.begin(), defvars_.end(), column);
            slot.defvar = static_cast<int>(it - defvars_.begin());
            switch (ref.matrix) {
                case CellMatrix::A: def_in_a_ = true; break;
                case CellMatrix::S: def_in_s_ = true; break;
                case CellMatrix::M:
                    def_in_m_ = true;
                    mean_def_cells_.emplace_back(slot.defvar, slot.row);
                    break;
            }
        }
        slots_.push_back(slot);
    });
}

bool MomentProgram::evaluate_with_filter(std::span<const double> theta, std::span<const double> defvalues,
                                         Moments& out, Eigen::MatrixXd& filtered_inverse) const {
    const auto n = static_cast<Eigen::Index>(nvars_);
    const auto k = static_cast<Eigen::Index>(nmanifests_);
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd m = Eigen::VectorXd::Zero(n);
    for (const Slot& slot : slots_) {
        double v = slot.value;
        if (slot.param >= 0) {
            v = theta[static_cast<std::size_t>(slot.param)];
        } else if (slot.defvar >= 0) {
            v = static_cast<std::size_t>(slot.defvar) < defvalues.size()
                    ? defvalues[static_cast<std::size_t>(slot.defvar)]
                    : 0.0;
        }
        switch (slot.matrix) {
            case CellMatrix::A: a(slot.row, slot.col) = v; break;
            case CellMatrix::S:
                s(slot.row, slot.col) = v;
                s(slot.col, slot.row) = v;
                break;
            case CellMatrix::M: m(slot.row) = v; break;
        }
    }

    // Solve X (I - A) = F, i.e. X = F (I - A)^-1, via the transposed system.
    Eigen::MatrixXd ia = Eigen::MatrixXd::Identity(n, n) - a;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(ia.transpose());
    const double min_pivot = lu.matrixLU().diagonal().cwiseAbs().minCoeff();
    if (!(min_pivot >= kSingularPivot)) return false;
    filtered_inverse = lu.solve(Eigen::MatrixXd::Identity(n, k)).transpose();

    out.mean = filtered_inverse * m;
    Eigen::MatrixXd half = filtered_inverse * s;
    out.cov.noalias() = half * filtered_inverse.transpose();
    // Exact symmetry by construction.
    for (Eigen::Index i = 0; i < k; ++i)
        for (Eigen::Index j = 0; j < i; ++j) out.cov(j, i) = out.cov(i, j);
    return true;
}

bool MomentProgram::evaluate(std::span<const double> theta, std::span<const double> defvalues, Moments& out) const {
    Eigen::MatrixXd scratch;
    return evaluate_with_filter(theta, defvalues, out, scratch);
}

Moments expected_moments(const RamModel& model, const ParameterVector& theta, const DefinitionRow& defrow) {
    MomentProgram program(model, theta);
    std::vector<double> defvalues;
    defvalues.reserve(model.defvars().size());
    for (const auto& column : model.defvars()) {
        auto it = defrow.find(column);
        if (it == defrow.end()) throw ModelError("no value supplied for definition variable '" + column + "'");
        defvalues.push_back(it->second);
    }
    Moments out;
    if (!program.evaluate(theta.values(), defvalues, out))
        throw NumericError("(I - A) is singular for model '" + model.name() + "'");
    return out;
}

}  // namespace twinsem
