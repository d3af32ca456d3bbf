#include "twinsem/fiml.hpp"

#include "twinsem/error.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numbers>

namespace twinsem {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
const double kLog2Pi = std::log(2.0 * std::numbers::pi);

}  // namespace

double compensated_sum(std::span<const double> values) {
    double sum = 0.0;
    double carry = 0.0;
    for (double v : values) {
        const double t = sum + v;
        if (std::abs(sum) >= std::abs(v)) carry += (sum - t) + v;
        else carry += (v - t) + sum;
        sum = t;
    }
    return sum + carry;
}

RowData extract_row(const Group& group, std::size_t row) {
    if (!group.data) throw DataError("group '" + group.name + "' has no bound dataset");
    const ColumnTable& data = *group.data;
    const auto& manifests = group.model.manifests();
    RowData out;
    out.values.assign(manifests.size(), kMissing);
    out.codes.assign(manifests.size(), kMissingCode);
    for (std::size_t i = 0; i < manifests.size(); ++i) {
        const Column& col = data.column(manifests[i]);
        if (group.thresholds.contains(manifests[i])) {
            out.codes[i] = std::get<OrdinalColumn>(col.data).codes.at(row);
        } else {
            out.values[i] = std::get<ContinuousColumn>(col.data).values.at(row);
        }
    }
    for (const auto& column : group.model.defvars()) out.defs[column] = data.continuous(column).at(row);
    return out;
}

RowResult row_neg2ll_from_moments(const Moments& moments, const std::vector<std::vector<double>>& cut_points,
                                  std::span<const double> values, std::span<const int> codes,
                                  const RectangleOptions& options) {
    const auto k = static_cast<Eigen::Index>(moments.mean.size());
    std::vector<Eigen::Index> cont;
    std::vector<Eigen::Index> ord;
    for (Eigen::Index i = 0; i < k; ++i) {
        const auto u = static_cast<std::size_t>(i);
        if (!cut_points[u].empty()) {
            if (codes[u] != kMissingCode) ord.push_back(i);
        } else if (!is_missing(values[u])) {
            cont.push_back(i);
        }
    }
    if (cont.empty() && ord.empty()) return {0.0, RowStatus::empty};

    const auto nc = static_cast<Eigen::Index>(cont.size());
    const auto no = static_cast<Eigen::Index>(ord.size());
    RowResult result;
    Eigen::VectorXd resid(nc);
    Eigen::MatrixXd scc(nc, nc);
    for (Eigen::Index i = 0; i < nc; ++i) {
        resid(i) = values[static_cast<std::size_t>(cont[static_cast<std::size_t>(i)])] -
                   moments.mean(cont[static_cast<std::size_t>(i)]);
        for (Eigen::Index j = 0; j < nc; ++j)
            scc(i, j) = moments.cov(cont[static_cast<std::size_t>(i)], cont[static_cast<std::size_t>(j)]);
    }

    Eigen::LLT<Eigen::MatrixXd> llt;
    if (nc > 0) {
        llt.compute(scc);
        if (llt.info() != Eigen::Success || !(llt.matrixL().toDenseMatrix().diagonal().minCoeff() > 0.0))
            return {kInf, RowStatus::not_positive_definite};
        const Eigen::VectorXd z = llt.matrixL().solve(resid);
        const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
        result.neg2ll = static_cast<double>(nc) * kLog2Pi + logdet + z.squaredNorm();
    }
    if (no == 0) return result;

    Eigen::VectorXd cmean(no);
    Eigen::MatrixXd ccov(no, no);
    for (Eigen::Index i = 0; i < no; ++i) {
        cmean(i) = moments.mean(ord[static_cast<std::size_t>(i)]);
        for (Eigen::Index j = 0; j < no; ++j)
            ccov(i, j) = moments.cov(ord[static_cast<std::size_t>(i)], ord[static_cast<std::size_t>(j)]);
    }
    if (nc > 0) {
        Eigen::MatrixXd soc(no, nc);
        for (Eigen::Index i = 0; i < no; ++i)
            for (Eigen::Index j = 0; j < nc; ++j)
                soc(i, j) = moments.cov(ord[static_cast<std::size_t>(i)], cont[static_cast<std::size_t>(j)]);
        const Eigen::MatrixXd gain = llt.solve(soc.transpose()).transpose();
        cmean += gain * resid;
        ccov -= gain * soc.transpose();
    }
    Eigen::VectorXd lower(no);
    Eigen::VectorXd upper(no);
    for (Eigen::Index i = 0; i < no; ++i) {
        const auto var = static_cast<std::size_t>(ord[static_cast<std::size_t>(i)]);
        const auto& cuts = cut_points[var];
        const int code = codes[var];
        if (code < 0 || static_cast<std::size_t>(code) > cuts.size())
            throw DataError("ordinal code out of range for its thresholds");
        lower(i) = code == 0 ? -kInf : cuts[static_cast<std::size_t>(code - 1)];
        upper(i) = static_cast<std::size_t>(code) == cuts.size() ? kInf : cuts[static_cast<std::size_t>(code)];
    }
    double p = 0.0;
    try {
        p = mvn_rectangle(cmean, ccov, lower, upper, options);
    } catch (const NumericError&) {
        return {kInf, RowStatus::not_positive_definite};
    }
    if (!(p > 0.0)) return {kInf, RowStatus::zero_probability};
    result.neg2ll += -2.0 * std::log(p);
    return result;
}

namespace {

std::vector<std::vector<double>> resolve_cut_points(const RamModel& model, const ThresholdSet& thresholds,
                                                    const ParameterVector& theta) {
    std::vector<std::vector<double>> cuts(model.num_manifests());
    for (std::size_t i = 0; i < model.num_manifests(); ++i) {
        const auto& name = model.manifests()[i];
        if (!thresholds.contains(name)) continue;
        std::vector<double> devs;
        for (const auto& d : thresholds.deviations(name)) devs.push_back(d.free ? theta.value(d.label) : d.value);
        cuts[i] = cumulative_thresholds(devs);
    }
    return cuts;
}

}  // namespace

RowResult row_neg2ll(const RamModel& model, const ParameterVector& theta, const ThresholdSet& thresholds,
                     const RowData& row, const RectangleOptions& options) {
    const auto cuts = resolve_cut_points(model, thresholds, theta);
    const Moments moments = expected_moments(model, theta, row.defs);
    return row_neg2ll_from_moments(moments, cuts, row.values, row.codes, options);
}

double total_neg2ll_reference(const GroupedModel& model, const ParameterVector& theta, const FimlOptions& options,
                              std::vector<GroupRowCounts>* counts) {
    std::vector<double> terms;
    if (counts) counts->clear();
    for (const auto& group : model.groups) {
        check_binding(group);
        GroupRowCounts c{group.name};
        const auto cuts = resolve_cut_points(group.model, group.thresholds, theta);
        for (std::size_t r = 0; r < group.data->nrows(); ++r) {
            RowData row = extract_row(group, r);
            const bool missing_def =
                std::any_of(row.defs.begin(), row.defs.end(), [](const auto& kv) { return is_missing(kv.second); });
            if (missing_def) {
                ++c.rows_missing_definition;
                continue;
            }
            Moments moments;
            try {
                moments = expected_moments(group.model, theta, row.defs);
            } catch (const NumericError&) {
                return kInf;
            }
            const RowResult res = row_neg2ll_from_moments(moments, cuts, row.values, row.codes, options.rectangle);
            if (res.status == RowStatus::empty) {
                ++c.rows_empty;
                continue;
            }
            ++c.rows_used;
            terms.push_back(res.neg2ll);
        }
        if (counts) counts->push_back(c);
    }
    return compensated_sum(terms);
}

double total_neg2ll(const GroupedModel& model, const ParameterVector& theta, const FimlOptions& options) {
    FimlObjective objective(model, options);
    const ParameterVector& layout = objective.parameters();
    std::vector<double> values(layout.size());
    for (std::size_t i = 0; i < layout.size(); ++i) values[i] = theta.value(layout.labels()[i]);
    return objective(values);
}

std::vector<std::string> reachable_defvar_targets(const RamModel& model, std::string_view column) {
    const std::string label = def_proxy_name(column);
    std::vector<bool> affected(model.num_variables(), false);
    bool known = false;
    if (std::find(model.defvars().begin(), model.defvars().end(), column) != model.defvars().end()) {
        known = true;
        affected[model.variable_index(label)] = true;
    }
    model.for_each_cell([&](CellRef ref, const Cell& cell) {
        if (cell.label != label) return;
        known = true;
        affected[ref.row] = true;
        if (ref.matrix == CellMatrix::S) affected[ref.col] = true;
    });
    if (!known) throw ModelError("'" + std::string(column) + "' is not a definition variable of the model");

    std::vector<std::vector<std::size_t>> children(model.num_variables());
    for (const auto& [key, cell] : model.a_cells()) {
        (void)cell;
        children[key.second].push_back(key.first);
    }
    std::deque<std::size_t> queue;
    for (std::size_t v = 0; v < affected.size(); ++v)
        if (affected[v]) queue.push_back(v);
    while (!queue.empty()) {
        const std::size_t v = queue.front();
        queue.pop_front();
        for (std::size_t w : children[v]) {
            if (affected[w]) continue;
            affected[w] = true;
            queue.push_back(w);
        }
    }
    std::vector<std::string> out;
    for (std::size_t i = 0; i < model.num_manifests(); ++i)
        if (affected[i]) out.push_back(model.manifests()[i]);
    return out;
}

}  // namespace twinsem
