#include "twinsem/error.hpp"
#include "twinsem/fiml.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>

namespace twinsem {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
const double kLog2Pi = std::log(2.0 * std::numbers::pi);

using Index = Eigen::Index;

Eigen::MatrixXd sub_matrix(const Eigen::MatrixXd& m, const std::vector<Index>& rows, const std::vector<Index>& cols) {
    Eigen::MatrixXd out(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < cols.size(); ++j) out(static_cast<Index>(i), static_cast<Index>(j)) = m(rows[i], cols[j]);
    return out;
}

Eigen::VectorXd sub_vector(const Eigen::VectorXd& v, const std::vector<Index>& idx) {
    Eigen::VectorXd out(static_cast<Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) out(static_cast<Index>(i)) = v(idx[i]);
    return out;
}

bool positive_llt(const Eigen::MatrixXd& m, Eigen::LLT<Eigen::MatrixXd>& llt, double& logdet) {
    llt.compute(m);
    if (llt.info() != Eigen::Success) return false;
    const Eigen::VectorXd diag = llt.matrixLLT().diagonal();
    if (!(diag.minCoeff() > 0.0) || !diag.allFinite()) return false;
    logdet = 2.0 * diag.array().log().sum();
    return true;
}

}  // namespace

struct FimlObjective::GroupPlan {
    struct Summary {
        std::vector<Index> vars;
        double n = 0.0;
        Eigen::VectorXd mean;
        Eigen::MatrixXd scatter;
    };
    struct Pattern {
        std::vector<Index> cont;
        std::vector<Index> ord;
    };
    struct ThresholdSlot {
        int param;
        double value;
    };

    std::string name;
    MomentProgram program;
    std::size_t nmanifests = 0;
    std::vector<std::vector<ThresholdSlot>> thresholds;
    std::vector<Summary> summaries;
    std::vector<Pattern> patterns;
    std::vector<std::size_t> row_pattern;
    Eigen::MatrixXd values;
    Eigen::MatrixXi codes;
    Eigen::MatrixXd defvalues;
    bool per_row_moments = false;

    GroupPlan(const Group& group, const ParameterVector& layout, GroupRowCounts& counts);
};

FimlObjective::GroupPlan::GroupPlan(const Group& group, const ParameterVector& layout, GroupRowCounts& counts)
    : name(group.name), program(group.model, layout), nmanifests(group.model.num_manifests()) {
    check_binding(group);
    const ColumnTable& data = *group.data;
    const auto& manifests = group.model.manifests();
    const std::size_t k = manifests.size();
    per_row_moments = program.defvars_in_a() || program.defvars_in_s();

    thresholds.resize(k);
    std::vector<const std::vector<double>*> cont_cols(k, nullptr);
    std::vector<const std::vector<int>*> ord_cols(k, nullptr);
    for (std::size_t i = 0; i < k; ++i) {
        const Column& col = data.column(manifests[i]);
        if (group.thresholds.contains(manifests[i])) {
            ord_cols[i] = &std::get<OrdinalColumn>(col.data).codes;
            for (const auto& d : group.thresholds.deviations(manifests[i])) {
                int param = -1;
                if (d.free) param = static_cast<int>(*layout.find(d.label));
                thresholds[i].push_back({param, d.value});
            }
        } else {
            cont_cols[i] = &std::get<ContinuousColumn>(col.data).values;
        }
    }
    std::vector<const std::vector<double>*> def_cols;
    for (const auto& column : program.defvars()) def_cols.push_back(&data.continuous(column));
    const bool has_defvars = !def_cols.empty();

    // Missingness masks: bit i set when manifest i observed.
    std::map<std::vector<bool>, std::size_t> summary_index;
    std::map<std::vector<bool>, std::size_t> pattern_index;
    std::vector<std::vector<std::size_t>> summary_rows;
    std::vector<std::size_t> rowwise;
    for (std::size_t r = 0; r < data.nrows(); ++r) {
        bool missing_def = false;
        for (const auto* col : def_cols) missing_def = missing_def || is_missing((*col)[r]);
        if (missing_def) {
            ++counts.rows_missing_definition;
            continue;
        }
        std::vector<bool> mask(k);
        bool any = false;
        bool any_ordinal = false;
        for (std::size_t i = 0; i < k; ++i) {
            const bool obs = ord_cols[i] ? (*ord_cols[i])[r] != kMissingCode : !is_missing((*cont_cols[i])[r]);
            mask[i] = obs;
            any = any || obs;
            any_ordinal = any_ordinal || (obs && ord_cols[i]);
        }
        if (!any) {
            ++counts.rows_empty;
            continue;
        }
        ++counts.rows_used;
        if (!has_defvars && !any_ordinal) {
            auto [it, inserted] = summary_index.emplace(mask, summary_rows.size());
            if (inserted) {
                summary_rows.emplace_back();
                Summary s;
                for (std::size_t i = 0; i < k; ++i)
                    if (mask[i]) s.vars.push_back(static_cast<Index>(i));
                summaries.push_back(std::move(s));
            }
            summary_rows[it->second].push_back(r);
        } else {
            auto [it, inserted] = pattern_index.emplace(mask, patterns.size());
            if (inserted) {
                Pattern p;
                for (std::size_t i = 0; i < k; ++i) {
                    if (!mask[i]) continue;
                    (ord_cols[i] ? p.ord : p.cont).push_back(static_cast<Index>(i));
                }
                patterns.push_back(std::move(p));
            }
            row_pattern.push_back(it->second);
            rowwise.push_back(r);
        }
    }

    for (std::size_t s = 0; s < summaries.size(); ++s) {
        Summary& sum = summaries[s];
        const auto p = static_cast<Index>(sum.vars.size());
        const auto& rows = summary_rows[s];
        sum.n = static_cast<double>(rows.size());
        sum.mean = Eigen::VectorXd::Zero(p);
        for (std::size_t r : rows)
            for (Index i = 0; i < p; ++i) sum.mean(i) += (*cont_cols[static_cast<std::size_t>(sum.vars[static_cast<std::size_t>(i)])])[r];
        sum.mean /= sum.n;
        sum.scatter = Eigen::MatrixXd::Zero(p, p);
        Eigen::VectorXd d(p);
        for (std::size_t r : rows) {
            for (Index i = 0; i < p; ++i)
                d(i) = (*cont_cols[static_cast<std::size_t>(sum.vars[static_cast<std::size_t>(i)])])[r] - sum.mean(i);
            sum.scatter.selfadjointView<Eigen::Lower>().rankUpdate(d);
        }
        sum.scatter = sum.scatter.selfadjointView<Eigen::Lower>();
    }

    const auto nrow = static_cast<Index>(rowwise.size());
    values = Eigen::MatrixXd::Constant(nrow, static_cast<Index>(k), kMissing);
    codes = Eigen::MatrixXi::Constant(nrow, static_cast<Index>(k), kMissingCode);
    defvalues = Eigen::MatrixXd::Zero(nrow, static_cast<Index>(def_cols.size()));
    for (Index i = 0; i < nrow; ++i) {
        const std::size_t r = rowwise[static_cast<std::size_t>(i)];
        for (std::size_t j = 0; j < k; ++j) {
            if (ord_cols[j]) codes(i, static_cast<Index>(j)) = (*ord_cols[j])[r];
            else values(i, static_cast<Index>(j)) = (*cont_cols[j])[r];
        }
        for (std::size_t d = 0; d < def_cols.size(); ++d) defvalues(i, static_cast<Index>(d)) = (*def_cols[d])[r];
    }
}

FimlObjective::FimlObjective(const GroupedModel& model, FimlOptions options)
    : layout_(pack_parameters(model)), options_(options) {
    if (model.groups.empty()) throw ModelError("model '" + model.name + "' has no groups");
    for (const auto& group : model.groups) {
        GroupRowCounts counts{group.name};
        plans_.emplace_back(group, layout_, counts);
        counts_.push_back(counts);
    }
}

FimlObjective::~FimlObjective() = default;
FimlObjective::FimlObjective(FimlObjective&&) noexcept = default;
FimlObjective& FimlObjective::operator=(FimlObjective&&) noexcept = default;

double FimlObjective::evaluate_group(const GroupPlan& plan, std::span<const double> theta) const {
    const std::size_t k = plan.nmanifests;
    std::vector<std::vector<double>> cuts(k);
    for (std::size_t i = 0; i < k; ++i) {
        if (plan.thresholds[i].empty()) continue;
        std::vector<double> devs;
        for (const auto& slot : plan.thresholds[i])
            devs.push_back(slot.param >= 0 ? theta[static_cast<std::size_t>(slot.param)] : slot.value);
        try {
            cuts[i] = cumulative_thresholds(devs);
        } catch (const ParameterSpaceError&) {
            return kInf;
        }
    }

    const std::vector<double> zero_defs(plan.program.defvars().size(), 0.0);
    Moments base;
    Eigen::MatrixXd finv;
    if (!plan.per_row_moments && !plan.program.evaluate_with_filter(theta, zero_defs, base, finv)) return kInf;

    double summary_total = 0.0;
    for (const auto& s : plan.summaries) {
        Eigen::LLT<Eigen::MatrixXd> llt;
        double logdet = 0.0;
        if (!positive_llt(sub_matrix(base.cov, s.vars, s.vars), llt, logdet)) return kInf;
        const Eigen::VectorXd d = s.mean - sub_vector(base.mean, s.vars);
        const double trace = llt.solve(s.scatter).trace();
        const double quad = d.dot(llt.solve(d));
        summary_total += s.n * (static_cast<double>(s.vars.size()) * kLog2Pi + logdet + quad) + trace;
    }

    const auto nrow = plan.values.rows();
    if (nrow == 0) return summary_total;

    struct PatternCache {
        bool ok = false;
        Eigen::LLT<Eigen::MatrixXd> llt;
        double logdet = 0.0;
        Eigen::MatrixXd gain;
        Eigen::MatrixXd ccov;
    };
    std::vector<PatternCache> cache(plan.patterns.size());
    if (!plan.per_row_moments) {
        for (std::size_t p = 0; p < plan.patterns.size(); ++p) {
            const auto& pat = plan.patterns[p];
            PatternCache& c = cache[p];
            c.ok = true;
            if (!pat.cont.empty()) c.ok = positive_llt(sub_matrix(base.cov, pat.cont, pat.cont), c.llt, c.logdet);
            if (c.ok && !pat.ord.empty()) {
                c.ccov = sub_matrix(base.cov, pat.ord, pat.ord);
                if (!pat.cont.empty()) {
                    const Eigen::MatrixXd soc = sub_matrix(base.cov, pat.ord, pat.cont);
                    c.gain = c.llt.solve(soc.transpose()).transpose();
                    c.ccov -= c.gain * soc.transpose();
                }
            }
        }
    }

    std::vector<double> contrib(static_cast<std::size_t>(nrow), 0.0);
    const int threads = options_.threads > 0 ? options_.threads : omp_get_max_threads();
    const auto& mean_defs = plan.program.mean_def_cells();

#pragma omp parallel for schedule(static) num_threads(threads)
    for (Index i = 0; i < nrow; ++i) {
        double value = kInf;
        try {
            const auto& pat = plan.patterns[plan.row_pattern[static_cast<std::size_t>(i)]];
            if (plan.per_row_moments) {
                std::vector<double> defs(static_cast<std::size_t>(plan.defvalues.cols()));
                for (Index d = 0; d < plan.defvalues.cols(); ++d) defs[static_cast<std::size_t>(d)] = plan.defvalues(i, d);
                Moments m;
                if (plan.program.evaluate(theta, defs, m)) {
                    std::vector<double> vals(k);
                    std::vector<int> cds(k);
                    for (std::size_t j = 0; j < k; ++j) {
                        vals[j] = plan.values(i, static_cast<Index>(j));
                        cds[j] = plan.codes(i, static_cast<Index>(j));
                    }
                    value = row_neg2ll_from_moments(m, cuts, vals, cds, options_.rectangle).neg2ll;
                }
            } else if (cache[plan.row_pattern[static_cast<std::size_t>(i)]].ok) {
                const PatternCache& c = cache[plan.row_pattern[static_cast<std::size_t>(i)]];
                Eigen::VectorXd mean = base.mean;
                for (const auto& [d, v] : mean_defs) mean += finv.col(v) * plan.defvalues(i, d);
                const auto nc = static_cast<Index>(pat.cont.size());
                Eigen::VectorXd resid(nc);
                for (Index j = 0; j < nc; ++j)
                    resid(j) = plan.values(i, pat.cont[static_cast<std::size_t>(j)]) - mean(pat.cont[static_cast<std::size_t>(j)]);
                value = 0.0;
                if (nc > 0) {
                    const Eigen::VectorXd z = c.llt.matrixL().solve(resid);
                    value = static_cast<double>(nc) * kLog2Pi + c.logdet + z.squaredNorm();
                }
                if (!pat.ord.empty()) {
                    const auto no = static_cast<Index>(pat.ord.size());
                    Eigen::VectorXd cmean = sub_vector(mean, pat.ord);
                    if (nc > 0) cmean += c.gain * resid;
                    Eigen::VectorXd lower(no);
                    Eigen::VectorXd upper(no);
                    for (Index j = 0; j < no; ++j) {
                        const auto var = static_cast<std::size_t>(pat.ord[static_cast<std::size_t>(j)]);
                        const int code = plan.codes(i, static_cast<Index>(var));
                        const auto& cp = cuts[var];
                        lower(j) = code == 0 ? -kInf : cp[static_cast<std::size_t>(code - 1)];
                        upper(j) = static_cast<std::size_t>(code) == cp.size() ? kInf : cp[static_cast<std::size_t>(code)];
                    }
                    const double p = mvn_rectangle(cmean, c.ccov, lower, upper, options_.rectangle);
                    value = p > 0.0 ? value - 2.0 * std::log(p) : kInf;
                }
            }
        } catch (...) {
            value = kInf;
        }
        contrib[static_cast<std::size_t>(i)] = value;
    }
    return summary_total + compensated_sum(contrib);
}

double FimlObjective::operator()(std::span<const double> theta) const {
    if (theta.size() != layout_.size()) throw ModelError("parameter vector length does not match the model");
    std::vector<double> parts;
    parts.reserve(plans_.size());
    for (const auto& plan : plans_) {
        const double v = evaluate_group(plan, theta);
        if (!std::isfinite(v)) return kInf;
        parts.push_back(v);
    }
    return compensated_sum(parts);
}

std::vector<double> FimlObjective::group_values(std::span<const double> theta) const {
    std::vector<double> out;
    for (const auto& plan : plans_) out.push_back(evaluate_group(plan, theta));
    return out;
}

}  // namespace twinsem
