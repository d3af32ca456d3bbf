#include "twinsem/simulate.hpp"

#include "twinsem/data_prep.hpp"
#include "twinsem/error.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <random>

namespace twinsem {

std::uint64_t group_seed(std::uint64_t seed, std::size_t index) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(index) + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

namespace {

Eigen::MatrixXd cholesky_factor(const Moments& m, const std::string& group) {
    Eigen::LLT<Eigen::MatrixXd> llt(m.cov);
    if (llt.info() != Eigen::Success)
        throw NumericError("simulate: implied covariance of group '" + group + "' is not positive definite");
    return llt.matrixL();
}

}  // namespace

std::vector<SimulatedGroup> simulate(const GroupedModel& structure, const std::map<std::string, double>& truth,
                                     const SimOptions& options) {
    if (options.covariate_missing_rate < 0.0 || options.covariate_missing_rate >= 1.0)
        throw DataError("simulate: covariate missing rate must lie in [0, 1)");
    ParameterVector theta = pack_parameters(structure);
    for (const auto& [label, value] : truth) {
        if (!theta.find(label)) throw ModelError("simulate: '" + label + "' is not a free parameter of the model");
        theta.set(label, value);
    }

    std::vector<SimulatedGroup> out;
    for (std::size_t g = 0; g < structure.groups.size(); ++g) {
        const Group& group = structure.groups[g];
        const RamModel& model = group.model;
        const auto n_it = options.n_per_group.find(group.name);
        const std::size_t n = n_it == options.n_per_group.end() ? options.n : n_it->second;
        const auto k = static_cast<Eigen::Index>(model.num_manifests());

        std::mt19937_64 rng(group_seed(options.seed, g));
        std::normal_distribution<double> normal(0.0, 1.0);
        std::uniform_real_distribution<double> uniform(0.0, 1.0);

        const MomentProgram program(model, theta);
        const auto& defvars = program.defvars();
        std::vector<std::vector<double>> columns(static_cast<std::size_t>(k), std::vector<double>(n));
        std::vector<std::vector<double>> defcols(defvars.size(), std::vector<double>(n));

        Moments moments;
        Eigen::MatrixXd L;
        std::vector<double> defvalues(defvars.size(), 0.0);
        if (defvars.empty()) {
            if (!program.evaluate(theta.values(), defvalues, moments))
                throw NumericError("simulate: (I - A) is singular in group '" + group.name + "'");
            L = cholesky_factor(moments, group.name);
        }
        Eigen::VectorXd z(k);
        for (std::size_t r = 0; r < n; ++r) {
            if (!defvars.empty()) {
                for (std::size_t d = 0; d < defvars.size(); ++d) defcols[d][r] = defvalues[d] = normal(rng);
                if (!program.evaluate(theta.values(), defvalues, moments))
                    throw NumericError("simulate: (I - A) is singular in group '" + group.name + "'");
                L = cholesky_factor(moments, group.name);
            }
            for (Eigen::Index i = 0; i < k; ++i) z(i) = normal(rng);
            const Eigen::VectorXd x = moments.mean + L * z;
            for (Eigen::Index i = 0; i < k; ++i) columns[static_cast<std::size_t>(i)][r] = x(i);
        }

        ColumnTable data;
        for (Eigen::Index i = 0; i < k; ++i) {
            const std::string& name = model.manifests()[static_cast<std::size_t>(i)];
            auto& values = columns[static_cast<std::size_t>(i)];
            const auto cuts = options.ordinal_cuts.find(name);
            if (cuts == options.ordinal_cuts.end()) {
                data.put_continuous(name, std::move(values));
                continue;
            }
            std::vector<std::string> levels;
            for (std::size_t l = 0; l <= cuts->second.size(); ++l) levels.push_back(std::to_string(l));
            std::vector<int> codes(n);
            for (std::size_t r = 0; r < n; ++r)
                codes[r] = static_cast<int>(
                    std::upper_bound(cuts->second.begin(), cuts->second.end(), values[r]) - cuts->second.begin());
            data.put_ordinal(name, std::move(levels), std::move(codes));
        }
        for (std::size_t d = 0; d < defvars.size(); ++d) {
            if (options.covariate_missing_rate > 0.0)
                for (double& v : defcols[d])
                    if (uniform(rng) < options.covariate_missing_rate) v = kMissing;
            data.put_continuous(defvars[d], std::move(defcols[d]));
        }
        if (!options.censor_columns.empty()) {
            if (!options.lod) throw DataError("simulate: censor_columns given without an LOD");
            std::vector<std::string> present;
            for (const auto& c : options.censor_columns)
                if (data.has(c)) present.push_back(c);
            data = make_bin_cont_pair(data, present, *options.lod);
        }
        out.push_back({group.name, std::move(data)});
    }
    return out;
}

}  // namespace twinsem
