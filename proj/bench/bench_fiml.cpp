#include "twinsem/builders.hpp"
#include "twinsem/fiml.hpp"
#include "twinsem/simulate.hpp"

#include <benchmark/benchmark.h>

#include <cmath>
#include <random>

namespace {

using namespace twinsem;

/// Bivariate ACE with 10% MCAR cells so the kernel sees several missingness patterns.
GroupedModel bench_model(std::size_t pairs) {
    const std::vector<std::string> pheno{"p1", "p2"};
    GroupedModel structure = build_ace(pheno, {}, {});
    SimOptions sim;
    sim.n = pairs;
    sim.seed = 7;
    auto groups = simulate(structure, {{"a_r1c1", 0.7}, {"c_r1c1", 0.5}, {"e_r1c1", 0.5}, {"a_r2c1", 0.3},
                                       {"a_r2c2", 0.6}, {"c_r2c2", 0.4}, {"e_r2c2", 0.5}},
                           sim);
    std::mt19937_64 rng(11);
    std::bernoulli_distribution drop(0.1);
    for (auto& g : groups)
        for (const auto& col : g.data.columns()) {
            std::vector<double> v = g.data.continuous(col.name);
            for (double& x : v)
                if (drop(rng)) x = kMissing;
            g.data.put_continuous(col.name, std::move(v));
        }
    return build_ace(pheno, std::move(groups[0].data), std::move(groups[1].data));
}

void BM_Reference(benchmark::State& state) {
    const GroupedModel model = bench_model(static_cast<std::size_t>(state.range(0)));
    const ParameterVector theta = pack_parameters(model);
    for (auto _ : state) benchmark::DoNotOptimize(total_neg2ll_reference(model, theta));
    state.SetItemsProcessed(state.iterations() * state.range(0) * 2);
}

void BM_Kernel(benchmark::State& state) {
    const GroupedModel model = bench_model(static_cast<std::size_t>(state.range(0)));
    FimlOptions options;
    options.threads = static_cast<int>(state.range(1));
    const FimlObjective objective(model, options);
    const auto theta = objective.parameters().values();
    for (auto _ : state) benchmark::DoNotOptimize(objective(theta));
    state.SetItemsProcessed(state.iterations() * state.range(0) * 2);
}

}  // namespace

BENCHMARK(BM_Reference)->Arg(2000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Kernel)->Args({2000, 1})->Args({2000, 2})->Args({2000, 4})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
