// Serial reference path vs. OpenMP fan-out for the embarrassingly parallel kernels.
#include <benchmark/benchmark.h>

#include "qnctl/diagnostics.hpp"
#include "qnctl/gradest.hpp"
#include "qnctl/harness/config.hpp"
#include "qnctl/harness/experiment.hpp"

using namespace qnctl;

namespace {
Exec exec_of(const benchmark::State& s) { return s.range(0) ? Exec::Parallel : Exec::Serial; }

void label(benchmark::State& s) { s.SetLabel(s.range(0) ? "parallel x" + std::to_string(max_threads()) : "serial"); }

const ExperimentConfig& desk() {
    static const ExperimentConfig cfg = preset("exp1");
    return cfg;
}

void BM_FiniteDifferenceGradient(benchmark::State& s) {
    const RolloutFn beam = plant_rollout_fn(desk().plant);
    const Vec u = sample_beam_reference(desk().distribution, 1).values;
    for (auto _ : s) benchmark::DoNotOptimize(finite_difference_gradient(beam, u, 32, 1.0, 7, {exec_of(s)}).G.data());
    label(s);
}

void BM_FrequencyIdentification(benchmark::State& s) {
    const RolloutFn beam = plant_rollout_fn(desk().plant);
    IdentifyOptions opt;
    opt.exec = exec_of(s);
    for (auto _ : s)
        benchmark::DoNotOptimize(
            identify_frequency_response(beam, 0.01, Vec::LinSpaced(8, 1.0, 4.0), 5.0, 2.0, 5.0, opt).amplitude.data());
    label(s);
}

void BM_HeldOutEvaluation(benchmark::State& s) {
    ExperimentConfig cfg = desk();
    cfg.n_test = 16;
    const ParameterVector p = make_loop(cfg).init_parameters(1);
    for (auto _ : s) benchmark::DoNotOptimize(evaluate_parameters(cfg, p, exec_of(s)).mean_loss);
    label(s);
}

void BM_SyntheticSeeds(benchmark::State& s) {
    const auto obj = NonconvexObjective::standard();
    SyntheticRunConfig rc;
    rc.T = 2000;
    rc.optimizer.epsilon = 1.0;
    rc.optimizer.eta = 0.05;
    for (auto _ : s) benchmark::DoNotOptimize(run_synthetic_seeds(*obj, rc, 20, exec_of(s)).size());
    label(s);
}
}  // namespace

BENCHMARK(BM_FiniteDifferenceGradient)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_FrequencyIdentification)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_HeldOutEvaluation)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_SyntheticSeeds)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
