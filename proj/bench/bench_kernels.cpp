// SPDX-License-Identifier: Apache-2.0
// FIM accumulation: OpenMP tree reduction vs. the serial running sum.
#include <benchmark/benchmark.h>

#include <map>

#include "thzloc/fim.hpp"
#include "thzloc/scenarios.hpp"

using namespace thzloc;

namespace {

// Jacobians of the default THz scenario with G transmissions.
const std::vector<Eigen::MatrixXcd> &jacobians(int G) {
    static std::map<int, std::vector<Eigen::MatrixXcd>> cache;
    auto it = cache.find(G);
    if (it != cache.end()) return it->second;
    const Scenario s = load_scenario("", {"waveform.transmissions=" + std::to_string(G)});
    const Realization r = realize(s, 1, 0);
    const ForwardModel m(r.cfg, r.sched);
    return cache[G] = m.jacobian_state(m.state_layout().values);
}

void BM_fim_serial(benchmark::State &st) {
    const auto &J = jacobians(static_cast<int>(st.range(0)));
    for (auto _ : st) benchmark::DoNotOptimize(fim_accumulate(J, 1.0, KernelPolicy::Serial));
    st.SetItemsProcessed(st.iterations() * static_cast<int64_t>(J.size()));
}

void BM_fim_parallel(benchmark::State &st) {
    const auto &J = jacobians(static_cast<int>(st.range(0)));
    for (auto _ : st) benchmark::DoNotOptimize(fim_accumulate(J, 1.0, KernelPolicy::Parallel));
    st.SetItemsProcessed(st.iterations() * static_cast<int64_t>(J.size()));
}

void BM_jacobian_state(benchmark::State &st) {
    const Scenario s = load_scenario("", {"waveform.transmissions=" + std::to_string(st.range(0))});
    const Realization r = realize(s, 1, 0);
    const ForwardModel m(r.cfg, r.sched);
    const Eigen::VectorXd x = m.state_layout().values;
    for (auto _ : st) benchmark::DoNotOptimize(m.jacobian_state(x));
}

} // namespace

BENCHMARK(BM_fim_serial)->Arg(10)->Arg(100)->Arg(1000)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_fim_parallel)->Arg(10)->Arg(100)->Arg(1000)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_jacobian_state)->Arg(10)->Arg(100)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
