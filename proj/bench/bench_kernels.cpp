/*
 Copyright 2026 The Contraflow Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/


#include <benchmark/benchmark.h>

#include "contraflow/kernels.hpp"
#include "contraflow/metrics.hpp"
#include "contraflow/ncds.hpp"
#include "contraflow/rng.hpp"

namespace {

using namespace contraflow;

Ncds make_model(int dim) {
    FieldConfig cfg;
    cfg.state_dim = dim;
    cfg.hidden = {64, 64};
    Ncds m(cfg);
    Rng rng(1);
    m.init(rng);
    return m;
}

std::vector<Vec> grid(int res, int dim) {
    GridSpec spec;
    spec.res = res;
    spec.base = Vec::Zero(dim);
    return grid_points(spec, dim);
}

template <bool Parallel>
void BM_Velocity(benchmark::State& state) {
    const int res = static_cast<int>(state.range(0));
    const Ncds model = make_model(2);
    const auto pts = grid(res, 2);
    const kernels::PointFn f = [&](const Vec& x) { return model.velocity(x); };
    for (auto _ : state) {
        auto out = Parallel ? kernels::map_points_parallel(f, pts) : kernels::map_points_serial(f, pts);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(pts.size()));
}

template <bool Parallel>
void BM_ContractionMaps(benchmark::State& state) {
    const int res = static_cast<int>(state.range(0));
    const Ncds model = make_model(3);
    GridSpec spec;
    spec.res = res;
    spec.base = Vec::Zero(3);
    const JacobianFn jac = [&](const Vec& x) { return model.field().full_jacobian(x); };
    for (auto _ : state) {
        auto maps = contraction_maps(jac, spec, 3, Parallel);
        benchmark::DoNotOptimize(maps.max_rate);
    }
    state.SetItemsProcessed(state.iterations() * res * res);
}

}  // namespace

BENCHMARK(BM_Velocity<false>)->Name("velocity_grid/serial")->Arg(16)->Arg(48)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Velocity<true>)->Name("velocity_grid/parallel")->Arg(16)->Arg(48)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_ContractionMaps<false>)->Name("contraction_maps/serial")->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ContractionMaps<true>)->Name("contraction_maps/parallel")->Arg(32)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
