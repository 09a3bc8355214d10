// SPDX-License-Identifier: Apache-2.0
// Serial reference vs tiled OpenMP renderer, forward and backward.
#include "dualsplat/renderer.hpp"
#include "dualsplat/rng.hpp"

#include <benchmark/benchmark.h>

#include <cmath>

using namespace dualsplat;

namespace {

GaussianCloud random_cloud(std::size_t n) {
    Rng rng(11);
    GaussianCloud c;
    c.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        c.positions[2 * i] = rng.uniform();
        c.positions[2 * i + 1] = rng.uniform();
        c.log_scales[2 * i] = std::log(rng.uniform(0.01, 0.05));
        c.log_scales[2 * i + 1] = std::log(rng.uniform(0.01, 0.05));
        c.rotations[i] = rng.uniform(0.0, 3.14159);
        c.opacity_logits[i] = rng.uniform(-2.0, 2.0);
        for (int k = 0; k < 3; ++k) c.colors[3 * i + k] = rng.uniform();
        c.depths[i] = rng.uniform();
    }
    return c;
}

Camera2D camera(int side) { return {Mat2::identity(), {}, side, side}; }

template <bool Reference>
void BM_Forward(benchmark::State& state) {
    const GaussianCloud cloud = random_cloud(static_cast<std::size_t>(state.range(0)));
    const Camera2D cam = camera(static_cast<int>(state.range(1)));
    for (auto _ : state) {
        RenderOutput out = Reference ? reference::rasterize_forward(cloud, cam) : rasterize_forward(cloud, cam);
        benchmark::DoNotOptimize(out.image.data.data());
    }
}

template <bool Reference>
void BM_Backward(benchmark::State& state) {
    const GaussianCloud cloud = random_cloud(static_cast<std::size_t>(state.range(0)));
    const Camera2D cam = camera(static_cast<int>(state.range(1)));
    const RenderOutput fwd = rasterize_forward(cloud, cam);
    Image grad(cam.width, cam.height, 3, 1e-3);
    for (auto _ : state) {
        GradientBundle g = Reference ? reference::rasterize_backward(cloud, cam, fwd, grad)
                                     : rasterize_backward(cloud, cam, fwd, grad);
        benchmark::DoNotOptimize(g.view_space_pos.data());
    }
}

void BM_FastBackward(benchmark::State& state) {
    const GaussianCloud cloud = random_cloud(static_cast<std::size_t>(state.range(0)));
    const Camera2D cam = camera(static_cast<int>(state.range(1)));
    RenderSettings s;
    s.deterministic = false;
    const RenderOutput fwd = rasterize_forward(cloud, cam, s);
    Image grad(cam.width, cam.height, 3, 1e-3);
    for (auto _ : state) {
        GradientBundle g = rasterize_backward(cloud, cam, fwd, grad, s);
        benchmark::DoNotOptimize(g.view_space_pos.data());
    }
}

void Sizes(benchmark::internal::Benchmark* b) {
    b->Args({200, 64})->Args({1000, 64})->Args({1000, 128});
}

}  // namespace

BENCHMARK(BM_Forward<true>)->Name("forward/reference")->Apply(Sizes);
BENCHMARK(BM_Forward<false>)->Name("forward/tiled_omp")->Apply(Sizes);
BENCHMARK(BM_Backward<true>)->Name("backward/reference")->Apply(Sizes);
BENCHMARK(BM_Backward<false>)->Name("backward/omp_deterministic")->Apply(Sizes);
BENCHMARK(BM_FastBackward)->Name("backward/omp_fast")->Apply(Sizes);

BENCHMARK_MAIN();
