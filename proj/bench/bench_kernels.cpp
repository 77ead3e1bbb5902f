// Pixel kernel throughput, serial against OpenMP, on a moving sinusoidal
// field. Run with --benchmark_filter to pick one.

#include <cmath>
#include <vector>

#include <benchmark/benchmark.h>

#include "dvsbias/pixel_sim.hpp"

using namespace dvsbias::sim;

namespace {

template <void (*Kernel)(std::span<PixelState>, const StepContext&, std::vector<Event>&)>
void BM_Kernel(benchmark::State& st) {
  const int side = static_cast<int>(st.range(0));
  const std::size_t n = static_cast<std::size_t>(side) * side;
  std::vector<PixelState> state(n);
  std::vector<double> field(n);
  std::vector<Event> out;
  StepContext ctx;
  ctx.dt = 1e-4;
  ctx.theta_on = 0.2;
  ctx.theta_off = -0.2;
  ctx.refractory_s = 1e-4;
  ctx.lowpass_alpha = lowpass_alpha(300.0, ctx.dt);
  ctx.width = side;
  ctx.height = side;
  long k = 0;
  for (auto _ : st) {
    const double phase = 2e-3 * static_cast<double>(k++);
    for (std::size_t i = 0; i < n; ++i) {
      field[i] = std::sin(0.2 * static_cast<double>(i % side) + phase);
    }
    ctx.log_field = field;
    ctx.t0 = static_cast<double>(k) * ctx.dt;
    out.clear();
    Kernel(state, ctx, out);
    benchmark::DoNotOptimize(out.data());
  }
  st.SetItemsProcessed(st.iterations() * static_cast<long>(n));
}

}  // namespace

BENCHMARK(BM_Kernel<step_pixels_serial>)->Name("serial")->Arg(64)->Arg(128)->Arg(346);
BENCHMARK(BM_Kernel<step_pixels_omp>)->Name("omp")->Arg(64)->Arg(128)->Arg(346);

BENCHMARK_MAIN();
