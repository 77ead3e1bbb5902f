#include <omp.h>

#include "dvsbias/errors.hpp"
#include "dvsbias/pixel_sim.hpp"
#include "pixel_update.hpp"

namespace dvsbias::sim {

void step_pixels_omp(std::span<PixelState> state, const StepContext& ctx,
                     std::vector<Event>& out) {
  // One buffer per row keeps the concatenated output in row-major order no
  // matter how rows are scheduled.
  thread_local std::vector<std::vector<Event>> buffers;
  if (buffers.size() < static_cast<std::size_t>(ctx.height)) buffers.resize(ctx.height);
  // Workers must see the calling thread's buffers, not their own.
  auto& rows = buffers;

  int faults = 0;
#pragma omp parallel for schedule(static) reduction(+ : faults)
  for (int y = 0; y < ctx.height; ++y) {
    auto& row = rows[y];
    row.clear();
    const std::size_t base = static_cast<std::size_t>(y) * ctx.width;
    for (int x = 0; x < ctx.width; ++x) {
      if (!detail::update_pixel(state[base + x], ctx.log_field[base + x], ctx,
                                static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y),
                                row)) {
        ++faults;
      }
    }
  }
  if (faults > 0) throw SimulationFault(ctx.t0 + ctx.dt, "photoreceptor state is not finite");

  for (int y = 0; y < ctx.height; ++y) out.insert(out.end(), rows[y].begin(), rows[y].end());
}

}  // namespace dvsbias::sim
