#include "dvsbias/errors.hpp"
#include "dvsbias/pixel_sim.hpp"
#include "pixel_update.hpp"

namespace dvsbias::sim {

// Reference kernel. Kept deliberately plain; the OpenMP kernel is checked
// against it event for event.
void step_pixels_serial(std::span<PixelState> state, const StepContext& ctx,
                        std::vector<Event>& out) {
  bool ok = true;
  for (int y = 0; y < ctx.height; ++y) {
    for (int x = 0; x < ctx.width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * ctx.width + x;
      ok &= detail::update_pixel(state[i], ctx.log_field[i], ctx,
                                 static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y), out);
    }
  }
  if (!ok) throw SimulationFault(ctx.t0 + ctx.dt, "photoreceptor state is not finite");
}

}  // namespace dvsbias::sim
