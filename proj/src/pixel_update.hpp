#pragma once

// Per-pixel update shared by the serial and OpenMP kernels.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "dvsbias/pixel_sim.hpp"

namespace dvsbias::sim::detail {

// Crossings are accepted a hair before the full threshold so that a filter
// output settling asymptotically onto the reference still fires.
inline constexpr double kComparatorSlack = 1e-9;

inline std::int64_t to_microseconds(double t) {
  return static_cast<std::int64_t>(std::floor(t * 1e6 + 1e-6));
}

/// Returns false if the filtered signal is no longer finite.
inline bool update_pixel(PixelState& s, double input, const StepContext& c, std::uint16_t x,
                         std::uint16_t y, std::vector<Event>& out) {
  const double a = c.lowpass_alpha;
  const double v0 = s.lp2;
  s.lp1 += a * (input - s.lp1);
  s.lp2 += a * (s.lp1 - s.lp2);
  const double v1 = s.lp2;
  if (!std::isfinite(v1)) return false;

  const double t0 = c.t0;
  const double t1 = c.t0 + c.dt;
  const double slope = (v1 - v0) / c.dt;

  double t = t0;
  double mem = s.memorized;
  if (s.refractory_until > t0) {
    // Held in reset: the reference follows the signal and re-latches at
    // release.
    if (s.refractory_until > t1) {
      s.memorized = v1;
      return true;
    }
    t = s.refractory_until;
    mem = v0 + slope * (t - t0);
  }

  const double on_gate = c.theta_on * (1.0 - kComparatorSlack);
  const double off_gate = c.theta_off * (1.0 - kComparatorSlack);
  for (;;) {
    const double diff = v1 - mem;
    double target;
    Polarity pol;
    if (diff >= on_gate) {
      target = mem + c.theta_on;
      pol = Polarity::On;
    } else if (diff <= off_gate) {
      target = mem + c.theta_off;
      pol = Polarity::Off;
    } else {
      break;
    }
    double tc = slope != 0.0 ? t0 + (target - v0) / slope : t;
    tc = std::clamp(tc, t, t1);
    out.push_back(Event{to_microseconds(tc), x, y, pol, Provenance::Signal});
    mem = target;
    if (c.refractory_s > 0.0) {
      const double until = tc + c.refractory_s;
      s.refractory_until = until;
      if (until > t1) {
        mem = v1;
        break;
      }
      t = until;
      mem = v0 + slope * (t - t0);
    } else {
      s.refractory_until = tc;
      t = tc;
    }
  }
  s.memorized = mem;
  return true;
}

}  // namespace dvsbias::sim::detail
