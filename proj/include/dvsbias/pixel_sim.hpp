#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "dvsbias/bias_model.hpp"
#include "dvsbias/stimulus.hpp"
#include "dvsbias/textcfg.hpp"

namespace dvsbias::sim {

using bias::PixelParams;
using stimulus::Geometry;

enum class Polarity : std::uint8_t { Off = 0, On = 1 };

/// Ground-truth origin of an event. Metering never looks at it.
enum class Provenance : std::uint8_t { Signal = 0, Noise = 1, Transient = 2 };

struct Event {
  std::int64_t t_us = 0;
  std::uint16_t x = 0;
  std::uint16_t y = 0;
  Polarity polarity = Polarity::On;
  Provenance provenance = Provenance::Signal;

  bool operator==(const Event&) const = default;
};

/// Total order used for the per-step merge: time, then row, column,
/// polarity, provenance.
bool event_order(const Event& a, const Event& b);

struct PixelState {
  double lp1 = 0.0;        // first photoreceptor stage, e-folds
  double lp2 = 0.0;        // second stage; what the change amplifier sees
  double memorized = 0.0;  // change-amplifier reference
  double refractory_until = 0.0;
};

/// Background-activity model. Per-pixel rate is
///   base * (B/B0)^alpha * (theta0/theta)^beta * (L0/L)^delta
struct NoiseModel {
  double base_rate_hz = 0.1;
  double bandwidth_exponent = 1.0;
  double threshold_exponent = 1.0;
  double luminance_exponent = 1.0;
  double on_fraction = 0.5;
  double reference_bandwidth_hz = 300.0;
  double reference_theta = 0.2693;
  double reference_luminance = 1.0;
  // Transient bursts after bias changes.
  double burst_gain = 0.5;
  double burst_time_s = 0.3;

  void validate() const;
};

double noise_rate_hz(const NoiseModel& m, double bandwidth_hz, double theta, double luminance);

NoiseModel parse_noise_model(const textcfg::Section& section, NoiseModel base = {});
std::string serialize_noise_model(const NoiseModel& m);

/// Inputs shared by every pixel for one simulation step.
struct StepContext {
  std::span<const double> log_field;
  double t0 = 0.0;
  double dt = 0.0;
  double theta_on = 0.0;
  double theta_off = 0.0;
  double refractory_s = 0.0;
  double lowpass_alpha = 1.0;  // per-stage update fraction, 1 = no filtering
  int width = 0;
  int height = 0;
};

/// Per-stage update fraction of a first-order lowpass with cutoff
/// bandwidth_hz sampled at dt. Infinite bandwidth gives 1.
double lowpass_alpha(double bandwidth_hz, double dt);

// Signal-event kernels. Both walk every pixel once and append events in
// row-major pixel order, so their outputs are identical element for element.
void step_pixels_serial(std::span<PixelState> state, const StepContext& ctx,
                        std::vector<Event>& out);
void step_pixels_omp(std::span<PixelState> state, const StepContext& ctx,
                     std::vector<Event>& out);

enum class Kernel { Serial, Parallel };

struct BurstSpec {
  double change_time_s = 0.0;
  std::size_t n_events = 0;
  double decay_s = 0.0;
  /// All burst timestamps fall in [change_time, change_time + horizon].
  double horizon_s() const { return 5.0 * decay_s; }
};

/// Burst size for a change between two operating points.
BurstSpec burst_for_change(const PixelParams& before, const PixelParams& after,
                           double change_time_s, std::size_t n_pixels, const NoiseModel& m);

/// Samples one burst timestamp offset from a truncated exponential, u in [0,1).
double burst_offset(double u, double decay_s);

class Simulator {
 public:
  Simulator(Geometry geometry, NoiseModel noise, PixelParams params, std::uint64_t seed,
            Kernel kernel = Kernel::Parallel);

  /// Latches every pixel to the given log field at time t0; emits nothing.
  void initialize(std::span<const double> log_field, double t0 = 0.0);

  /// Advances by dt with the field held at `log_field` over the step.
  /// Returns the step's events sorted by event_order. Throws ConfigError when
  /// dt does not resolve the photoreceptor filter and SimulationFault on
  /// numeric failure.
  std::vector<Event> step(std::span<const double> log_field, double dt);

  /// Switches to new pixel parameters at change_time and schedules the
  /// resulting transient burst.
  BurstSpec apply_biases(const PixelParams& params, double change_time_s);

  const PixelParams& params() const { return params_; }
  double now() const { return now_; }
  const std::vector<PixelState>& state() const { return state_; }
  Geometry geometry() const { return geometry_; }
  void set_kernel(Kernel k) { kernel_ = k; }

 private:
  void emit_noise(std::span<const double> log_field, double t0, double t1,
                  std::vector<Event>& out);
  void release_pending(double t1, std::vector<Event>& out);

  Geometry geometry_;
  NoiseModel noise_;
  PixelParams params_;
  Kernel kernel_;
  std::mt19937_64 rng_;
  std::vector<PixelState> state_;
  std::vector<Event> pending_;  // transient events, sorted, not yet released
  std::size_t pending_head_ = 0;
  double now_ = 0.0;
  double now_carry_ = 0.0;
  bool initialized_ = false;
};

/// Piecewise-constant density over inter-event intervals.
struct IntervalHistogram {
  std::vector<double> edges;    // seconds, strictly increasing, size n+1
  std::vector<double> density;  // per-second density, size n
};

/// N_total * integral f(T) / (T + refractory) dT, evaluated bin by bin.
/// Throws ValidationError if the histogram is malformed or not normalized.
double refractory_rate_oracle(const IntervalHistogram& f, double refractory_s, double n_pixels);

}  // namespace dvsbias::sim
