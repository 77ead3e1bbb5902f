#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "dvsbias/pixel_sim.hpp"

namespace dvsbias::meter {

using sim::Event;

/// Box-filtered rates over one window, stamped at the window end.
struct RateSample {
  double t = 0.0;
  double r_input_hz = 0.0;
  double r_signal_hz = 0.0;
  double r_noise_hz = 0.0;
  std::optional<double> r_sn;  // absent when no events at all
  double r_noise_per_pixel_hz = 0.0;
  std::uint64_t n_input = 0;
  std::uint64_t n_signal = 0;
  std::uint64_t n_noise = 0;
};

enum class Label : std::uint8_t { Signal, Noise };

/// (R_S - R_N) / (R_S + R_N); nullopt when both are zero.
/// Throws RangeError on negative or non-finite rates.
std::optional<double> compute_rsn(double r_signal_hz, double r_noise_hz);

/// Background activity filter: an event passes as signal iff one of its eight
/// neighbours fired within the correlation time. The event's own timestamp
/// is recorded either way.
class BackgroundActivityFilter {
 public:
  BackgroundActivityFilter(int width, int height, double correlation_time_s = 0.01);

  /// Throws OrderingError if `e` is older than the previous event.
  Label classify(const Event& e);
  void reset();

  double correlation_time_s() const { return tau_us_ * 1e-6; }

 private:
  int width_;
  int height_;
  std::int64_t tau_us_;
  std::int64_t last_t_us_;
  std::vector<std::int64_t> stamps_;  // padded by one pixel on every side
};

/// Labels a whole stream with a fresh filter.
std::vector<Label> denoise_all(std::span<const Event> events, int width, int height,
                               double correlation_time_s);

/// Online box filter. Windows are [t0 + k*W, t0 + (k+1)*W) in whole
/// microseconds; a sample is produced once the stream has moved past a
/// window's end.
class RateMeter {
 public:
  RateMeter(double window_s, std::size_t n_pixels, double t0_s = 0.0);

  void add(std::int64_t t_us, Label label);
  /// Closes every window that ends at or before t_us.
  void advance_to(std::int64_t t_us);
  /// Samples closed since the last call, oldest first.
  std::vector<RateSample> drain();

  std::int64_t window_us() const { return window_us_; }

 private:
  void close_window();

  std::int64_t window_us_;
  double n_pixels_;
  std::int64_t end_us_;
  std::uint64_t n_signal_ = 0;
  std::uint64_t n_noise_ = 0;
  std::vector<RateSample> ready_;
};

RateSample make_sample(double t, double window_s, std::uint64_t n_signal, std::uint64_t n_noise,
                       std::size_t n_pixels);

/// Offline box filter over a labelled stream: one sample per whole window in
/// [t0, t_end).
std::vector<RateSample> rate_boxfilter(std::span<const Event> events,
                                       std::span<const Label> labels, double window_s,
                                       std::size_t n_pixels, double t0_s, double t_end_s);

}  // namespace dvsbias::meter
