#include "dvsbias/metering.hpp"

#include <cmath>
#include <limits>

#include "dvsbias/errors.hpp"

namespace dvsbias::meter {

namespace {

constexpr std::int64_t kNever = std::numeric_limits<std::int64_t>::min() / 2;

std::int64_t seconds_to_us(double s) { return std::llround(s * 1e6); }

}  // namespace

std::optional<double> compute_rsn(double r_signal_hz, double r_noise_hz) {
  if (!(r_signal_hz >= 0.0) || !(r_noise_hz >= 0.0) || !std::isfinite(r_signal_hz) ||
      !std::isfinite(r_noise_hz)) {
    throw RangeError("rates must be finite and >= 0");
  }
  const double total = r_signal_hz + r_noise_hz;
  if (total == 0.0) return std::nullopt;
  return (r_signal_hz - r_noise_hz) / total;
}

BackgroundActivityFilter::BackgroundActivityFilter(int width, int height, double correlation_time_s)
    : width_(width), height_(height), tau_us_(seconds_to_us(correlation_time_s)) {
  if (width <= 0 || height <= 0) throw ConfigError("denoiser geometry must be positive");
  if (!(correlation_time_s > 0.0)) throw ConfigError("correlation time must be > 0");
  reset();
}

void BackgroundActivityFilter::reset() {
  stamps_.assign(static_cast<std::size_t>(width_ + 2) * (height_ + 2), kNever);
  last_t_us_ = kNever;
}

Label BackgroundActivityFilter::classify(const Event& e) {
  if (e.t_us < last_t_us_) throw OrderingError("event timestamps went backwards");
  if (e.x >= width_ || e.y >= height_) throw RangeError("event outside the pixel array");
  last_t_us_ = e.t_us;

  const std::size_t stride = static_cast<std::size_t>(width_) + 2;
  const std::size_t centre = (static_cast<std::size_t>(e.y) + 1) * stride + e.x + 1;
  const std::int64_t horizon = e.t_us - tau_us_;
  bool correlated = false;
  for (int dy = -1; dy <= 1 && !correlated; ++dy) {
    for (int dx = -1; dx <= 1; ++dx) {
      if (dx == 0 && dy == 0) continue;
      const auto j = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(centre) +
                                              dy * static_cast<std::ptrdiff_t>(stride) + dx);
      if (stamps_[j] >= horizon) {
        correlated = true;
        break;
      }
    }
  }
  stamps_[centre] = e.t_us;
  return correlated ? Label::Signal : Label::Noise;
}

std::vector<Label> denoise_all(std::span<const Event> events, int width, int height,
                               double correlation_time_s) {
  BackgroundActivityFilter baf(width, height, correlation_time_s);
  std::vector<Label> out;
  out.reserve(events.size());
  for (const auto& e : events) out.push_back(baf.classify(e));
  return out;
}

RateSample make_sample(double t, double window_s, std::uint64_t n_signal, std::uint64_t n_noise,
                       std::size_t n_pixels) {
  RateSample s;
  s.t = t;
  s.n_signal = n_signal;
  s.n_noise = n_noise;
  s.n_input = n_signal + n_noise;
  s.r_signal_hz = static_cast<double>(n_signal) / window_s;
  s.r_noise_hz = static_cast<double>(n_noise) / window_s;
  // Summed rather than counted separately so the identity holds in floating point.
  s.r_input_hz = s.r_signal_hz + s.r_noise_hz;
  s.r_sn = compute_rsn(s.r_signal_hz, s.r_noise_hz);
  s.r_noise_per_pixel_hz = n_pixels > 0 ? s.r_noise_hz / static_cast<double>(n_pixels) : 0.0;
  return s;
}

RateMeter::RateMeter(double window_s, std::size_t n_pixels, double t0_s)
    : window_us_(seconds_to_us(window_s)),
      n_pixels_(static_cast<double>(n_pixels)),
      end_us_(seconds_to_us(t0_s) + window_us_) {
  if (!(window_s > 0.0) || window_us_ <= 0) throw ConfigError("rate window must be >= 1 us");
}

void RateMeter::close_window() {
  const double window_s = static_cast<double>(window_us_) * 1e-6;
  ready_.push_back(make_sample(static_cast<double>(end_us_) * 1e-6, window_s, n_signal_, n_noise_,
                               static_cast<std::size_t>(n_pixels_)));
  n_signal_ = 0;
  n_noise_ = 0;
  end_us_ += window_us_;
}

void RateMeter::add(std::int64_t t_us, Label label) {
  advance_to(t_us);
  if (label == Label::Signal) {
    ++n_signal_;
  } else {
    ++n_noise_;
  }
}

void RateMeter::advance_to(std::int64_t t_us) {
  while (t_us >= end_us_) close_window();
}

std::vector<RateSample> RateMeter::drain() {
  std::vector<RateSample> out;
  out.swap(ready_);
  return out;
}

std::vector<RateSample> rate_boxfilter(std::span<const Event> events,
                                       std::span<const Label> labels, double window_s,
                                       std::size_t n_pixels, double t0_s, double t_end_s) {
  if (labels.size() != events.size()) throw ConfigError("one label per event required");
  RateMeter meter(window_s, n_pixels, t0_s);
  const std::int64_t t_end_us = seconds_to_us(t_end_s);
  const std::int64_t t0_us = seconds_to_us(t0_s);
  for (std::size_t i = 0; i < events.size(); ++i) {
    if (events[i].t_us < t0_us) continue;
    if (events[i].t_us >= t_end_us) break;
    meter.add(events[i].t_us, labels[i]);
  }
  meter.advance_to(t_end_us);
  return meter.drain();
}

}  // namespace dvsbias::meter
