#include "dvsbias/pixel_sim.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>
#include <tuple>

#include "dvsbias/errors.hpp"
#include "pixel_update.hpp"

namespace dvsbias::sim {

bool event_order(const Event& a, const Event& b) {
  return std::tie(a.t_us, a.y, a.x, a.polarity, a.provenance) <
         std::tie(b.t_us, b.y, b.x, b.polarity, b.provenance);
}

void NoiseModel::validate() const {
  if (!(base_rate_hz >= 0.0) || !std::isfinite(base_rate_hz)) {
    throw ConfigError("noise base_rate_hz must be >= 0");
  }
  if (!(bandwidth_exponent > 0.0)) throw ConfigError("noise bandwidth_exponent must be > 0");
  if (!(threshold_exponent > 0.0)) throw ConfigError("noise threshold_exponent must be > 0");
  if (!(luminance_exponent >= 0.0)) throw ConfigError("noise luminance_exponent must be >= 0");
  if (!(on_fraction >= 0.0 && on_fraction <= 1.0)) throw ConfigError("on_fraction must be in [0,1]");
  if (!(reference_bandwidth_hz > 0.0) || !(reference_theta > 0.0) || !(reference_luminance > 0.0)) {
    throw ConfigError("noise reference point must be positive");
  }
  if (!(burst_gain >= 0.0)) throw ConfigError("burst_gain must be >= 0");
  if (!(burst_time_s > 0.0)) throw ConfigError("burst_time_s must be > 0");
}

double noise_rate_hz(const NoiseModel& m, double bandwidth_hz, double theta, double luminance) {
  if (m.base_rate_hz == 0.0) return 0.0;
  return m.base_rate_hz * std::pow(bandwidth_hz / m.reference_bandwidth_hz, m.bandwidth_exponent) *
         std::pow(m.reference_theta / theta, m.threshold_exponent) *
         std::pow(m.reference_luminance / luminance, m.luminance_exponent);
}

namespace {

using NoiseSetter = std::function<void(NoiseModel&, double)>;

const std::map<std::string, NoiseSetter>& noise_keys() {
  static const std::map<std::string, NoiseSetter> keys = {
      {"base_rate_hz", [](NoiseModel& m, double v) { m.base_rate_hz = v; }},
      {"bandwidth_exponent", [](NoiseModel& m, double v) { m.bandwidth_exponent = v; }},
      {"threshold_exponent", [](NoiseModel& m, double v) { m.threshold_exponent = v; }},
      {"luminance_exponent", [](NoiseModel& m, double v) { m.luminance_exponent = v; }},
      {"on_fraction", [](NoiseModel& m, double v) { m.on_fraction = v; }},
      {"reference_luminance", [](NoiseModel& m, double v) { m.reference_luminance = v; }},
      {"burst_gain", [](NoiseModel& m, double v) { m.burst_gain = v; }},
      {"burst_time_s", [](NoiseModel& m, double v) { m.burst_time_s = v; }},
  };
  return keys;
}

}  // namespace

NoiseModel parse_noise_model(const textcfg::Section& section, NoiseModel base) {
  for (const auto& line : section.lines) {
    for (const auto& p : line.pairs) {
      const auto it = noise_keys().find(p.key);
      if (it == noise_keys().end()) throw ParseError(line.number, "unknown noise key '" + p.key + "'");
      it->second(base, textcfg::to_double(p, line.number));
    }
  }
  base.validate();
  return base;
}

std::string serialize_noise_model(const NoiseModel& m) {
  using textcfg::format_double;
  std::ostringstream out;
  out << "[noise]\n"
      << "base_rate_hz = " << format_double(m.base_rate_hz) << "\n"
      << "bandwidth_exponent = " << format_double(m.bandwidth_exponent) << "\n"
      << "threshold_exponent = " << format_double(m.threshold_exponent) << "\n"
      << "luminance_exponent = " << format_double(m.luminance_exponent) << "\n"
      << "on_fraction = " << format_double(m.on_fraction) << "\n"
      << "reference_luminance = " << format_double(m.reference_luminance) << "\n"
      << "burst_gain = " << format_double(m.burst_gain) << "\n"
      << "burst_time_s = " << format_double(m.burst_time_s) << "\n";
  return out.str();
}

double lowpass_alpha(double bandwidth_hz, double dt) {
  if (std::isinf(bandwidth_hz)) return 1.0;
  return -std::expm1(-2.0 * std::numbers::pi * bandwidth_hz * dt);
}

BurstSpec burst_for_change(const PixelParams& before, const PixelParams& after,
                           double change_time_s, std::size_t n_pixels, const NoiseModel& m) {
  // Refractory changes are left out: they do not disturb the photoreceptor
  // or comparator operating point.
  double change = std::abs(std::log(after.theta_on / before.theta_on));
  if (std::isfinite(before.bandwidth_hz) && std::isfinite(after.bandwidth_hz)) {
    change += std::abs(std::log(after.bandwidth_hz / before.bandwidth_hz));
  }
  const double n = m.burst_gain * static_cast<double>(n_pixels) * change;
  return {change_time_s, static_cast<std::size_t>(std::llround(n)), m.burst_time_s};
}

double burst_offset(double u, double decay_s) {
  // Inverse CDF of an exponential truncated at five decay constants.
  return -decay_s * std::log1p(-u * -std::expm1(-5.0));
}

Simulator::Simulator(Geometry geometry, NoiseModel noise, PixelParams params, std::uint64_t seed,
                     Kernel kernel)
    : geometry_(geometry),
      noise_(noise),
      params_(params),
      kernel_(kernel),
      rng_(seed),
      state_(geometry.pixels()) {
  if (geometry.width <= 0 || geometry.height <= 0 || geometry.width > 65535 ||
      geometry.height > 65535) {
    throw ConfigError("geometry out of range");
  }
  noise_.validate();
  if (!(params.theta_on > 0.0) || !(params.theta_off < 0.0)) {
    throw ConfigError("thresholds must satisfy theta_on > 0 > theta_off");
  }
  if (!(params.bandwidth_hz > 0.0) || !(params.refractory_s >= 0.0)) {
    throw ConfigError("bandwidth must be > 0 and refractory period >= 0");
  }
  if (std::isinf(params.bandwidth_hz) && noise_.base_rate_hz > 0.0) {
    throw ConfigError("background noise needs a finite photoreceptor bandwidth");
  }
}

void Simulator::initialize(std::span<const double> log_field, double t0) {
  if (log_field.size() != state_.size()) throw ConfigError("field geometry does not match array");
  for (std::size_t i = 0; i < state_.size(); ++i) {
    const double v = log_field[i];
    state_[i] = PixelState{v, v, v, t0};
  }
  now_ = t0;
  now_carry_ = 0.0;
  initialized_ = true;
}

std::vector<Event> Simulator::step(std::span<const double> log_field, double dt) {
  if (!initialized_) throw ConfigError("simulator stepped before initialize()");
  if (log_field.size() != state_.size()) throw ConfigError("field geometry does not match array");
  if (!(dt > 0.0)) throw ConfigError("dt must be positive");
  if (std::isfinite(params_.bandwidth_hz) && dt > (1.0 + 1e-9) / (4.0 * params_.bandwidth_hz)) {
    throw ConfigError("dt too large for photoreceptor bandwidth (need dt <= 1/(4*B_pr))");
  }

  StepContext ctx;
  ctx.log_field = log_field;
  ctx.t0 = now_;
  ctx.dt = dt;
  ctx.theta_on = params_.theta_on;
  ctx.theta_off = params_.theta_off;
  ctx.refractory_s = params_.refractory_s;
  ctx.lowpass_alpha = lowpass_alpha(params_.bandwidth_hz, dt);
  ctx.width = geometry_.width;
  ctx.height = geometry_.height;

  std::vector<Event> events;
  if (kernel_ == Kernel::Serial) {
    step_pixels_serial(state_, ctx, events);
  } else {
    step_pixels_omp(state_, ctx, events);
  }
  const double t1 = now_ + dt;
  emit_noise(log_field, now_, t1, events);
  release_pending(t1, events);
  std::sort(events.begin(), events.end(), event_order);
  // Compensated sum so long runs stay on the caller's k*dt grid.
  const double y = dt - now_carry_;
  const double t = now_ + y;
  now_carry_ = (t - now_) - y;
  now_ = t;
  return events;
}

void Simulator::emit_noise(std::span<const double> log_field, double t0, double t1,
                           std::vector<Event>& out) {
  if (noise_.base_rate_hz == 0.0) return;
  const double log_min = *std::min_element(log_field.begin(), log_field.end());
  const double l_min = std::exp(log_min);
  // Thinning: draw at the darkest pixel's rate, accept per pixel.
  const double rate_max = noise_rate_hz(noise_, params_.bandwidth_hz, params_.theta_on, l_min);
  const double mean = rate_max * static_cast<double>(state_.size()) * (t1 - t0);
  if (!std::isfinite(mean)) throw SimulationFault(t1, "noise rate is not finite");
  if (mean <= 0.0) return;

  std::poisson_distribution<long long> count(mean);
  std::uniform_int_distribution<std::size_t> pixel(0, state_.size() - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const long long n = count(rng_);
  const double delta = noise_.luminance_exponent;
  for (long long k = 0; k < n; ++k) {
    const std::size_t i = pixel(rng_);
    const double t = t0 + unit(rng_) * (t1 - t0);
    const double accept = unit(rng_);
    const double pol = unit(rng_);
    if (delta > 0.0 && accept >= std::exp(delta * (log_min - log_field[i]))) continue;
    out.push_back(Event{detail::to_microseconds(t),
                        static_cast<std::uint16_t>(i % geometry_.width),
                        static_cast<std::uint16_t>(i / geometry_.width),
                        pol < noise_.on_fraction ? Polarity::On : Polarity::Off,
                        Provenance::Noise});
  }
}

void Simulator::release_pending(double t1, std::vector<Event>& out) {
  const auto limit = detail::to_microseconds(t1);
  while (pending_head_ < pending_.size() && pending_[pending_head_].t_us <= limit) {
    out.push_back(pending_[pending_head_++]);
  }
  if (pending_head_ == pending_.size()) {
    pending_.clear();
    pending_head_ = 0;
  }
}

BurstSpec Simulator::apply_biases(const PixelParams& params, double change_time_s) {
  if (!(params.theta_on > 0.0) || !(params.theta_off < 0.0) || !(params.bandwidth_hz > 0.0) ||
      !(params.refractory_s >= 0.0)) {
    throw ConfigError("invalid pixel parameters");
  }
  const double at = std::max(change_time_s, now_);
  const auto spec = burst_for_change(params_, params, at, state_.size(), noise_);
  params_ = params;
  if (spec.n_events == 0) return spec;

  std::uniform_int_distribution<std::size_t> pixel(0, state_.size() - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Event> burst;
  burst.reserve(spec.n_events);
  for (std::size_t k = 0; k < spec.n_events; ++k) {
    const std::size_t i = pixel(rng_);
    const double t = at + burst_offset(unit(rng_), spec.decay_s);
    const double pol = unit(rng_);
    burst.push_back(Event{detail::to_microseconds(t),
                          static_cast<std::uint16_t>(i % geometry_.width),
                          static_cast<std::uint16_t>(i / geometry_.width),
                          pol < noise_.on_fraction ? Polarity::On : Polarity::Off,
                          Provenance::Transient});
  }
  pending_.erase(pending_.begin(), pending_.begin() + static_cast<std::ptrdiff_t>(pending_head_));
  pending_head_ = 0;
  pending_.insert(pending_.end(), burst.begin(), burst.end());
  std::sort(pending_.begin(), pending_.end(), event_order);
  return spec;
}

double refractory_rate_oracle(const IntervalHistogram& f, double refractory_s, double n_pixels) {
  const auto n = f.density.size();
  if (n == 0 || f.edges.size() != n + 1) {
    throw ValidationError(0, "histogram needs n densities and n+1 edges");
  }
  if (!(refractory_s >= 0.0) || !(n_pixels >= 0.0)) {
    throw ValidationError(0, "refractory period and pixel count must be >= 0");
  }
  double mass = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = f.edges[i];
    const double b = f.edges[i + 1];
    if (!(a >= 0.0) || !(b > a)) throw ValidationError(i, "histogram edges must increase from >= 0");
    if (!(f.density[i] >= 0.0)) throw ValidationError(i, "histogram density must be >= 0");
    mass += f.density[i] * (b - a);
  }
  if (std::abs(mass - 1.0) > 1e-6) throw ValidationError(0, "histogram is not normalized");

  // Exact integral of a constant density over each bin.
  double integral = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (f.density[i] == 0.0) continue;
    integral += f.density[i] *
                std::log((f.edges[i + 1] + refractory_s) / (f.edges[i] + refractory_s));
  }
  return n_pixels * integral;
}

}  // namespace dvsbias::sim
