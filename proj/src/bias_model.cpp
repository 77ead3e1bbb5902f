#include "dvsbias/bias_model.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>

#include "dvsbias/errors.hpp"

namespace dvsbias::bias {

namespace {

bool positive_finite(double v) { return std::isfinite(v) && v > 0.0; }

TweakRange threshold_range(const CameraConfig& c, double nominal) {
  return {c.threshold_t_min, c.threshold_t_max, nominal};
}

}  // namespace

void CameraConfig::validate() const {
  if (!positive_finite(a_theta)) throw ConfigError("a_theta must be positive");
  if (!positive_finite(c3_farads)) throw ConfigError("c3_farads must be positive");
  if (!positive_finite(v_refr_volts)) throw ConfigError("v_refr_volts must be positive");
  for (double i : {nominal.i_pr, nominal.i_sf, nominal.i_d, nominal.i_on, nominal.i_off,
                   nominal.i_refr}) {
    if (!positive_finite(i)) throw ConfigError("nominal bias currents must be positive");
  }
  if (!(nominal.i_on > nominal.i_d && nominal.i_d > nominal.i_off)) {
    throw ConfigError("nominal currents must satisfy i_on > i_d > i_off");
  }
  validate_range({threshold_t_min, threshold_t_max, 1.0});
  validate_range({bandwidth_t_min, bandwidth_t_max, 1.0});
  validate_range({refractory_t_min, refractory_t_max, 1.0});
  if (!(nominal_bandwidth_hz > 0.0)) throw ConfigError("nominal_bandwidth_hz must be positive");
  if (!positive_finite(bandwidth_exponent)) throw ConfigError("bandwidth_exponent must be positive");
}

Clamped<double> clamp_tweak(double tweak) {
  if (std::isnan(tweak)) throw RangeError("tweak is NaN");
  const double c = std::clamp(tweak, -1.0, 1.0);
  return {c, c != tweak};
}

void validate_range(const TweakRange& range) {
  if (!positive_finite(range.nominal_current)) {
    throw ConfigError("nominal current must be positive");
  }
  if (!(range.t_min > 1.0) || !(range.t_max > 1.0) || !std::isfinite(range.t_min) ||
      !std::isfinite(range.t_max)) {
    throw ConfigError("tweak range factors must be > 1");
  }
}

Clamped<double> tweak_to_current(double tweak, const TweakRange& range) {
  validate_range(range);
  const auto t = clamp_tweak(tweak);
  const double scale = t.value >= 0.0 ? std::log(range.t_max) : std::log(range.t_min);
  return {range.nominal_current * std::exp(t.value * scale), t.clamped};
}

double current_to_tweak(double current, const TweakRange& range) {
  validate_range(range);
  if (!positive_finite(current)) throw RangeError("current must be positive");
  const double lo = range.nominal_current / range.t_min;
  const double hi = range.nominal_current * range.t_max;
  constexpr double kSlack = 1e-12;
  if (current < lo * (1.0 - kSlack) || current > hi * (1.0 + kSlack)) {
    throw RangeError("current outside tweak range");
  }
  const double ratio = std::log(current / range.nominal_current);
  const double t = ratio >= 0.0 ? ratio / std::log(range.t_max) : ratio / std::log(range.t_min);
  return std::clamp(t, -1.0, 1.0);
}

Thresholds thresholds_from_currents(const BiasCurrents& c, double a_theta) {
  if (!positive_finite(c.i_on) || !positive_finite(c.i_d) || !positive_finite(c.i_off)) {
    throw InvalidBiasError("threshold currents must be positive");
  }
  if (!(c.i_on > c.i_d)) throw InvalidBiasError("i_on must exceed i_d (zero or negative ON threshold)");
  if (!(c.i_d > c.i_off)) throw InvalidBiasError("i_off must be below i_d (zero or positive OFF threshold)");
  return {a_theta * std::log(c.i_on / c.i_d), a_theta * std::log(c.i_off / c.i_d)};
}

Clamped<BiasCurrents> currents_for_threshold(double theta, const BiasCurrents& base,
                                             const CameraConfig& camera) {
  if (!std::isfinite(theta) || !(theta > 0.0)) {
    throw InvalidBiasError("threshold must be positive");
  }
  BiasCurrents out = base;
  out.i_on = base.i_d * std::exp(theta / camera.a_theta);
  out.i_off = base.i_d * std::exp(-theta / camera.a_theta);

  // I_on moves with the tweak, I_off against it.
  const auto& n = camera.nominal;
  const double on_lo = n.i_on / camera.threshold_t_min;
  const double on_hi = n.i_on * camera.threshold_t_max;
  const double off_lo = n.i_off / camera.threshold_t_max;
  const double off_hi = n.i_off * camera.threshold_t_min;
  bool clamped = false;
  auto clamp_into = [&](double& v, double lo, double hi) {
    // Relative slack so an exact inverse of a boundary tweak is not flagged.
    if (v < lo * (1.0 - 1e-12)) {
      v = lo;
      clamped = true;
    } else if (v > hi * (1.0 + 1e-12)) {
      v = hi;
      clamped = true;
    }
  };
  clamp_into(out.i_on, on_lo, on_hi);
  clamp_into(out.i_off, off_lo, off_hi);
  return {out, clamped};
}

double refractory_from_current(double i_refr, const CameraConfig& camera) {
  if (!positive_finite(i_refr)) throw InvalidBiasError("i_refr must be positive");
  return camera.c3_farads / (i_refr * camera.v_refr_volts);
}

double bandwidth_from_currents(const BiasCurrents& c, const BiasCurrents& nominal,
                               double nominal_bw_hz, double gamma) {
  if (!positive_finite(c.i_pr) || !positive_finite(c.i_sf) || !positive_finite(nominal.i_pr) ||
      !positive_finite(nominal.i_sf)) {
    throw InvalidBiasError("photoreceptor currents must be positive");
  }
  // The slower of the two stages dominates.
  const double a = c.i_pr / nominal.i_pr;
  const double b = c.i_sf / nominal.i_sf;
  return nominal_bw_hz * std::pow(std::min(a, b), gamma);
}

double predicted_rate_from_sensitivity(double sigma, double sigma_min, double sigma_0, double r_0) {
  if (!(sigma_0 > sigma_min)) throw ModelParameterError("sigma_0 must exceed sigma_min");
  return std::max(0.0, r_0 * (sigma - sigma_min) / (sigma_0 - sigma_min));
}

OperatingPoint operating_point(const TweakSet& tweaks, const CameraConfig& camera) {
  OperatingPoint op;
  const auto& n = camera.nominal;

  const auto thr = clamp_tweak(tweaks.threshold);
  const auto bw = clamp_tweak(tweaks.bandwidth);
  const auto refr = clamp_tweak(tweaks.refractory);
  op.tweaks = {thr.value, bw.value, refr.value};
  op.clamped = thr.clamped || bw.clamped || refr.clamped;

  const double i_on = tweak_to_current(thr.value, threshold_range(camera, n.i_on)).value;
  const double theta = camera.a_theta * std::log(i_on / n.i_d);
  auto currents = currents_for_threshold(theta, n, camera);
  op.clamped = op.clamped || currents.clamped;
  op.currents = currents.value;

  const double m_bw =
      tweak_to_current(bw.value, {camera.bandwidth_t_min, camera.bandwidth_t_max, 1.0}).value;
  op.currents.i_pr = n.i_pr * m_bw;
  op.currents.i_sf = n.i_sf * m_bw;
  op.currents.i_refr =
      tweak_to_current(refr.value, {camera.refractory_t_min, camera.refractory_t_max, n.i_refr})
          .value;

  const auto th = thresholds_from_currents(op.currents, camera.a_theta);
  op.params.theta_on = th.theta_on;
  op.params.theta_off = th.theta_off;
  op.params.sensitivity = 1.0 / th.theta_on;
  op.params.bandwidth_hz =
      bandwidth_from_currents(op.currents, n, camera.nominal_bandwidth_hz, camera.bandwidth_exponent);
  op.params.refractory_s = refractory_from_current(op.currents.i_refr, camera);
  return op;
}

namespace {

using Setter = std::function<void(CameraConfig&, double)>;

const std::map<std::string, Setter>& camera_keys() {
  static const std::map<std::string, Setter> keys = {
      {"a_theta", [](CameraConfig& c, double v) { c.a_theta = v; }},
      {"c3_farads", [](CameraConfig& c, double v) { c.c3_farads = v; }},
      {"v_refr_volts", [](CameraConfig& c, double v) { c.v_refr_volts = v; }},
      {"i_pr", [](CameraConfig& c, double v) { c.nominal.i_pr = v; }},
      {"i_sf", [](CameraConfig& c, double v) { c.nominal.i_sf = v; }},
      {"i_d", [](CameraConfig& c, double v) { c.nominal.i_d = v; }},
      {"i_on", [](CameraConfig& c, double v) { c.nominal.i_on = v; }},
      {"i_off", [](CameraConfig& c, double v) { c.nominal.i_off = v; }},
      {"i_refr", [](CameraConfig& c, double v) { c.nominal.i_refr = v; }},
      {"threshold_t_min", [](CameraConfig& c, double v) { c.threshold_t_min = v; }},
      {"threshold_t_max", [](CameraConfig& c, double v) { c.threshold_t_max = v; }},
      {"bandwidth_t_min", [](CameraConfig& c, double v) { c.bandwidth_t_min = v; }},
      {"bandwidth_t_max", [](CameraConfig& c, double v) { c.bandwidth_t_max = v; }},
      {"refractory_t_min", [](CameraConfig& c, double v) { c.refractory_t_min = v; }},
      {"refractory_t_max", [](CameraConfig& c, double v) { c.refractory_t_max = v; }},
      {"nominal_bandwidth_hz", [](CameraConfig& c, double v) { c.nominal_bandwidth_hz = v; }},
      {"bandwidth_exponent", [](CameraConfig& c, double v) { c.bandwidth_exponent = v; }},
  };
  return keys;
}

}  // namespace

CameraConfig parse_camera_config(const textcfg::Section& section, CameraConfig base) {
  for (const auto& line : section.lines) {
    for (const auto& p : line.pairs) {
      const auto it = camera_keys().find(p.key);
      if (it == camera_keys().end()) {
        throw ParseError(line.number, "unknown camera key '" + p.key + "'");
      }
      it->second(base, textcfg::to_double(p, line.number));
    }
  }
  base.validate();
  return base;
}

std::string serialize_camera_config(const CameraConfig& c) {
  using textcfg::format_double;
  std::ostringstream out;
  out << "[camera]\n"
      << "a_theta = " << format_double(c.a_theta) << "\n"
      << "c3_farads = " << format_double(c.c3_farads) << "\n"
      << "v_refr_volts = " << format_double(c.v_refr_volts) << "\n"
      << "i_pr = " << format_double(c.nominal.i_pr) << "\n"
      << "i_sf = " << format_double(c.nominal.i_sf) << "\n"
      << "i_d = " << format_double(c.nominal.i_d) << "\n"
      << "i_on = " << format_double(c.nominal.i_on) << "\n"
      << "i_off = " << format_double(c.nominal.i_off) << "\n"
      << "i_refr = " << format_double(c.nominal.i_refr) << "\n"
      << "threshold_t_min = " << format_double(c.threshold_t_min) << "\n"
      << "threshold_t_max = " << format_double(c.threshold_t_max) << "\n"
      << "bandwidth_t_min = " << format_double(c.bandwidth_t_min) << "\n"
      << "bandwidth_t_max = " << format_double(c.bandwidth_t_max) << "\n"
      << "refractory_t_min = " << format_double(c.refractory_t_min) << "\n"
      << "refractory_t_max = " << format_double(c.refractory_t_max) << "\n"
      << "nominal_bandwidth_hz = " << format_double(c.nominal_bandwidth_hz) << "\n"
      << "bandwidth_exponent = " << format_double(c.bandwidth_exponent) << "\n";
  return out.str();
}

}  // namespace dvsbias::bias
