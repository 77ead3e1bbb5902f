#pragma once

#include "dvsbias/textcfg.hpp"

namespace dvsbias::bias {

/// Dimensionless knobs, each meaningful in [-1, 1].
struct TweakSet {
  double threshold = 0.0;
  double bandwidth = 0.0;
  double refractory = 0.0;

  bool operator==(const TweakSet&) const = default;
};

/// Current range reachable by one tweak: [nominal/t_min, nominal*t_max].
struct TweakRange {
  double t_min = 1.0;
  double t_max = 1.0;
  double nominal_current = 1.0;
};

/// Pixel bias currents in amperes.
struct BiasCurrents {
  double i_pr = 1e-9;
  double i_sf = 25e-12;
  double i_d = 20e-9;
  double i_on = 1.3e-6;
  double i_off = 300e-12;
  double i_refr = 5e-9;
};

/// Physical operating point of the pixel derived from the bias currents.
struct PixelParams {
  double theta_on = 0.0;      // e-folds, > 0
  double theta_off = 0.0;     // e-folds, < 0
  double sensitivity = 0.0;   // events per e-fold
  double bandwidth_hz = 0.0;  // photoreceptor cutoff; +inf disables the filter
  double refractory_s = 0.0;
};

/// DAVIS346-like defaults. Everything here can be overridden from a
/// [camera] block.
struct CameraConfig {
  double a_theta = 1.0 / 15.5;
  double c3_farads = 20e-15;
  double v_refr_volts = 0.5;
  BiasCurrents nominal{};
  double threshold_t_min = 10.0;
  double threshold_t_max = 10.0;
  double bandwidth_t_min = 30.0;
  double bandwidth_t_max = 30.0;
  double refractory_t_min = 100.0;
  double refractory_t_max = 8.0;
  double nominal_bandwidth_hz = 300.0;
  double bandwidth_exponent = 0.5;

  /// Throws ConfigError on non-physical values.
  void validate() const;
};

template <typename T>
struct Clamped {
  T value;
  bool clamped = false;
};

Clamped<double> clamp_tweak(double tweak);

void validate_range(const TweakRange& range);

/// Exponential tweak-to-current map. Out-of-range tweaks are clamped and
/// reported through Clamped::clamped.
Clamped<double> tweak_to_current(double tweak, const TweakRange& range);

/// Inverse of tweak_to_current. Throws RangeError outside the reachable range.
double current_to_tweak(double current, const TweakRange& range);

struct Thresholds {
  double theta_on;
  double theta_off;
};

/// theta = a_theta * ln(I_on,off / I_d). Throws InvalidBiasError unless
/// i_on > i_d > i_off > 0.
Thresholds thresholds_from_currents(const BiasCurrents& c, double a_theta = 1.0 / 15.5);

/// Balanced-threshold inverse: sets i_on and i_off so that theta_on = theta
/// and theta_off = -theta, leaving the other currents untouched. Currents
/// outside the threshold tweak range of `camera` are clamped and flagged.
Clamped<BiasCurrents> currents_for_threshold(double theta, const BiasCurrents& base,
                                             const CameraConfig& camera = {});

/// Refractory dead time C3 / (I_refr * V_refr).
double refractory_from_current(double i_refr, const CameraConfig& camera = {});

/// nominal_bw * min(i_pr/i_pr0, i_sf/i_sf0)^gamma.
double bandwidth_from_currents(const BiasCurrents& c, const BiasCurrents& nominal,
                               double nominal_bw_hz, double gamma = 0.5);

/// Linear rate-versus-sensitivity model, floored at zero.
double predicted_rate_from_sensitivity(double sigma, double sigma_min, double sigma_0,
                                       double r_0);

struct OperatingPoint {
  TweakSet tweaks;  // after clamping
  BiasCurrents currents;
  PixelParams params;
  bool clamped = false;
};

/// Maps a tweak set onto bias currents and the pixel operating point.
///
/// The threshold tweak scales I_on (up for positive tweaks) and the balanced
/// inverse then fixes I_off; the bandwidth tweak scales I_pr and I_sf together;
/// the refractory tweak scales I_refr, so a negative tweak lengthens the dead
/// time.
OperatingPoint operating_point(const TweakSet& tweaks, const CameraConfig& camera);

/// Applies a [camera] section on top of `base`. Unknown keys are errors.
CameraConfig parse_camera_config(const textcfg::Section& section, CameraConfig base = {});
std::string serialize_camera_config(const CameraConfig& camera);

}  // namespace dvsbias::bias
