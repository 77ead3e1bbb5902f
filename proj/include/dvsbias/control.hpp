#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dvsbias/bias_model.hpp"
#include "dvsbias/metering.hpp"
#include "dvsbias/textcfg.hpp"

namespace dvsbias::control {

struct ControllerConfig {
  double delta_bb = 0.1;
  double hysteresis = 1.5;
  double t_ignore = 1.0;
  double t_bb = 2.0;
  double r_high = 300e3;
  double r_low = 100e3;
  double r_noise_limit = 0.5;  // per pixel

  void validate() const;
};

enum class Mode { Idle, DrivingUp, DrivingDown };
enum class Target { Threshold, Bandwidth, Refractory };

std::string_view to_string(Mode m);
std::string_view to_string(Target t);

struct ControllerState {
  Mode mode = Mode::Idle;
  double last_action_t = -1e300;
  double blanked_until = -1e300;
};

struct ControlAction {
  double t = 0.0;
  Target target = Target::Threshold;
  double delta = 0.0;
  double resulting_tweak = 0.0;
  double trigger_rate = 0.0;
};

// Each step function sees one rate sample at time `now` together with the
// tweak it actuates, updates `state`, and returns the action to apply, if
// any. Samples inside the blanking interval are ignored entirely.

/// Rate bounding on R_I: raise the threshold above R_H, lower it below R_L.
std::optional<ControlAction> threshold_controller_step(const meter::RateSample& sample,
                                                       ControllerState& state,
                                                       const ControllerConfig& cfg, double now,
                                                       double tweak);

/// Rate limiting on R_I: lengthen the dead time above R_H, relax back to the
/// default once R has dropped below R_H/H.
std::optional<ControlAction> refractory_controller_step(const meter::RateSample& sample,
                                                        ControllerState& state,
                                                        const ControllerConfig& cfg, double now,
                                                        double tweak);

/// Noise regulation on R_N per pixel: narrow the bandwidth above R_NL, relax
/// back to the default below R_NL/H.
std::optional<ControlAction> noise_controller_step(const meter::RateSample& sample,
                                                   ControllerState& state,
                                                   const ControllerConfig& cfg, double now,
                                                   double tweak);

/// Runs the enabled controllers on each sample with shared pacing and
/// blanking, and keeps the tweak set they act on.
class Supervisor {
 public:
  explicit Supervisor(ControllerConfig cfg, stimulus::ControlFlags enabled = {});

  void set_enabled(stimulus::ControlFlags enabled);
  stimulus::ControlFlags enabled() const { return enabled_; }
  /// True when threshold and noise control are both on.
  bool interaction_warning() const { return enabled_.threshold && enabled_.noise; }

  std::vector<ControlAction> step(const meter::RateSample& sample, bias::TweakSet& tweaks);

  /// Blanks every controller until now + t_ignore, e.g. after a manual tweak.
  void blank(double now);

  const ControllerState& state(Target t) const;
  const ControllerConfig& config() const { return cfg_; }
  /// Compact per-controller mode summary, e.g. "thr=up;refr=off;noise=idle".
  std::string describe() const;

 private:
  ControllerConfig cfg_;
  stimulus::ControlFlags enabled_;
  ControllerState threshold_;
  ControllerState refractory_;
  ControllerState noise_;
};

/// Applies a [control] section on top of `base`. Enable flags are returned
/// through `flags` when given.
ControllerConfig parse_controller_config(const textcfg::Section& section,
                                         ControllerConfig base = {},
                                         stimulus::ControlFlags* flags = nullptr);
std::string serialize_controller_config(const ControllerConfig& cfg,
                                        const stimulus::ControlFlags& flags);

}  // namespace dvsbias::control
