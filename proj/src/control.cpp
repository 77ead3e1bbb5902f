#include "dvsbias/control.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dvsbias/errors.hpp"

namespace dvsbias::control {

void ControllerConfig::validate() const {
  if (!(delta_bb > 0.0) || delta_bb > 2.0) throw ConfigError("delta_bb must be in (0, 2]");
  if (!(hysteresis > 1.0)) throw ConfigError("hysteresis must be > 1");
  if (!(t_ignore >= 0.0)) throw ConfigError("t_ignore must be >= 0");
  if (!(t_bb > 0.0)) throw ConfigError("t_bb must be > 0");
  if (!(r_low > 0.0) || !(r_high > r_low)) throw ConfigError("need r_high > r_low > 0");
  if (!(r_noise_limit > 0.0)) throw ConfigError("r_noise_limit must be > 0");
}

std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::Idle: return "idle";
    case Mode::DrivingUp: return "up";
    case Mode::DrivingDown: return "down";
  }
  return "?";
}

std::string_view to_string(Target t) {
  switch (t) {
    case Target::Threshold: return "threshold_tweak";
    case Target::Bandwidth: return "bandwidth_tweak";
    case Target::Refractory: return "refractory_tweak";
  }
  return "?";
}

namespace {

// Tweaks move in fixed steps; snapping keeps repeated +-0.1 steps landing
// exactly on the grid (and on zero).
double snap(double v) { return std::round(std::clamp(v, -1.0, 1.0) * 1e9) / 1e9; }

bool paced_out(const ControllerState& s, const ControllerConfig& cfg, double now) {
  return now - s.last_action_t < cfg.t_bb;
}

ControlAction act(ControllerState& s, const ControllerConfig& cfg, double now, Target target,
                  double sign, double tweak, double rate) {
  s.last_action_t = now;
  s.blanked_until = now + cfg.t_ignore;
  return {now, target, sign * cfg.delta_bb, snap(tweak + sign * cfg.delta_bb), rate};
}

// Limiter shared by the refractory and noise controllers. `sign` is the
// direction of the tweak that suppresses events.
std::optional<ControlAction> limiter_step(double rate, double bound, ControllerState& s,
                                          const ControllerConfig& cfg, double now, double tweak,
                                          Target target, double sign) {
  const double exit = bound / cfg.hysteresis;
  if (rate > bound) {
    s.mode = Mode::DrivingUp;
  } else if (s.mode == Mode::DrivingUp && rate < exit) {
    s.mode = Mode::Idle;
  }
  if (s.mode != Mode::DrivingUp) {
    s.mode = (rate < exit && tweak != 0.0) ? Mode::DrivingDown : Mode::Idle;
  }
  if (s.mode == Mode::Idle || paced_out(s, cfg, now)) return std::nullopt;

  if (s.mode == Mode::DrivingUp) {
    if (sign * tweak >= 1.0) return std::nullopt;
    return act(s, cfg, now, target, sign, tweak, rate);
  }
  // Recovery toward the default, never past it.
  const double toward = tweak > 0.0 ? -1.0 : 1.0;
  auto a = act(s, cfg, now, target, toward, tweak, rate);
  if (toward * a.resulting_tweak > 0.0 || std::abs(a.resulting_tweak) < 1e-9) {
    a.resulting_tweak = 0.0;
    s.mode = Mode::Idle;
  }
  return a;
}

}  // namespace

std::optional<ControlAction> threshold_controller_step(const meter::RateSample& sample,
                                                       ControllerState& s,
                                                       const ControllerConfig& cfg, double now,
                                                       double tweak) {
  if (now < s.blanked_until) return std::nullopt;
  const double r = sample.r_input_hz;
  if (s.mode == Mode::DrivingUp && r < cfg.r_high / cfg.hysteresis) s.mode = Mode::Idle;
  if (s.mode == Mode::DrivingDown && r > cfg.r_low * cfg.hysteresis) s.mode = Mode::Idle;
  if (s.mode == Mode::Idle) {
    if (r > cfg.r_high) {
      s.mode = Mode::DrivingUp;
    } else if (r < cfg.r_low) {
      s.mode = Mode::DrivingDown;
    }
  }
  if (s.mode == Mode::Idle || paced_out(s, cfg, now)) return std::nullopt;
  const double sign = s.mode == Mode::DrivingUp ? 1.0 : -1.0;
  if (sign * tweak >= 1.0) return std::nullopt;  // saturated
  return act(s, cfg, now, Target::Threshold, sign, tweak, r);
}

std::optional<ControlAction> refractory_controller_step(const meter::RateSample& sample,
                                                        ControllerState& s,
                                                        const ControllerConfig& cfg, double now,
                                                        double tweak) {
  if (now < s.blanked_until) return std::nullopt;
  return limiter_step(sample.r_input_hz, cfg.r_high, s, cfg, now, tweak, Target::Refractory, -1.0);
}

std::optional<ControlAction> noise_controller_step(const meter::RateSample& sample,
                                                   ControllerState& s,
                                                   const ControllerConfig& cfg, double now,
                                                   double tweak) {
  if (now < s.blanked_until) return std::nullopt;
  return limiter_step(sample.r_noise_per_pixel_hz, cfg.r_noise_limit, s, cfg, now, tweak,
                      Target::Bandwidth, -1.0);
}

Supervisor::Supervisor(ControllerConfig cfg, stimulus::ControlFlags enabled)
    : cfg_(cfg), enabled_(enabled) {
  cfg_.validate();
}

void Supervisor::set_enabled(stimulus::ControlFlags enabled) {
  if (!enabled.threshold) threshold_.mode = Mode::Idle;
  if (!enabled.refractory) refractory_.mode = Mode::Idle;
  if (!enabled.noise) noise_.mode = Mode::Idle;
  enabled_ = enabled;
}

void Supervisor::blank(double now) {
  for (auto* s : {&threshold_, &refractory_, &noise_}) {
    s->blanked_until = std::max(s->blanked_until, now + cfg_.t_ignore);
  }
}

std::vector<ControlAction> Supervisor::step(const meter::RateSample& sample,
                                            bias::TweakSet& tweaks) {
  std::vector<ControlAction> actions;
  const double now = sample.t;
  auto record = [&](std::optional<ControlAction> a, double& tweak) {
    if (!a) return;
    tweak = a->resulting_tweak;
    actions.push_back(*a);
    blank(now);
  };
  if (enabled_.threshold) {
    record(threshold_controller_step(sample, threshold_, cfg_, now, tweaks.threshold),
           tweaks.threshold);
  }
  if (enabled_.refractory) {
    record(refractory_controller_step(sample, refractory_, cfg_, now, tweaks.refractory),
           tweaks.refractory);
  }
  if (enabled_.noise) {
    record(noise_controller_step(sample, noise_, cfg_, now, tweaks.bandwidth), tweaks.bandwidth);
  }
  return actions;
}

const ControllerState& Supervisor::state(Target t) const {
  switch (t) {
    case Target::Threshold: return threshold_;
    case Target::Refractory: return refractory_;
    case Target::Bandwidth: return noise_;
  }
  return threshold_;
}

std::string Supervisor::describe() const {
  auto mode = [](bool on, const ControllerState& s) {
    return on ? std::string(to_string(s.mode)) : std::string("off");
  };
  return "thr=" + mode(enabled_.threshold, threshold_) +
         ";refr=" + mode(enabled_.refractory, refractory_) +
         ";noise=" + mode(enabled_.noise, noise_);
}

ControllerConfig parse_controller_config(const textcfg::Section& section, ControllerConfig base,
                                         stimulus::ControlFlags* flags) {
  for (const auto& line : section.lines) {
    for (const auto& p : line.pairs) {
      const int n = line.number;
      if (p.key == "delta_bb") {
        base.delta_bb = textcfg::to_double(p, n);
      } else if (p.key == "hysteresis") {
        base.hysteresis = textcfg::to_double(p, n);
      } else if (p.key == "t_ignore") {
        base.t_ignore = textcfg::to_double(p, n);
      } else if (p.key == "t_bb") {
        base.t_bb = textcfg::to_double(p, n);
      } else if (p.key == "r_high") {
        base.r_high = textcfg::to_double(p, n);
      } else if (p.key == "r_low") {
        base.r_low = textcfg::to_double(p, n);
      } else if (p.key == "r_noise_limit") {
        base.r_noise_limit = textcfg::to_double(p, n);
      } else if (flags && p.key == "threshold_control") {
        flags->threshold = textcfg::to_bool(p, n);
      } else if (flags && p.key == "refractory_control") {
        flags->refractory = textcfg::to_bool(p, n);
      } else if (flags && p.key == "noise_control") {
        flags->noise = textcfg::to_bool(p, n);
      } else {
        throw ParseError(n, "unknown control key '" + p.key + "'");
      }
    }
  }
  base.validate();
  return base;
}

std::string serialize_controller_config(const ControllerConfig& cfg,
                                        const stimulus::ControlFlags& flags) {
  using textcfg::format_double;
  std::ostringstream out;
  out << "[control]\n"
      << "delta_bb = " << format_double(cfg.delta_bb) << "\n"
      << "hysteresis = " << format_double(cfg.hysteresis) << "\n"
      << "t_ignore = " << format_double(cfg.t_ignore) << "\n"
      << "t_bb = " << format_double(cfg.t_bb) << "\n"
      << "r_high = " << format_double(cfg.r_high) << "\n"
      << "r_low = " << format_double(cfg.r_low) << "\n"
      << "r_noise_limit = " << format_double(cfg.r_noise_limit) << "\n"
      << "threshold_control = " << (flags.threshold ? "on" : "off") << "\n"
      << "refractory_control = " << (flags.refractory ? "on" : "off") << "\n"
      << "noise_control = " << (flags.noise ? "on" : "off") << "\n";
  return out.str();
}

}  // namespace dvsbias::control
