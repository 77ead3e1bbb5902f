#include "dvsbias/stimulus.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "dvsbias/errors.hpp"

namespace dvsbias::stimulus {

namespace {

void apply(const Directive& d, SceneState& s) {
  if (d.dot_count) s.dot_count = *d.dot_count;
  if (d.dot_speed_hz) s.dot_speed_hz = *d.dot_speed_hz;
  if (d.dot_contrast) s.dot_contrast = *d.dot_contrast;
  if (d.ambient) s.ambient = *d.ambient;
  if (d.dot_radius_px) s.dot_radius_px = *d.dot_radius_px;
  if (d.orbit_radius_px) s.orbit_radius_px = *d.orbit_radius_px;
  if (d.profile) s.profile = *d.profile;
}

void validate(const Directive& d, std::size_t index) {
  if (!(d.t >= 0.0)) throw ValidationError(index, "directive time must be >= 0");
  if (d.dot_count && *d.dot_count < 0) throw ValidationError(index, "dot_count must be >= 0");
  if (d.dot_contrast && !(*d.dot_contrast >= 0.0 && *d.dot_contrast < 1.0)) {
    throw ValidationError(index, "dot_contrast must be in [0, 1)");
  }
  if (d.ambient && !(*d.ambient > 0.0)) throw ValidationError(index, "ambient must be > 0");
  if (d.dot_radius_px && !(*d.dot_radius_px > 0.0)) {
    throw ValidationError(index, "dot_radius_px must be > 0");
  }
  if (d.orbit_radius_px && !(*d.orbit_radius_px >= 0.0)) {
    throw ValidationError(index, "orbit_radius_px must be >= 0");
  }
}

// Last directive with t <= query, or -1.
std::ptrdiff_t last_at_or_before(const std::vector<Directive>& ds, double t) {
  auto it = std::upper_bound(ds.begin(), ds.end(), t,
                             [](double v, const Directive& d) { return v < d.t; });
  return std::distance(ds.begin(), it) - 1;
}

constexpr double kHalfDiagonal = 0.70710678118654757;

}  // namespace

ScenarioSchedule::ScenarioSchedule(std::vector<Directive> directives)
    : directives_(std::move(directives)) {
  for (std::size_t i = 0; i < directives_.size(); ++i) {
    validate(directives_[i], i);
    if (i > 0 && !(directives_[i].t > directives_[i - 1].t)) {
      throw ValidationError(i, "directive timestamps must be strictly increasing");
    }
  }
  phase_at_directive_.reserve(directives_.size());
  double phase = 0.0;
  double speed = SceneState{}.dot_speed_hz;
  double last_t = 0.0;
  for (const auto& d : directives_) {
    phase += speed * (d.t - last_t);
    phase_at_directive_.push_back(phase);
    if (d.dot_speed_hz) speed = *d.dot_speed_hz;
    last_t = d.t;
  }
}

SceneState ScenarioSchedule::scene_at(double t) const {
  SceneState s;
  const auto last = last_at_or_before(directives_, t);
  for (std::ptrdiff_t i = 0; i <= last; ++i) apply(directives_[i], s);
  return s;
}

ControlFlags ScenarioSchedule::flags_at(double t) const {
  ControlFlags f;
  const auto last = last_at_or_before(directives_, t);
  for (std::ptrdiff_t i = 0; i <= last; ++i) {
    const auto& d = directives_[i];
    if (d.threshold_control) f.threshold = *d.threshold_control;
    if (d.refractory_control) f.refractory = *d.refractory_control;
    if (d.noise_control) f.noise = *d.noise_control;
  }
  return f;
}

double ScenarioSchedule::phase_at(double t) const {
  const auto last = last_at_or_before(directives_, t);
  if (last < 0) return SceneState{}.dot_speed_hz * t;
  const double speed = scene_at(t).dot_speed_hz;
  return phase_at_directive_[last] + speed * (t - directives_[last].t);
}

double render_log(const ScenarioSchedule& schedule, double t, Geometry g, std::span<double> out) {
  if (g.width <= 0 || g.height <= 0) throw ConfigError("geometry must be positive");
  if (out.size() != g.pixels()) throw ConfigError("output span does not match geometry");
  if (!(t >= 0.0)) throw ConfigError("render time must be >= 0");

  const SceneState s = schedule.scene_at(t);
  const double log_ambient = std::log(s.ambient);
  std::fill(out.begin(), out.end(), log_ambient);
  double min_value = log_ambient;
  if (s.dot_count == 0 || s.dot_contrast == 0.0) return min_value;

  const double depth = std::log1p(-s.dot_contrast);
  const double phase = schedule.phase_at(t);
  const double cx = 0.5 * g.width;
  const double cy = 0.5 * g.height;
  const double r = s.dot_radius_px;
  const double r2 = r * r;

  for (int i = 0; i < s.dot_count; ++i) {
    const double angle = 2.0 * std::numbers::pi * (phase + static_cast<double>(i) / s.dot_count);
    const double dx0 = cx + s.orbit_radius_px * std::cos(angle);
    const double dy0 = cy + s.orbit_radius_px * std::sin(angle);
    const int x_lo = std::max(0, static_cast<int>(std::floor(dx0 - r - 1.0)));
    const int x_hi = std::min(g.width - 1, static_cast<int>(std::ceil(dx0 + r + 1.0)));
    const int y_lo = std::max(0, static_cast<int>(std::floor(dy0 - r - 1.0)));
    const int y_hi = std::min(g.height - 1, static_cast<int>(std::ceil(dy0 + r + 1.0)));

    for (int y = y_lo; y <= y_hi; ++y) {
      for (int x = x_lo; x <= x_hi; ++x) {
        const double px = x + 0.5 - dx0;
        const double py = y + 0.5 - dy0;
        const double dist = std::sqrt(px * px + py * py);
        double value = log_ambient;
        if (s.profile == DotProfile::Cone) {
          if (dist >= r) continue;
          value = log_ambient + depth * (1.0 - dist / r);
        } else {
          double coverage = 0.0;
          if (dist <= r - kHalfDiagonal) {
            coverage = 1.0;
          } else if (dist >= r + kHalfDiagonal) {
            continue;
          } else {
            int inside = 0;
            for (int sy = 0; sy < 4; ++sy) {
              for (int sx = 0; sx < 4; ++sx) {
                const double qx = px + (sx + 0.5) * 0.25 - 0.5;
                const double qy = py + (sy + 0.5) * 0.25 - 0.5;
                if (qx * qx + qy * qy < r2) ++inside;
              }
            }
            if (inside == 0) continue;
            coverage = inside / 16.0;
          }
          value = log_ambient + std::log1p(-s.dot_contrast * coverage);
        }
        auto& cell = out[static_cast<std::size_t>(y) * g.width + x];
        // Overlapping dots: darkest wins.
        if (value < cell) {
          cell = value;
          min_value = std::min(min_value, value);
        }
      }
    }
  }
  return min_value;
}

LuminanceField render(const ScenarioSchedule& schedule, double t, Geometry g) {
  LuminanceField f{g.width, g.height, std::vector<double>(g.pixels()), t};
  render_log(schedule, t, g, f.samples);
  for (auto& v : f.samples) v = std::exp(v);
  return f;
}

namespace {

DotProfile parse_profile(const textcfg::Pair& p, int line) {
  if (p.value == "disk") return DotProfile::Disk;
  if (p.value == "cone") return DotProfile::Cone;
  throw ParseError(line, "dot_profile must be disk or cone, got '" + p.value + "'");
}

Directive parse_directive(const textcfg::Line& line) {
  using textcfg::to_bool;
  using textcfg::to_double;
  const int n = line.number;
  if (line.pairs.empty() || line.pairs.front().key != "t") {
    throw ParseError(n, "directive must start with t=<seconds>");
  }
  Directive d;
  d.line = n;
  d.t = to_double(line.pairs.front(), n);
  for (std::size_t i = 1; i < line.pairs.size(); ++i) {
    const auto& p = line.pairs[i];
    const auto& k = p.key;
    if (k == "dot_count") {
      const auto v = textcfg::to_int(p, n);
      if (v > 1000) throw ParseError(n, "dot_count too large");
      d.dot_count = static_cast<int>(v);
    } else if (k == "dot_speed_hz") {
      d.dot_speed_hz = to_double(p, n);
    } else if (k == "dot_contrast") {
      d.dot_contrast = to_double(p, n);
    } else if (k == "ambient" || k == "ambient_luminance") {
      d.ambient = to_double(p, n);
    } else if (k == "dot_radius_px") {
      d.dot_radius_px = to_double(p, n);
    } else if (k == "orbit_radius_px") {
      d.orbit_radius_px = to_double(p, n);
    } else if (k == "dot_profile") {
      d.profile = parse_profile(p, n);
    } else if (k == "threshold_control") {
      d.threshold_control = to_bool(p, n);
    } else if (k == "refractory_control") {
      d.refractory_control = to_bool(p, n);
    } else if (k == "noise_control") {
      d.noise_control = to_bool(p, n);
    } else if (k == "threshold_tweak") {
      d.threshold_tweak = to_double(p, n);
    } else if (k == "bandwidth_tweak") {
      d.bandwidth_tweak = to_double(p, n);
    } else if (k == "refractory_tweak") {
      d.refractory_tweak = to_double(p, n);
    } else {
      throw ParseError(n, "unknown directive key '" + k + "'");
    }
  }
  return d;
}

}  // namespace

ScenarioSchedule schedule_from_section(const textcfg::Section& section) {
  std::vector<Directive> ds;
  ds.reserve(section.lines.size());
  for (const auto& line : section.lines) ds.push_back(parse_directive(line));
  return ScenarioSchedule(std::move(ds));
}

ScenarioSchedule parse_schedule(std::string_view text) {
  const auto doc = textcfg::parse(text);
  if (!doc.has_headers()) return schedule_from_section(doc.sections.front());
  if (!doc.sections.front().lines.empty()) {
    throw ParseError(doc.sections.front().lines.front().number,
                     "directive outside of the [directives] section");
  }
  const auto* section = doc.find("directives");
  if (section == nullptr) return ScenarioSchedule{};
  return schedule_from_section(*section);
}

std::string serialize_schedule(const ScenarioSchedule& schedule) {
  using textcfg::format_double;
  std::ostringstream out;
  out << "[directives]\n";
  auto on_off = [](bool b) { return b ? "on" : "off"; };
  for (const auto& d : schedule.directives()) {
    out << "t=" << format_double(d.t);
    if (d.dot_count) out << " dot_count=" << *d.dot_count;
    if (d.dot_speed_hz) out << " dot_speed_hz=" << format_double(*d.dot_speed_hz);
    if (d.dot_contrast) out << " dot_contrast=" << format_double(*d.dot_contrast);
    if (d.ambient) out << " ambient=" << format_double(*d.ambient);
    if (d.dot_radius_px) out << " dot_radius_px=" << format_double(*d.dot_radius_px);
    if (d.orbit_radius_px) out << " orbit_radius_px=" << format_double(*d.orbit_radius_px);
    if (d.profile) out << " dot_profile=" << (*d.profile == DotProfile::Cone ? "cone" : "disk");
    if (d.threshold_control) out << " threshold_control=" << on_off(*d.threshold_control);
    if (d.refractory_control) out << " refractory_control=" << on_off(*d.refractory_control);
    if (d.noise_control) out << " noise_control=" << on_off(*d.noise_control);
    if (d.threshold_tweak) out << " threshold_tweak=" << format_double(*d.threshold_tweak);
    if (d.bandwidth_tweak) out << " bandwidth_tweak=" << format_double(*d.bandwidth_tweak);
    if (d.refractory_tweak) out << " refractory_tweak=" << format_double(*d.refractory_tweak);
    out << "\n";
  }
  return out.str();
}

}  // namespace dvsbias::stimulus
