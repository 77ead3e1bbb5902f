#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dvsbias/textcfg.hpp"

namespace dvsbias::stimulus {

struct Geometry {
  int width = 64;
  int height = 64;

  std::size_t pixels() const { return static_cast<std::size_t>(width) * height; }
  bool operator==(const Geometry&) const = default;
};

/// Per-pixel linear luminance (arbitrary units, all > 0), row-major.
struct LuminanceField {
  int width = 0;
  int height = 0;
  std::vector<double> samples;
  double timestamp = 0.0;

  double at(int x, int y) const { return samples[static_cast<std::size_t>(y) * width + x]; }
};

enum class DotProfile {
  Disk,  // hard-edged, anti-aliased by supersampled coverage
  Cone,  // log-luminance depth falls linearly from centre to rim
};

/// Scene parameters in force at some instant.
struct SceneState {
  int dot_count = 1;
  double dot_speed_hz = 0.0;  // revolutions per second
  double dot_contrast = 0.5;  // Weber contrast of the dot centre, [0, 1)
  double ambient = 1.0;       // background luminance
  double dot_radius_px = 6.0;
  double orbit_radius_px = 20.0;
  DotProfile profile = DotProfile::Disk;
};

struct ControlFlags {
  bool threshold = false;
  bool refractory = false;
  bool noise = false;

  bool operator==(const ControlFlags&) const = default;
};

/// One timed line of the [directives] block. Unset fields leave the
/// previous value in force.
struct Directive {
  double t = 0.0;
  std::optional<int> dot_count;
  std::optional<double> dot_speed_hz;
  std::optional<double> dot_contrast;
  std::optional<double> ambient;
  std::optional<double> dot_radius_px;
  std::optional<double> orbit_radius_px;
  std::optional<DotProfile> profile;
  std::optional<bool> threshold_control;
  std::optional<bool> refractory_control;
  std::optional<bool> noise_control;
  std::optional<double> threshold_tweak;
  std::optional<double> bandwidth_tweak;
  std::optional<double> refractory_tweak;
  int line = 0;
};

class ScenarioSchedule {
 public:
  ScenarioSchedule() = default;
  /// Throws ValidationError if the directives violate ordering or ranges.
  explicit ScenarioSchedule(std::vector<Directive> directives);

  const std::vector<Directive>& directives() const { return directives_; }

  SceneState scene_at(double t) const;
  ControlFlags flags_at(double t) const;
  /// Accumulated rotation in turns; continuous across speed changes.
  double phase_at(double t) const;

 private:
  std::vector<Directive> directives_;
  std::vector<double> phase_at_directive_;
};

/// Reads the [directives] section (or the whole text if it has no section
/// headers). Throws ParseError / ValidationError.
ScenarioSchedule parse_schedule(std::string_view text);
ScenarioSchedule schedule_from_section(const textcfg::Section& section);
std::string serialize_schedule(const ScenarioSchedule& schedule);

/// Linear luminance at time t. Pure in (schedule, t, geometry).
LuminanceField render(const ScenarioSchedule& schedule, double t, Geometry geometry);

/// Natural-log luminance written row-major into `out` (size width*height).
/// Returns the minimum value written.
double render_log(const ScenarioSchedule& schedule, double t, Geometry geometry,
                  std::span<double> out);

}  // namespace dvsbias::stimulus
