#include <fstream>
#include <sstream>

#include "dvsbias/errors.hpp"
#include "dvsbias/harness.hpp"

namespace dvsbias::harness {

std::string_view to_string(SweepParam p) {
  switch (p) {
    case SweepParam::Threshold: return "threshold";
    case SweepParam::Bandwidth: return "bandwidth";
    case SweepParam::Refractory: return "refractory";
  }
  return "?";
}

SweepParam parse_sweep_param(std::string_view s) {
  if (s == "threshold") return SweepParam::Threshold;
  if (s == "bandwidth") return SweepParam::Bandwidth;
  if (s == "refractory") return SweepParam::Refractory;
  throw ConfigError("sweep parameter must be threshold, bandwidth or refractory, got '" +
                    std::string(s) + "'");
}

double Scenario::effective_rate_scale() const {
  return rate_scale.value_or(static_cast<double>(geometry.pixels()) / kReferencePixels);
}

control::ControllerConfig Scenario::scaled_control() const {
  auto c = control;
  c.r_high *= effective_rate_scale();
  c.r_low *= effective_rate_scale();
  return c;
}

sim::NoiseModel Scenario::noise_model() const {
  auto n = noise;
  const auto nominal = bias::operating_point({}, camera);
  n.reference_bandwidth_hz = nominal.params.bandwidth_hz;
  n.reference_theta = nominal.params.theta_on;
  return n;
}

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> parse_grid(const textcfg::Pair& p, int line) {
  std::vector<double> grid;
  for (const auto& item : split_list(p.value)) {
    grid.push_back(textcfg::to_double(textcfg::Pair{p.key, item}, line));
  }
  if (grid.empty()) throw ParseError(line, "empty sweep grid");
  return grid;
}

void parse_scenario_section(const textcfg::Section& sec, Scenario& s) {
  using textcfg::to_double;
  for (const auto& line : sec.lines) {
    const int n = line.number;
    for (const auto& p : line.pairs) {
      const auto& k = p.key;
      if (k == "name") {
        s.name = p.value;
      } else if (k == "duration_s") {
        s.duration_s = to_double(p, n);
      } else if (k == "width") {
        s.geometry.width = static_cast<int>(textcfg::to_int(p, n));
      } else if (k == "height") {
        s.geometry.height = static_cast<int>(textcfg::to_int(p, n));
      } else if (k == "window_s") {
        s.window_s = to_double(p, n);
      } else if (k == "seed") {
        s.seed = static_cast<std::uint64_t>(textcfg::to_int(p, n));
      } else if (k == "rate_scale") {
        s.rate_scale = to_double(p, n);
      } else if (k == "correlation_time_s") {
        s.correlation_time_s = to_double(p, n);
      } else if (k == "max_step_s") {
        s.max_step_s = to_double(p, n);
      } else if (k == "events") {
        if (p.value == "csv") {
          s.events = EventFormat::Csv;
        } else if (p.value == "binary") {
          s.events = EventFormat::Binary;
        } else if (p.value == "none") {
          s.events = EventFormat::None;
        } else {
          throw ParseError(n, "events must be csv, binary or none");
        }
      } else if (k == "provenance") {
        s.provenance = textcfg::to_bool(p, n);
      } else if (k == "checks") {
        s.checks = split_list(p.value);
      } else {
        throw ParseError(n, "unknown scenario key '" + k + "'");
      }
    }
  }
}

SweepSpec parse_sweep_section(const textcfg::Section& sec) {
  SweepSpec spec;
  for (const auto& line : sec.lines) {
    const int n = line.number;
    for (const auto& p : line.pairs) {
      if (p.key == "param") {
        try {
          spec.param = parse_sweep_param(p.value);
        } catch (const ConfigError& e) {
          throw ParseError(n, e.what());
        }
      } else if (p.key == "grid") {
        spec.grid = parse_grid(p, n);
      } else if (p.key == "fit_min") {
        spec.fit_min = textcfg::to_double(p, n);
      } else if (p.key == "fit_max") {
        spec.fit_max = textcfg::to_double(p, n);
      } else {
        throw ParseError(n, "unknown sweep key '" + p.key + "'");
      }
    }
  }
  if (spec.grid.empty()) throw ParseError(sec.header_line, "[sweep] needs a grid");
  return spec;
}

void validate(const Scenario& s) {
  if (s.name.empty()) throw ConfigError("scenario name must not be empty");
  if (!(s.duration_s >= 0.0)) throw ConfigError("duration_s must be >= 0");
  if (s.geometry.width <= 0 || s.geometry.height <= 0 || s.geometry.width > 4096 ||
      s.geometry.height > 4096) {
    throw ConfigError("width and height must be in [1, 4096]");
  }
  if (!(s.window_s >= 1e-3)) throw ConfigError("window_s must be >= 1 ms");
  if (s.rate_scale && !(*s.rate_scale > 0.0)) throw ConfigError("rate_scale must be > 0");
  if (!(s.correlation_time_s > 0.0)) throw ConfigError("correlation_time_s must be > 0");
  if (s.max_step_s && !(*s.max_step_s > 0.0)) throw ConfigError("max_step_s must be > 0");
  if (s.sweep) {
    for (double v : s.sweep->grid) {
      if (!(v >= -1.0 && v <= 1.0)) throw ConfigError("sweep grid values must be in [-1, 1]");
    }
  }
  s.camera.validate();
  s.noise.validate();
  s.control.validate();
}

}  // namespace

Scenario parse_scenario(std::string_view text) {
  const auto doc = textcfg::parse(text);
  if (!doc.sections.front().lines.empty()) {
    throw ParseError(doc.sections.front().lines.front().number,
                     "settings must appear inside a [section]");
  }
  static const char* known[] = {"scenario", "camera", "noise", "control", "directives", "sweep"};
  for (const auto& sec : doc.sections) {
    if (sec.name.empty()) continue;
    bool ok = false;
    for (const char* k : known) ok = ok || sec.name == k;
    if (!ok) throw ParseError(sec.header_line, "unknown section [" + sec.name + "]");
  }

  Scenario s;
  if (const auto* sec = doc.find("scenario")) parse_scenario_section(*sec, s);
  if (const auto* sec = doc.find("camera")) s.camera = bias::parse_camera_config(*sec);
  if (const auto* sec = doc.find("noise")) s.noise = sim::parse_noise_model(*sec);
  if (const auto* sec = doc.find("control")) {
    s.control = control::parse_controller_config(*sec, {}, &s.control_flags);
  }
  if (const auto* sec = doc.find("directives")) s.schedule = stimulus::schedule_from_section(*sec);
  if (const auto* sec = doc.find("sweep")) s.sweep = parse_sweep_section(*sec);
  validate(s);
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario file '" + path.string() + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_scenario(text.str());
}

std::string serialize_scenario(const Scenario& s) {
  using textcfg::format_double;
  std::ostringstream out;
  out << "[scenario]\n"
      << "name = " << s.name << "\n"
      << "duration_s = " << format_double(s.duration_s) << "\n"
      << "width = " << s.geometry.width << "\n"
      << "height = " << s.geometry.height << "\n"
      << "window_s = " << format_double(s.window_s) << "\n"
      << "seed = " << s.seed << "\n";
  if (s.rate_scale) out << "rate_scale = " << format_double(*s.rate_scale) << "\n";
  out << "correlation_time_s = " << format_double(s.correlation_time_s) << "\n";
  if (s.max_step_s) out << "max_step_s = " << format_double(*s.max_step_s) << "\n";
  const char* fmt = s.events == EventFormat::Csv ? "csv" : s.events == EventFormat::Binary ? "binary" : "none";
  out << "events = " << fmt << "\n"
      << "provenance = " << (s.provenance ? "on" : "off") << "\n";
  if (!s.checks.empty()) {
    out << "checks = ";
    for (std::size_t i = 0; i < s.checks.size(); ++i) out << (i ? "," : "") << s.checks[i];
    out << "\n";
  }
  out << "\n" << bias::serialize_camera_config(s.camera) << "\n"
      << sim::serialize_noise_model(s.noise) << "\n"
      << control::serialize_controller_config(s.control, s.control_flags) << "\n";
  if (s.sweep) {
    out << "[sweep]\nparam = " << to_string(s.sweep->param) << "\ngrid = ";
    for (std::size_t i = 0; i < s.sweep->grid.size(); ++i) {
      out << (i ? "," : "") << format_double(s.sweep->grid[i]);
    }
    out << "\n";
    if (s.sweep->fit_min) out << "fit_min = " << format_double(*s.sweep->fit_min) << "\n";
    if (s.sweep->fit_max) out << "fit_max = " << format_double(*s.sweep->fit_max) << "\n";
    out << "\n";
  }
  out << stimulus::serialize_schedule(s.schedule);
  return out.str();
}

}  // namespace dvsbias::harness
