#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "dvsbias/errors.hpp"
#include "dvsbias/harness.hpp"

namespace dvsbias::harness {

namespace {

using Json = nlohmann::json;

std::string fmt(double v) {
  std::ostringstream o;
  o.precision(4);
  o << v;
  return o.str();
}

CheckResult verdict(std::string name, bool pass, std::string detail) {
  return {std::move(name), pass, std::move(detail)};
}

/// Earliest time a controller is on, or nullopt if it never is.
std::optional<double> enable_time(const Scenario& s, bool stimulus::ControlFlags::*flag,
                                  std::optional<bool> stimulus::Directive::*directive_flag) {
  if (s.control_flags.*flag) {
    bool overridden_at_zero = false;
    for (const auto& d : s.schedule.directives()) {
      if (d.t <= 0.0 && d.*directive_flag && !*(d.*directive_flag)) overridden_at_zero = true;
    }
    if (!overridden_at_zero) return 0.0;
  }
  for (const auto& d : s.schedule.directives()) {
    if (d.*directive_flag && *(d.*directive_flag)) return d.t;
  }
  return std::nullopt;
}

bool changes_scene(const stimulus::Directive& d) {
  return d.dot_count || d.dot_speed_hz || d.dot_contrast || d.ambient || d.dot_radius_px ||
         d.orbit_radius_px || d.profile;
}

/// Scene-constant intervals of the run that start at or after `from`.
std::vector<std::pair<double, double>> segments(const Scenario& s, double from) {
  std::vector<double> cuts{from};
  for (const auto& d : s.schedule.directives()) {
    if (d.t > from && d.t < s.duration_s && changes_scene(d)) cuts.push_back(d.t);
  }
  cuts.push_back(s.duration_s);
  std::vector<std::pair<double, double>> out;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) out.emplace_back(cuts[i], cuts[i + 1]);
  return out;
}

/// Telemetry rows whose whole window lies in [a, b].
std::vector<const TelemetryRow*> rows_in(const Scenario& s, const RunResult& r, double a,
                                         double b) {
  std::vector<const TelemetryRow*> out;
  for (const auto& row : r.telemetry) {
    if (row.sample.t - s.window_s >= a - 1e-9 && row.sample.t <= b + 1e-9) out.push_back(&row);
  }
  return out;
}

double peak_log_contrast(const Scenario& s) {
  double peak = 0.0;
  auto consider = [&](double t) {
    const auto scene = s.schedule.scene_at(t);
    if (scene.dot_count > 0) peak = std::max(peak, -std::log1p(-scene.dot_contrast));
  };
  consider(0.0);
  for (const auto& d : s.schedule.directives()) consider(d.t);
  return peak;
}

// Slope of y against log10(x) over the points with x in [lo, hi].
std::optional<double> log_slope(const std::vector<double>& x, const std::vector<double>& y,
                                double lo, double hi) {
  std::vector<double> lx;
  std::vector<double> ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] >= lo * (1 - 1e-9) && x[i] <= hi * (1 + 1e-9)) {
      lx.push_back(std::log10(x[i]));
      ly.push_back(y[i]);
    }
  }
  if (lx.size() < 2) return std::nullopt;
  return fit_line(lx, ly).slope;
}

const RunResult* nominal_run(const SweepResult& r) {
  const SweepPoint* best = nullptr;
  for (const auto& p : r.points) {
    if (!best || std::abs(p.value) < std::abs(best->value)) best = &p;
  }
  return best ? &best->run : nullptr;
}

}  // namespace

CheckResult check_sensitivity_linearity(const Scenario& s, const SweepResult& r) {
  const std::string name = "sensitivity_linearity";
  if (r.param != SweepParam::Threshold) return verdict(name, false, "not a threshold sweep");
  if (!r.fit) return verdict(name, false, "fewer than two points in the fit window");
  const double a = peak_log_contrast(s);
  if (!(a > 0.0)) return verdict(name, false, "scene has no contrast");
  const double expected = 1.0 / a;
  const auto& f = *r.fit;
  const double sigma_min = f.slope != 0.0 ? f.x_intercept() : std::nan("");
  const double err = std::abs(sigma_min - expected) / expected;
  const bool pass = f.r2 >= 0.98 && f.slope > 0.0 && err <= 0.10;
  return verdict(name, pass,
                 "R2=" + fmt(f.r2) + " slope=" + fmt(f.slope) + " Hz/(ev/e-fold) sigma_min=" +
                     fmt(sigma_min) + " expected=" + fmt(expected) + " err=" + fmt(100 * err) +
                     "% n=" + std::to_string(f.n));
}

CheckResult check_bandwidth_tradeoff(const Scenario&, const SweepResult& r) {
  const std::string name = "bandwidth_tradeoff";
  if (r.param != SweepParam::Bandwidth) return verdict(name, false, "not a bandwidth sweep");
  if (r.points.size() < 3) return verdict(name, false, "need at least three grid points");
  std::vector<double> b;
  std::vector<double> rs;
  std::vector<double> rn;
  std::vector<double> rsn;
  for (const auto& p : r.points) {
    b.push_back(p.params.bandwidth_hz);
    rs.push_back(p.r_signal_hz);
    rn.push_back(p.r_noise_hz);
    rsn.push_back(p.r_sn.value_or(-2.0));
  }
  bool rs_nondecreasing = true;
  bool rn_increasing = true;
  for (std::size_t i = 1; i < b.size(); ++i) {
    rs_nondecreasing &= rs[i] >= rs[i - 1];
    rn_increasing &= rn[i] > rn[i - 1];
  }
  const auto first = log_slope(b, rs, b.front(), b.front() * 10.0);
  const auto last = log_slope(b, rs, b.back() / 10.0, b.back());
  const bool saturates = first && last && *first > 0.0 && *last < 0.2 * *first;
  const auto peak = static_cast<std::size_t>(
      std::distance(rsn.begin(), std::max_element(rsn.begin(), rsn.end())));
  const bool interior = peak > 0 && peak + 1 < rsn.size();
  std::string detail = "R_S nondecreasing=" + std::string(rs_nondecreasing ? "yes" : "no") +
                       " first-decade slope=" + (first ? fmt(*first) : "n/a") +
                       " last-decade slope=" + (last ? fmt(*last) : "n/a") +
                       " R_N increasing=" + (rn_increasing ? "yes" : "no") +
                       " R_SN peak at B=" + fmt(b[peak]) + " Hz (index " +
                       std::to_string(peak) + " of " + std::to_string(b.size()) + ")";
  return verdict(name, rs_nondecreasing && saturates && rn_increasing && interior, detail);
}

CheckResult check_refractory_monotone(const Scenario&, const SweepResult& r) {
  const std::string name = "refractory_monotone";
  if (r.param != SweepParam::Refractory) return verdict(name, false, "not a refractory sweep");
  std::string detail = "R_I by dead time:";
  for (auto it = r.points.rbegin(); it != r.points.rend(); ++it) {
    detail += " " + fmt(it->params.refractory_s * 1e6) + "us:" + fmt(it->r_input_hz);
  }
  return verdict(name, r.rate_monotone, detail);
}

CheckResult check_rate_bounding(const Scenario& s, const RunResult& r) {
  const std::string name = "rate_bounding";
  const auto on = enable_time(s, &stimulus::ControlFlags::threshold,
                              &stimulus::Directive::threshold_control);
  if (!on) return verdict(name, false, "threshold control never enabled");
  const auto c = s.scaled_control();
  bool pass = true;
  bool saw_high = false;
  bool saw_low = false;
  std::ostringstream detail;
  detail << "band=[" << fmt(c.r_low) << "," << fmt(c.r_high) << "] Hz;";
  for (const auto& [a, b] : segments(s, *on)) {
    const auto rows = rows_in(s, r, a, b);
    if (rows.empty()) continue;
    const double start = rows.front()->sample.r_input_hz;
    saw_high |= start > c.r_high;
    saw_low |= start < c.r_low;
    const TelemetryRow* entry = nullptr;
    for (const auto* row : rows) {
      const double v = row->sample.r_input_hz;
      if (v >= c.r_low && v <= c.r_high) {
        entry = row;
        break;
      }
    }
    detail << " [" << fmt(a) << "," << fmt(b) << ") start=" << fmt(start);
    if (!entry) {
      pass = false;
      detail << " never in band;";
      continue;
    }
    const auto steps = std::count_if(r.actions.begin(), r.actions.end(), [&](const auto& act) {
      return act.target == control::Target::Threshold && act.t >= a && act.t <= entry->sample.t;
    });
    double lo = entry->sample.r_input_hz;
    double hi = lo;
    for (const auto* row : rows) {
      if (row->sample.t < entry->sample.t) continue;
      lo = std::min(lo, row->sample.r_input_hz);
      hi = std::max(hi, row->sample.r_input_hz);
    }
    const bool held = lo >= c.r_low / c.hysteresis && hi <= c.r_high * c.hysteresis;
    pass &= steps <= 30 && held;
    detail << " in band at t=" << fmt(entry->sample.t) << " after " << steps
           << " actions, then R in [" << fmt(lo) << "," << fmt(hi) << "];";
  }
  pass &= saw_high && saw_low;
  if (!saw_high || !saw_low) detail << " stimulus did not push R both above R_H and below R_L";
  return verdict(name, pass, detail.str());
}

CheckResult check_refractory_limiting(const Scenario& s, const RunResult& r) {
  const std::string name = "refractory_limiting";
  const auto on = enable_time(s, &stimulus::ControlFlags::refractory,
                              &stimulus::Directive::refractory_control);
  if (!on) return verdict(name, false, "refractory control never enabled");
  const auto c = s.scaled_control();
  // Samples the controller saw, starting with the first one closed after enabling.
  std::vector<const TelemetryRow*> rows;
  for (const auto& row : r.telemetry) {
    if (row.sample.t > *on + 1e-9) rows.push_back(&row);
  }
  if (rows.empty()) return verdict(name, false, "no samples after enabling control");
  const double initial = rows.front()->sample.r_input_hz;
  std::optional<double> below;
  for (const auto* row : rows) {
    if (row->sample.t <= *on + 5.0 + 1e-9 && row->sample.r_input_hz < c.r_high) {
      below = row->sample.t;
      break;
    }
  }
  // First slowdown of the stimulus after control is on.
  std::optional<double> slow;
  for (const auto& d : s.schedule.directives()) {
    if (d.t <= *on || !d.dot_speed_hz) continue;
    if (*d.dot_speed_hz < s.schedule.scene_at(d.t - 1e-9).dot_speed_hz) {
      slow = d.t;
      break;
    }
  }
  const bool lengthened = std::any_of(r.actions.begin(), r.actions.end(), [](const auto& a) {
    return a.target == control::Target::Refractory && a.delta < 0.0;
  });
  const bool recovered = std::abs(r.final_tweaks.refractory) < 1e-9;
  const bool pass = initial > c.r_high && below && slow && lengthened && recovered;
  std::ostringstream detail;
  detail << "R_H=" << fmt(c.r_high) << " Hz; R at enable=" << fmt(initial) << " Hz; below R_H "
         << (below ? "at t=" + fmt(*below) + " (" + fmt(*below - *on) + " s after enable)"
                   : std::string("not within 5 s"))
         << "; slowdown at " << (slow ? fmt(*slow) : std::string("none"))
         << "; final refractory_tweak=" << fmt(r.final_tweaks.refractory);
  return verdict(name, pass, detail.str());
}

CheckResult check_noise_regulation(const Scenario& s, const RunResult& r) {
  const std::string name = "noise_regulation";
  const auto c = s.scaled_control();
  std::optional<double> off;
  std::optional<double> on;
  for (const auto& d : s.schedule.directives()) {
    if (!d.ambient || d.t <= 0.0) continue;
    const double before = s.schedule.scene_at(d.t - 1e-9).ambient;
    if (!off && *d.ambient < before) {
      off = d.t;
    } else if (off && !on && *d.ambient > before) {
      on = d.t;
    }
  }
  if (!off || !on) return verdict(name, false, "scenario lacks a light-off then light-on step");
  const auto dark = rows_in(s, r, *off, *on);
  if (dark.empty()) return verdict(name, false, "no samples while the light is off");
  double peak = 0.0;
  for (const auto* row : dark) peak = std::max(peak, row->sample.r_noise_per_pixel_hz);
  std::optional<double> last_cut;
  int cuts = 0;
  for (const auto& a : r.actions) {
    if (a.target == control::Target::Bandwidth && a.delta < 0.0 && a.t >= *off && a.t < *on) {
      last_cut = a.t;
      ++cuts;
    }
  }
  bool exited = false;
  if (last_cut) {
    for (const auto* row : dark) {
      if (row->sample.t > *last_cut &&
          row->controller_states.find("noise=up") == std::string::npos) {
        exited = true;
      }
    }
  }
  const double settled = dark.back()->sample.r_noise_per_pixel_hz;
  const bool restored = std::abs(r.final_tweaks.bandwidth) <= c.delta_bb + 1e-9;
  const bool pass = peak > c.r_noise_limit && cuts > 0 && exited && settled < c.r_noise_limit &&
                    restored;
  std::ostringstream detail;
  detail << "dark peak R_N/px=" << fmt(peak) << " Hz; " << cuts << " bandwidth cuts; "
         << (exited ? "controller exited" : "controller still driving")
         << "; R_N/px before light-on=" << fmt(settled)
         << " Hz; final bandwidth_tweak=" << fmt(r.final_tweaks.bandwidth);
  return verdict(name, pass, detail.str());
}

CheckResult check_denoiser_quality(const Scenario&, const RunResult& r) {
  const std::string name = "denoiser_quality";
  const auto& sig = r.confusion[static_cast<int>(sim::Provenance::Signal)];
  const auto& noi = r.confusion[static_cast<int>(sim::Provenance::Noise)];
  if (sig[0] + sig[1] == 0 || noi[0] + noi[1] == 0) {
    return verdict(name, false, "need both signal and noise events");
  }
  const double recall = static_cast<double>(sig[0]) / static_cast<double>(sig[0] + sig[1]);
  const double rejection = static_cast<double>(noi[1]) / static_cast<double>(noi[0] + noi[1]);
  return verdict(name, recall >= 0.9 && rejection >= 0.9,
                 "signal recall=" + fmt(recall) + " noise rejection=" + fmt(rejection));
}

std::vector<CheckResult> evaluate_checks(const Scenario& s, const RunResult* run,
                                         const SweepResult* sw) {
  std::vector<CheckResult> out;
  for (const auto& name : s.checks) {
    const RunResult* target = run ? run : (sw ? nominal_run(*sw) : nullptr);
    if (name == "sensitivity_linearity" && sw) {
      out.push_back(check_sensitivity_linearity(s, *sw));
    } else if (name == "bandwidth_tradeoff" && sw) {
      out.push_back(check_bandwidth_tradeoff(s, *sw));
    } else if (name == "refractory_monotone" && sw) {
      out.push_back(check_refractory_monotone(s, *sw));
    } else if (name == "rate_bounding" && run) {
      out.push_back(check_rate_bounding(s, *run));
    } else if (name == "refractory_limiting" && run) {
      out.push_back(check_refractory_limiting(s, *run));
    } else if (name == "noise_regulation" && run) {
      out.push_back(check_noise_regulation(s, *run));
    } else if (name == "denoiser_quality" && target) {
      out.push_back(check_denoiser_quality(s, *target));
    } else {
      out.push_back(verdict(name, false, "unknown check or wrong run type"));
    }
  }
  return out;
}

namespace {

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream f(p);
  if (!f) throw ConfigError("cannot write " + p.string());
  f.precision(10);
  return f;
}

void write_telemetry(const std::vector<TelemetryRow>& rows, const std::filesystem::path& p) {
  auto f = open_out(p);
  f << "t_s,r_input_hz,r_signal_hz,r_noise_hz,r_noise_per_pixel_hz,r_sn,thr_tweak,bw_tweak,"
       "refr_tweak,controller_states\n";
  for (const auto& row : rows) {
    const auto& s = row.sample;
    f << s.t << ',' << s.r_input_hz << ',' << s.r_signal_hz << ',' << s.r_noise_hz << ','
      << s.r_noise_per_pixel_hz << ',';
    if (s.r_sn) f << *s.r_sn;
    f << ',' << row.tweaks.threshold << ',' << row.tweaks.bandwidth << ','
      << row.tweaks.refractory << ',' << row.controller_states << '\n';
  }
}

Json checks_json(const std::vector<CheckResult>& checks) {
  Json arr = Json::array();
  for (const auto& c : checks) arr.push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
  return arr;
}

bool all_pass(const std::vector<CheckResult>& checks) {
  return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.pass; });
}

Json run_summary(const RunResult& r) {
  const auto& sig = r.confusion[0];
  const auto& noi = r.confusion[1];
  return {{"seed", r.seed},
          {"duration_s", r.duration_s},
          {"wall_s", r.wall_s},
          {"dt_s", r.dt_s},
          {"windows", r.telemetry.size()},
          {"events",
           {{"signal", r.by_provenance[0]},
            {"noise", r.by_provenance[1]},
            {"transient", r.by_provenance[2]}}},
          {"denoiser",
           {{"signal_kept", sig[0]},
            {"signal_dropped", sig[1]},
            {"noise_kept", noi[0]},
            {"noise_dropped", noi[1]}}},
          {"actions", r.actions.size()},
          {"final_tweaks",
           {{"threshold", r.final_tweaks.threshold},
            {"bandwidth", r.final_tweaks.bandwidth},
            {"refractory", r.final_tweaks.refractory}}},
          {"warnings", r.warnings}};
}

}  // namespace

void write_run_outputs(const Scenario& s, const RunResult& r,
                       const std::vector<CheckResult>& checks, const std::filesystem::path& dir) {
  write_telemetry(r.telemetry, dir / "telemetry.csv");
  {
    auto f = open_out(dir / "actions.csv");
    f << "t_s,target,delta,resulting_tweak,trigger_rate\n";
    for (const auto& a : r.actions) {
      f << a.t << ',' << control::to_string(a.target) << ',' << a.delta << ','
        << a.resulting_tweak << ',' << a.trigger_rate << '\n';
    }
  }
  Json report = run_summary(r);
  report["scenario"] = s.name;
  report["kind"] = "run";
  report["rate_scale"] = s.effective_rate_scale();
  report["checks"] = checks_json(checks);
  report["pass"] = all_pass(checks);
  open_out(dir / "report.json") << report.dump(2) << '\n';
}

void write_sweep_outputs(const Scenario& s, const SweepResult& r,
                         const std::vector<CheckResult>& checks, const std::filesystem::path& dir) {
  {
    auto f = open_out(dir / "sweep.csv");
    f << "tweak,sensitivity,theta_on,bandwidth_hz,refractory_s,r_input_hz,r_signal_hz,"
         "r_noise_hz,r_noise_per_pixel_hz,r_sn,samples\n";
    for (const auto& p : r.points) {
      f << p.value << ',' << p.params.sensitivity << ',' << p.params.theta_on << ','
        << p.params.bandwidth_hz << ',' << p.params.refractory_s << ',' << p.r_input_hz << ','
        << p.r_signal_hz << ',' << p.r_noise_hz << ',' << p.r_noise_per_pixel_hz << ',';
      if (p.r_sn) f << *p.r_sn;
      f << ',' << p.samples << '\n';
    }
  }
  Json points = Json::array();
  for (std::size_t i = 0; i < r.points.size(); ++i) {
    const auto& p = r.points[i];
    const auto file = "telemetry_" + std::to_string(i) + ".csv";
    write_telemetry(p.run.telemetry, dir / file);
    Json j = run_summary(p.run);
    j["tweak"] = p.value;
    j["quantity"] = swept_quantity(r.param, p.params);
    j["r_input_hz"] = p.r_input_hz;
    j["r_signal_hz"] = p.r_signal_hz;
    j["r_noise_hz"] = p.r_noise_hz;
    j["r_sn"] = p.r_sn ? Json(*p.r_sn) : Json(nullptr);
    j["telemetry"] = file;
    points.push_back(std::move(j));
  }
  Json report{{"scenario", s.name},
              {"kind", "sweep"},
              {"param", std::string(to_string(r.param))},
              {"rate_scale", s.effective_rate_scale()},
              {"rate_monotone", r.rate_monotone},
              {"points", std::move(points)},
              {"checks", checks_json(checks)},
              {"pass", all_pass(checks)}};
  if (r.fit) {
    report["fit"] = {{"slope", r.fit->slope},
                     {"intercept", r.fit->intercept},
                     {"r2", r.fit->r2},
                     {"n", r.fit->n},
                     {"x_intercept", r.fit->x_intercept()}};
  }
  open_out(dir / "report.json") << report.dump(2) << '\n';
}

}  // namespace dvsbias::harness
