#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <memory>

#include "dvsbias/errors.hpp"
#include "dvsbias/event_io.hpp"
#include "dvsbias/harness.hpp"

namespace dvsbias::harness {

namespace {

double& tweak_of(bias::TweakSet& t, SweepParam p) {
  switch (p) {
    case SweepParam::Threshold: return t.threshold;
    case SweepParam::Bandwidth: return t.bandwidth;
    case SweepParam::Refractory: return t.refractory;
  }
  return t.threshold;
}

// Applies the tweak overrides of one directive; returns whether any applied.
bool apply_overrides(const stimulus::Directive& d, bias::TweakSet& t,
                     const std::optional<std::pair<SweepParam, double>>& pinned) {
  bool any = false;
  auto set = [&](const std::optional<double>& v, SweepParam p) {
    if (!v || (pinned && pinned->first == p)) return;
    tweak_of(t, p) = *v;
    any = true;
  };
  set(d.threshold_tweak, SweepParam::Threshold);
  set(d.bandwidth_tweak, SweepParam::Bandwidth);
  set(d.refractory_tweak, SweepParam::Refractory);
  return any;
}

class EventSink {
 public:
  EventSink(const Scenario& s, const std::filesystem::path& dir) : provenance_(s.provenance) {
    if (dir.empty() || s.events == EventFormat::None) return;
    if (s.events == EventFormat::Csv) {
      file_.open(dir / "events.csv");
      if (!file_) throw ConfigError("cannot write " + (dir / "events.csv").string());
      csv_ = std::make_unique<io::CsvEventWriter>(file_, provenance_);
    } else {
      file_.open(dir / "events.bin", std::ios::binary);
      if (!file_) throw ConfigError("cannot write " + (dir / "events.bin").string());
      bin_ = std::make_unique<io::BinaryEventWriter>(file_);
    }
  }

  void write(std::vector<sim::Event>& events) {
    if (csv_) {
      csv_->write(events);
    } else if (bin_) {
      if (!provenance_) {
        for (auto& e : events) e.provenance = sim::Provenance::Signal;
      }
      bin_->write(events);
    }
  }

 private:
  bool provenance_;
  std::ofstream file_;
  std::unique_ptr<io::CsvEventWriter> csv_;
  std::unique_ptr<io::BinaryEventWriter> bin_;
};

}  // namespace

double choose_step(const Scenario& s, double max_bandwidth_tweak) {
  const auto op = bias::operating_point({0.0, max_bandwidth_tweak, 0.0}, s.camera);
  double dt_max = s.window_s / 10.0;
  if (std::isfinite(op.params.bandwidth_hz)) {
    dt_max = std::min(dt_max, 1.0 / (4.0 * op.params.bandwidth_hz));
  }
  if (s.max_step_s) dt_max = std::min(dt_max, *s.max_step_s);
  const double n = std::ceil(s.window_s / dt_max - 1e-9);
  return s.window_s / n;
}

RunResult run(const Scenario& s, const RunOptions& opt) {
  const auto wall_start = std::chrono::steady_clock::now();
  RunResult res;
  res.name = s.name;
  res.seed = opt.seed.value_or(s.seed);
  res.duration_s = s.duration_s;

  // Fastest photoreceptor the run can reach: the nominal point, any
  // scheduled override, the pinned value and the caller's ceiling. Control
  // only ever narrows the bandwidth below that.
  double bw_ceiling = 0.0;
  for (const auto& d : s.schedule.directives()) {
    if (d.bandwidth_tweak) bw_ceiling = std::max(bw_ceiling, std::min(*d.bandwidth_tweak, 1.0));
  }
  if (opt.pinned && opt.pinned->first == SweepParam::Bandwidth) {
    bw_ceiling = std::max(bw_ceiling, opt.pinned->second);
  }
  if (opt.bandwidth_tweak_ceiling) bw_ceiling = std::max(bw_ceiling, *opt.bandwidth_tweak_ceiling);
  const double dt = choose_step(s, bw_ceiling);
  res.dt_s = dt;

  const auto geometry = s.geometry;
  const auto& directives = s.schedule.directives();
  std::size_t next_directive = 0;

  bias::TweakSet tweaks;
  if (opt.pinned) tweak_of(tweaks, opt.pinned->first) = opt.pinned->second;
  while (next_directive < directives.size() && directives[next_directive].t <= 0.0) {
    apply_overrides(directives[next_directive++], tweaks, opt.pinned);
  }
  auto op = bias::operating_point(tweaks, s.camera);
  if (op.clamped) res.warnings.push_back("bias tweak or current clamped to its range at t=0");
  tweaks = op.tweaks;

  // [control] enable flags hold until a directive changes them.
  auto flags_at = [&](double t) {
    stimulus::ControlFlags f = s.control_flags;
    if (opt.pinned) return stimulus::ControlFlags{};
    for (const auto& d : directives) {
      if (d.t > t + 1e-9) break;
      if (d.threshold_control) f.threshold = *d.threshold_control;
      if (d.refractory_control) f.refractory = *d.refractory_control;
      if (d.noise_control) f.noise = *d.noise_control;
    }
    return f;
  };

  control::Supervisor supervisor(s.scaled_control(), flags_at(0.0));
  bool warned = false;
  auto note_flags = [&] {
    if (supervisor.interaction_warning() && !warned) {
      res.warnings.push_back("threshold and noise control enabled together");
      warned = true;
    }
  };
  note_flags();

  sim::Simulator simulator(geometry, s.noise_model(), op.params, res.seed, opt.kernel);
  std::vector<double> field(geometry.pixels());
  stimulus::render_log(s.schedule, 0.0, geometry, field);
  simulator.initialize(field, 0.0);

  meter::BackgroundActivityFilter baf(geometry.width, geometry.height, s.correlation_time_s);
  meter::RateMeter meter(s.window_s, geometry.pixels());
  EventSink sink(s, opt.out_dir);

  const auto n_steps = static_cast<long long>(std::floor(s.duration_s / dt + 1e-6));
  for (long long k = 0; k < n_steps; ++k) {
    const double t0 = static_cast<double>(k) * dt;
    const double t1 = static_cast<double>(k + 1) * dt;

    bool manual = false;
    bool flag_change = false;
    while (next_directive < directives.size() && directives[next_directive].t <= t0 + 1e-9) {
      const auto& d = directives[next_directive++];
      manual |= apply_overrides(d, tweaks, opt.pinned);
      flag_change |= d.threshold_control || d.refractory_control || d.noise_control;
    }
    if (flag_change) {
      supervisor.set_enabled(flags_at(t0));
      note_flags();
    }
    if (manual) {
      op = bias::operating_point(tweaks, s.camera);
      if (op.clamped) res.warnings.push_back("bias tweak or current clamped to its range");
      tweaks = op.tweaks;
      simulator.apply_biases(op.params, t0);
      supervisor.blank(t0);
    }

    stimulus::render_log(s.schedule, t1, geometry, field);
    auto events = simulator.step(field, dt);
    for (const auto& e : events) {
      const auto label = baf.classify(e);
      meter.add(e.t_us, label);
      ++res.by_provenance[static_cast<int>(e.provenance)];
      ++res.confusion[static_cast<int>(e.provenance)][label == meter::Label::Signal ? 0 : 1];
      if (opt.keep_events) res.labels.push_back(label);
    }
    meter.advance_to(static_cast<std::int64_t>(std::floor(t1 * 1e6 + 1e-6)));
    sink.write(events);
    if (opt.keep_events) res.events.insert(res.events.end(), events.begin(), events.end());

    for (const auto& sample : meter.drain()) {
      TelemetryRow row{sample, tweaks, {}};
      const auto actions = supervisor.step(sample, tweaks);
      row.controller_states = supervisor.describe();
      res.telemetry.push_back(std::move(row));
      if (!actions.empty()) {
        op = bias::operating_point(tweaks, s.camera);
        simulator.apply_biases(op.params, sample.t);
        res.actions.insert(res.actions.end(), actions.begin(), actions.end());
      }
    }
  }
  res.final_tweaks = tweaks;
  res.wall_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
  return res;
}

double swept_quantity(SweepParam p, const bias::PixelParams& params) {
  switch (p) {
    case SweepParam::Threshold: return params.sensitivity;
    case SweepParam::Bandwidth: return params.bandwidth_hz;
    case SweepParam::Refractory: return params.refractory_s;
  }
  return 0.0;
}

LinearFit fit_line(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw ConfigError("fit needs two or more points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0;
  double sxy = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) throw ConfigError("fit needs two distinct x values");
  LinearFit f;
  f.n = x.size();
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return f;
}

SweepResult sweep(const Scenario& s, SweepParam param, std::span<const double> grid,
                  const RunOptions& options) {
  if (grid.empty()) throw ConfigError("sweep grid is empty");
  for (double v : grid) {
    if (!(v >= -1.0 && v <= 1.0)) throw ConfigError("sweep grid values must be in [-1, 1]");
  }
  SweepResult out;
  out.name = s.name;
  out.param = param;

  std::vector<double> values(grid.begin(), grid.end());
  std::sort(values.begin(), values.end());
  const double ceiling = param == SweepParam::Bandwidth ? values.back() : 0.0;
  const double settle = s.control.t_ignore;

  for (double v : values) {
    RunOptions o = options;
    o.out_dir.clear();
    o.pinned = std::make_pair(param, v);
    o.bandwidth_tweak_ceiling = std::max(ceiling, options.bandwidth_tweak_ceiling.value_or(0.0));
    SweepPoint p;
    p.value = v;
    p.run = run(s, o);
    bias::TweakSet t;
    tweak_of(t, param) = v;
    p.params = bias::operating_point(t, s.camera).params;

    std::uint64_t n_signal = 0;
    std::uint64_t n_noise = 0;
    for (const auto& row : p.run.telemetry) {
      if (row.sample.t - s.window_s < settle - 1e-9) continue;
      n_signal += row.sample.n_signal;
      n_noise += row.sample.n_noise;
      ++p.samples;
    }
    if (p.samples > 0) {
      const auto avg = meter::make_sample(0.0, s.window_s * static_cast<double>(p.samples),
                                          n_signal, n_noise, s.geometry.pixels());
      p.r_input_hz = avg.r_input_hz;
      p.r_signal_hz = avg.r_signal_hz;
      p.r_noise_hz = avg.r_noise_hz;
      p.r_noise_per_pixel_hz = avg.r_noise_per_pixel_hz;
      p.r_sn = avg.r_sn;
    }
    out.points.push_back(std::move(p));
  }

  // Threshold: rate falls as the tweak rises. Bandwidth, refractory: rises.
  const double dir = param == SweepParam::Threshold ? -1.0 : 1.0;
  out.rate_monotone = true;
  for (std::size_t i = 1; i < out.points.size(); ++i) {
    if (dir * (out.points[i].r_input_hz - out.points[i - 1].r_input_hz) < 0.0) {
      out.rate_monotone = false;
    }
  }

  std::vector<double> x;
  std::vector<double> y;
  const auto* spec = s.sweep && s.sweep->param == param ? &*s.sweep : nullptr;
  for (const auto& p : out.points) {
    const double q = swept_quantity(param, p.params);
    if (spec && spec->fit_min && q < *spec->fit_min) continue;
    if (spec && spec->fit_max && q > *spec->fit_max) continue;
    x.push_back(q);
    y.push_back(p.r_input_hz);
  }
  if (x.size() >= 2 && std::adjacent_find(x.begin(), x.end(), std::not_equal_to<>()) != x.end()) {
    out.fit = fit_line(x, y);
  }
  return out;
}

}  // namespace dvsbias::harness
