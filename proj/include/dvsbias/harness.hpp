#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dvsbias/bias_model.hpp"
#include "dvsbias/control.hpp"
#include "dvsbias/metering.hpp"
#include "dvsbias/pixel_sim.hpp"
#include "dvsbias/stimulus.hpp"

namespace dvsbias::harness {

/// Pixel count of the reference sensor whose absolute rate bounds the
/// [control] block is written in.
inline constexpr double kReferencePixels = 346.0 * 260.0;

enum class SweepParam { Threshold, Bandwidth, Refractory };

std::string_view to_string(SweepParam p);
/// Throws ConfigError for anything but threshold|bandwidth|refractory.
SweepParam parse_sweep_param(std::string_view s);

struct SweepSpec {
  SweepParam param = SweepParam::Threshold;
  std::vector<double> grid;
  // Optional fit window on the swept physical quantity (sensitivity for
  // threshold sweeps, Hz for bandwidth, seconds for refractory).
  std::optional<double> fit_min;
  std::optional<double> fit_max;
};

enum class EventFormat { Csv, Binary, None };

struct Scenario {
  std::string name = "unnamed";
  double duration_s = 30.0;
  stimulus::Geometry geometry{};
  double window_s = 0.3;
  std::uint64_t seed = 1;
  std::optional<double> rate_scale;  // default: pixels / reference pixels
  double correlation_time_s = 0.01;
  std::optional<double> max_step_s;
  EventFormat events = EventFormat::Csv;
  bool provenance = true;
  std::vector<std::string> checks;

  bias::CameraConfig camera{};
  sim::NoiseModel noise{};
  control::ControllerConfig control{};  // rate bounds at reference scale
  stimulus::ControlFlags control_flags{};
  stimulus::ScenarioSchedule schedule{};
  std::optional<SweepSpec> sweep;

  double effective_rate_scale() const;
  /// Controller config with R_H and R_L rescaled to this array size.
  control::ControllerConfig scaled_control() const;
  /// Noise model with its reference point tied to the camera's nominal
  /// operating point.
  sim::NoiseModel noise_model() const;
};

/// Throws ParseError / ValidationError / ConfigError.
Scenario parse_scenario(std::string_view text);
Scenario load_scenario(const std::filesystem::path& path);
std::string serialize_scenario(const Scenario& s);

struct TelemetryRow {
  meter::RateSample sample;
  bias::TweakSet tweaks;  // in force during the window
  std::string controller_states;
};

struct RunOptions {
  std::optional<std::uint64_t> seed;
  std::filesystem::path out_dir;  // empty: write nothing
  sim::Kernel kernel = sim::Kernel::Parallel;
  bool keep_events = false;
  /// Forces a tweak value for the whole run and disables every controller.
  std::optional<std::pair<SweepParam, double>> pinned;
  /// Largest bandwidth tweak the step size must resolve, beyond the
  /// scenario's own.
  std::optional<double> bandwidth_tweak_ceiling;
};

struct RunResult {
  std::string name;
  std::uint64_t seed = 0;
  double duration_s = 0.0;
  double wall_s = 0.0;
  double dt_s = 0.0;
  std::vector<TelemetryRow> telemetry;
  std::vector<control::ControlAction> actions;
  std::vector<sim::Event> events;  // only with keep_events
  std::vector<meter::Label> labels;
  std::array<std::uint64_t, 3> by_provenance{};
  // [provenance][label] with label 0 = signal, 1 = noise.
  std::array<std::array<std::uint64_t, 2>, 3> confusion{};
  bias::TweakSet final_tweaks;
  std::vector<std::string> warnings;
};

/// Closed-loop run. Throws SimulationFault on numeric failure.
RunResult run(const Scenario& scenario, const RunOptions& options = {});

/// Step size used for a scenario: a whole fraction of the window, no larger
/// than a quarter period of the fastest photoreceptor the run can reach or a
/// tenth of the window.
double choose_step(const Scenario& scenario, double max_bandwidth_tweak);

struct SweepPoint {
  double value = 0.0;  // tweak
  bias::PixelParams params;
  double r_input_hz = 0.0;
  double r_signal_hz = 0.0;
  double r_noise_hz = 0.0;
  double r_noise_per_pixel_hz = 0.0;
  std::optional<double> r_sn;
  std::size_t samples = 0;
  RunResult run;
};

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  std::size_t n = 0;
  /// Where the line crosses zero.
  double x_intercept() const { return -intercept / slope; }
};

/// Ordinary least squares. Needs at least two distinct x values.
LinearFit fit_line(std::span<const double> x, std::span<const double> y);

struct SweepResult {
  std::string name;
  SweepParam param = SweepParam::Threshold;
  std::vector<SweepPoint> points;
  std::optional<LinearFit> fit;  // rate versus swept quantity, fit window only
  bool rate_monotone = false;    // in the direction the model predicts
};

/// Open-loop sweep: one fresh run per grid value with controllers off.
/// Steady state averages samples after the first t_ignore seconds.
SweepResult sweep(const Scenario& scenario, SweepParam param, std::span<const double> grid,
                  const RunOptions& options = {});

/// Physical quantity a sweep is plotted against.
double swept_quantity(SweepParam p, const bias::PixelParams& params);

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

/// Named scenario checks. Unknown names yield a failing result.
std::vector<CheckResult> evaluate_checks(const Scenario& scenario, const RunResult* run,
                                         const SweepResult* sweep);

// Individual checks, also used directly by the acceptance suite.
CheckResult check_sensitivity_linearity(const Scenario& s, const SweepResult& r);
CheckResult check_bandwidth_tradeoff(const Scenario& s, const SweepResult& r);
CheckResult check_refractory_monotone(const Scenario& s, const SweepResult& r);
CheckResult check_rate_bounding(const Scenario& s, const RunResult& r);
CheckResult check_refractory_limiting(const Scenario& s, const RunResult& r);
CheckResult check_noise_regulation(const Scenario& s, const RunResult& r);
CheckResult check_denoiser_quality(const Scenario& s, const RunResult& r);

/// Writes telemetry.csv, actions.csv (and sweep.csv) plus report.json.
void write_run_outputs(const Scenario& s, const RunResult& r,
                       const std::vector<CheckResult>& checks, const std::filesystem::path& dir);
void write_sweep_outputs(const Scenario& s, const SweepResult& r,
                         const std::vector<CheckResult>& checks, const std::filesystem::path& dir);

}  // namespace dvsbias::harness
