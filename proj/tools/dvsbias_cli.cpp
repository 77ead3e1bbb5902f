// dvsbias: run bundled or custom bias-control experiments.
//
//   dvsbias run scenarios/rate_bounding.scn --seed 3 --out /tmp/rb
//   dvsbias sweep scenarios/threshold_sweep.scn --param threshold --grid -0.5,0,0.5
//   dvsbias validate scenarios/noise_regulation.scn
//
// Output goes to --out, else $DVSBIAS_OUT/<scenario name>, else
// ./runs/<scenario name>.
//
// Exit status: 0 all checks passed, 1 a check failed, 2 bad input,
// 3 simulation fault.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "dvsbias/errors.hpp"
#include "dvsbias/harness.hpp"

namespace fs = std::filesystem;
using namespace dvsbias;

namespace {

constexpr int kCheckFailed = 1;
constexpr int kBadInput = 2;
constexpr int kFault = 3;

fs::path output_dir(const std::string& out, const harness::Scenario& s) {
  fs::path dir;
  if (!out.empty()) {
    dir = out;
  } else if (const char* root = std::getenv("DVSBIAS_OUT"); root && *root) {
    dir = fs::path(root) / s.name;
  } else {
    dir = fs::path("runs") / s.name;
  }
  fs::create_directories(dir);
  return dir;
}

int report(const std::vector<harness::CheckResult>& checks) {
  bool ok = true;
  for (const auto& c : checks) {
    std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << ": " << c.detail << "\n";
    ok &= c.pass;
  }
  return ok ? 0 : kCheckFailed;
}

int do_sweep(const harness::Scenario& s, harness::SweepParam param,
             const std::vector<double>& grid, harness::RunOptions opt) {
  auto r = harness::sweep(s, param, grid, opt);
  const auto checks = harness::evaluate_checks(s, nullptr, &r);
  harness::write_sweep_outputs(s, r, checks, opt.out_dir);
  std::cout << "sweep " << s.name << " (" << harness::to_string(param) << ", " << r.points.size()
            << " points) -> " << opt.out_dir.string() << "\n";
  for (const auto& p : r.points) {
    std::cout << "  tweak=" << p.value << " quantity=" << harness::swept_quantity(param, p.params)
              << " R_I=" << p.r_input_hz << " R_S=" << p.r_signal_hz << " R_N=" << p.r_noise_hz
              << "\n";
  }
  return report(checks);
}

int do_run(const harness::Scenario& s, harness::RunOptions opt) {
  if (s.sweep) return do_sweep(s, s.sweep->param, s.sweep->grid, std::move(opt));
  const auto r = harness::run(s, opt);
  const auto checks = harness::evaluate_checks(s, &r, nullptr);
  harness::write_run_outputs(s, r, checks, opt.out_dir);
  std::cout << "run " << s.name << ": " << r.telemetry.size() << " windows, " << r.actions.size()
            << " actions, " << r.wall_s << " s wall -> " << opt.out_dir.string() << "\n";
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
  return report(checks);
}

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> grid;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::size_t used = 0;
    const double v = std::stod(item, &used);
    if (used != item.size()) throw ConfigError("bad grid value '" + item + "'");
    grid.push_back(v);
  }
  if (grid.empty()) throw ConfigError("empty grid");
  return grid;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Event-camera bias control simulator"};
  app.require_subcommand(1);

  std::string scenario_path;
  std::string out;
  std::uint64_t seed = 0;
  std::string param;
  std::string grid;

  auto* run_cmd = app.add_subcommand("run", "run a scenario closed-loop (or its [sweep])");
  run_cmd->add_option("scenario", scenario_path, "scenario file")->required()->check(CLI::ExistingFile);
  auto* run_seed = run_cmd->add_option("--seed", seed, "override the scenario seed");
  run_cmd->add_option("--out", out, "output directory");

  auto* sweep_cmd = app.add_subcommand("sweep", "open-loop sweep of one tweak");
  sweep_cmd->add_option("scenario", scenario_path, "scenario file")->required()->check(CLI::ExistingFile);
  sweep_cmd->add_option("--param", param, "threshold|bandwidth|refractory")
      ->required()
      ->check(CLI::IsMember({"threshold", "bandwidth", "refractory"}));
  sweep_cmd->add_option("--grid", grid, "comma-separated tweak values in [-1,1]")->required();
  auto* sweep_seed = sweep_cmd->add_option("--seed", seed, "override the scenario seed");
  sweep_cmd->add_option("--out", out, "output directory");

  auto* validate_cmd = app.add_subcommand("validate", "parse and check a scenario, then print it");
  validate_cmd->add_option("scenario", scenario_path, "scenario file")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    const auto s = harness::load_scenario(scenario_path);
    if (*validate_cmd) {
      std::cout << harness::serialize_scenario(s);
      return 0;
    }
    harness::RunOptions opt;
    if (run_seed->count() > 0 || sweep_seed->count() > 0) opt.seed = seed;
    opt.out_dir = output_dir(out, s);
    if (*run_cmd) return do_run(s, opt);
    return do_sweep(s, harness::parse_sweep_param(param), parse_grid(grid), opt);
  } catch (const SimulationFault& e) {
    std::cerr << "simulation fault: " << e.what() << "\n";
    return kFault;
  } catch (const ParseError& e) {
    std::cerr << scenario_path << ":" << e.line() << ": " << e.what() << "\n";
    return kBadInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kBadInput;
  }
}
