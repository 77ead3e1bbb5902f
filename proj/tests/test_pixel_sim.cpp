#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>

#include <doctest.h>

#include "dvsbias/bias_model.hpp"
#include "dvsbias/errors.hpp"
#include "dvsbias/pixel_sim.hpp"
#include "dvsbias/stimulus.hpp"

using namespace dvsbias;
using namespace dvsbias::sim;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

PixelParams ideal(double theta, double refractory_s = 0.0, double bw = kInf) {
  return {theta, -theta, 1.0 / theta, bw, refractory_s};
}

NoiseModel quiet() {
  NoiseModel m;
  m.base_rate_hz = 0.0;
  m.burst_gain = 0.0;
  return m;
}

// Single pixel whose log intensity ramps at `slope` e-folds per second.
std::vector<Event> ramp(double slope, PixelParams p, double duration, double dt) {
  Simulator sim({1, 1}, quiet(), p, 1, Kernel::Serial);
  std::vector<double> field{0.0};
  sim.initialize(field);
  std::vector<Event> all;
  const auto steps = static_cast<long>(std::llround(duration / dt));
  for (long k = 1; k <= steps; ++k) {
    field[0] = slope * dt * static_cast<double>(k);
    auto ev = sim.step(field, dt);
    all.insert(all.end(), ev.begin(), ev.end());
  }
  return all;
}

struct DotRun {
  std::vector<Event> events;
  std::vector<PixelState> state;
};

DotRun dot_run(PixelParams p, NoiseModel noise, std::uint64_t seed, Kernel kernel,
               double duration = 0.5, double ambient = 1.0, bool bias_change = false) {
  const stimulus::Geometry g{32, 32};
  const auto schedule = stimulus::parse_schedule(
      "t=0 dot_count=2 dot_contrast=0.6 dot_radius_px=4 orbit_radius_px=9 dot_speed_hz=3 ambient=" +
      std::to_string(ambient) + "\n");
  const double dt = 1.0 / (4.0 * std::max(p.bandwidth_hz, 2000.0));
  Simulator sim(g, noise, p, seed, kernel);
  std::vector<double> field(g.pixels());
  stimulus::render_log(schedule, 0.0, g, field);
  sim.initialize(field);
  DotRun out;
  const auto steps = static_cast<long>(duration / dt);
  for (long k = 1; k <= steps; ++k) {
    if (bias_change && k == steps / 2) {
      auto q = p;
      q.theta_on *= 1.2;
      q.theta_off *= 1.2;
      sim.apply_biases(q, sim.now());
    }
    stimulus::render_log(schedule, dt * static_cast<double>(k), g, field);
    auto ev = sim.step(field, dt);
    out.events.insert(out.events.end(), ev.begin(), ev.end());
  }
  out.state = sim.state();
  return out;
}

std::size_t count_provenance(const std::vector<Event>& ev, Provenance p) {
  return static_cast<std::size_t>(
      std::count_if(ev.begin(), ev.end(), [p](const Event& e) { return e.provenance == p; }));
}

}  // namespace

TEST_SUITE("pixel_sim") {

TEST_CASE("static field without noise is silent") {
  Simulator sim({16, 16}, quiet(), ideal(0.2, 1e-5, 300.0), 4);
  std::vector<double> field(256, 0.3);
  sim.initialize(field);
  for (int k = 0; k < 2000; ++k) CHECK(sim.step(field, 5e-4).empty());
}

TEST_CASE("a step of exactly three thresholds gives three ON events") {
  const double theta = 0.25;
  Simulator sim({1, 1}, quiet(), ideal(theta), 1, Kernel::Serial);
  std::vector<double> field{0.0};
  sim.initialize(field);
  field[0] = 3.0 * theta;
  const auto ev = sim.step(field, 1e-4);
  REQUIRE(ev.size() == 3);
  for (const auto& e : ev) CHECK(e.polarity == Polarity::On);
  CHECK(sim.step(field, 1e-4).empty());

  field[0] = 0.0;
  const auto back = sim.step(field, 1e-4);
  CHECK(back.size() == 3);
  for (const auto& e : back) CHECK(e.polarity == Polarity::Off);
}

TEST_CASE("dead time stretches the inter-event interval") {
  // 10 kHz instantaneous rate with 50 us dead time.
  const double theta = 0.1;
  const auto ev = ramp(theta * 10e3, ideal(theta, 50e-6), 1.0, 5e-6);
  const double rate = static_cast<double>(ev.size());
  CHECK(rate == doctest::Approx(1.0 / (1.0 / 10e3 + 50e-6)).epsilon(0.02));
  CHECK(rate == doctest::Approx(6667.0).epsilon(0.02));
}

TEST_CASE("release on a step boundary does not fire early") {
  // Event times land on the step grid; late in the run the clock and the
  // release time differ by rounding only.
  const auto ev = ramp(0.1 * 10e3, ideal(0.1, 200e-6), 10.0, 5e-6);
  CHECK(static_cast<double>(ev.size()) / 10.0 == doctest::Approx(1.0 / 300e-6).epsilon(0.001));
  for (std::size_t i = 1; i < ev.size(); ++i) CHECK(ev[i].t_us - ev[i - 1].t_us >= 299);
}

TEST_CASE("signal events respect the per-pixel dead time") {
  const double refr = 300e-6;
  const auto run = dot_run(ideal(0.15, refr, 800.0), quiet(), 3, Kernel::Parallel);
  REQUIRE(run.events.size() > 100);
  std::map<std::pair<int, int>, std::int64_t> last;
  for (const auto& e : run.events) {
    const auto key = std::make_pair<int, int>(e.x, e.y);
    if (auto it = last.find(key); it != last.end()) {
      // One microsecond of slack for timestamp flooring.
      CHECK(e.t_us - it->second >= static_cast<std::int64_t>(refr * 1e6) - 1);
    }
    last[key] = e.t_us;
  }
}

TEST_CASE("events come out ordered and each carries one provenance") {
  NoiseModel noise;
  noise.base_rate_hz = 5.0;
  const auto run = dot_run(ideal(0.2, 1e-5, 500.0), noise, 9, Kernel::Parallel, 0.5, 1.0, true);
  REQUIRE(run.events.size() > 100);
  CHECK(std::is_sorted(run.events.begin(), run.events.end(), event_order));
  for (std::size_t i = 1; i < run.events.size(); ++i) {
    CHECK(run.events[i - 1].t_us <= run.events[i].t_us);
  }
  const auto s = count_provenance(run.events, Provenance::Signal);
  const auto n = count_provenance(run.events, Provenance::Noise);
  const auto b = count_provenance(run.events, Provenance::Transient);
  CHECK(s > 0);
  CHECK(n > 0);
  CHECK(b > 0);
  CHECK(s + n + b == run.events.size());
}

TEST_CASE("identical inputs give identical streams") {
  NoiseModel noise;
  noise.base_rate_hz = 2.0;
  for (std::uint64_t seed : {1ULL, 77ULL, 123456789ULL}) {
    const auto a = dot_run(ideal(0.2, 1e-5, 500.0), noise, seed, Kernel::Parallel, 0.3, 1.0, true);
    const auto b = dot_run(ideal(0.2, 1e-5, 500.0), noise, seed, Kernel::Parallel, 0.3, 1.0, true);
    CHECK(a.events == b.events);
  }
  const auto a = dot_run(ideal(0.2, 1e-5, 500.0), noise, 1, Kernel::Parallel, 0.3);
  const auto c = dot_run(ideal(0.2, 1e-5, 500.0), noise, 2, Kernel::Parallel, 0.3);
  CHECK(a.events != c.events);
}

TEST_CASE("serial and parallel kernels agree") {
  NoiseModel noise;
  noise.base_rate_hz = 1.0;
  const auto a = dot_run(ideal(0.18, 2e-5, 400.0), noise, 5, Kernel::Serial, 0.4);
  const auto b = dot_run(ideal(0.18, 2e-5, 400.0), noise, 5, Kernel::Parallel, 0.4);
  CHECK(a.events == b.events);
  REQUIRE(a.state.size() == b.state.size());
  for (std::size_t i = 0; i < a.state.size(); ++i) {
    CHECK(a.state[i].lp2 == b.state[i].lp2);
    CHECK(a.state[i].memorized == b.state[i].memorized);
  }
}

TEST_CASE("signal count falls as the threshold rises") {
  std::size_t previous = std::numeric_limits<std::size_t>::max();
  for (double t : {-1.0, -0.5, 0.0, 0.5, 1.0}) {
    const auto op = bias::operating_point({t, 0.0, 0.0}, {});
    const auto run = dot_run(op.params, quiet(), 1, Kernel::Parallel, 0.3);
    const auto n = count_provenance(run.events, Provenance::Signal);
    CHECK(n <= previous);
    previous = n;
  }
}

TEST_CASE("event count falls as the dead time grows") {
  std::size_t previous = std::numeric_limits<std::size_t>::max();
  for (double refr : {0.0, 1e-5, 1e-4, 1e-3, 1e-2}) {
    const auto run = dot_run(ideal(0.1, refr, 2000.0), quiet(), 1, Kernel::Parallel, 0.3);
    CHECK(run.events.size() <= previous);
    previous = run.events.size();
  }
}

TEST_CASE("noise grows with bandwidth and darkness") {
  NoiseModel noise;
  noise.base_rate_hz = 2.0;
  noise.burst_gain = 0.0;
  auto noise_count = [&](double bw, double ambient) {
    // Static field: only noise fires.
    Simulator sim({32, 32}, noise, ideal(0.2, 1e-5, bw), 42);
    std::vector<double> field(1024, std::log(ambient));
    sim.initialize(field);
    std::size_t n = 0;
    for (int k = 0; k < 200; ++k) n += sim.step(field, 1e-3 / 4.0).size();
    return n;
  };
  std::size_t previous = 0;
  for (double bw : {100.0, 200.0, 400.0, 800.0}) {
    const auto n = noise_count(bw, 1.0);
    CHECK(n >= previous);
    previous = n;
  }
  previous = std::numeric_limits<std::size_t>::max();
  for (double ambient : {0.1, 0.5, 1.0, 4.0}) {
    const auto n = noise_count(500.0, ambient);
    CHECK(n <= previous);
    previous = n;
  }
}

TEST_CASE("noise rate formula") {
  NoiseModel m;
  m.base_rate_hz = 0.2;
  m.reference_bandwidth_hz = 300.0;
  m.reference_theta = 0.25;
  CHECK(noise_rate_hz(m, 300.0, 0.25, 1.0) == doctest::Approx(0.2));
  CHECK(noise_rate_hz(m, 600.0, 0.25, 1.0) == doctest::Approx(0.4));
  CHECK(noise_rate_hz(m, 300.0, 0.5, 1.0) == doctest::Approx(0.1));
  CHECK(noise_rate_hz(m, 300.0, 0.25, 0.25) == doctest::Approx(0.8));
  m.base_rate_hz = 0.0;
  CHECK(noise_rate_hz(m, 1e9, 1e-3, 1e-3) == 0.0);
}

TEST_CASE("measured noise rate matches the model") {
  NoiseModel noise;
  noise.base_rate_hz = 3.0;
  noise.burst_gain = 0.0;
  noise.reference_bandwidth_hz = 300.0;
  noise.reference_theta = 0.2;
  Simulator sim({32, 32}, noise, ideal(0.2, 1e-5, 300.0), 8);
  std::vector<double> field(1024, 0.0);
  sim.initialize(field);
  std::size_t n = 0;
  const double dt = 1.0 / 1200.0;
  for (int k = 0; k < 12000; ++k) n += sim.step(field, dt).size();
  const double expected = 3.0 * 1024 * 10.0;  // ~30k, Poisson sd ~0.6%
  CHECK(static_cast<double>(n) == doctest::Approx(expected).epsilon(0.03));
}

TEST_CASE("lowpass update fraction") {
  CHECK(lowpass_alpha(kInf, 1e-3) == 1.0);
  CHECK(lowpass_alpha(100.0, 1e-4) ==
        doctest::Approx(1.0 - std::exp(-2.0 * 3.141592653589793 * 100.0 * 1e-4)));
}

TEST_CASE("step size must resolve the photoreceptor") {
  Simulator sim({2, 2}, quiet(), ideal(0.2, 0.0, 1000.0), 1);
  std::vector<double> field(4, 0.0);
  CHECK_THROWS_AS(sim.step(field, 1e-4), ConfigError);  // not initialized
  sim.initialize(field);
  CHECK_NOTHROW(sim.step(field, 2.5e-4));
  CHECK_THROWS_AS(sim.step(field, 3e-4), ConfigError);
  CHECK_THROWS_AS(sim.step(field, 0.0), ConfigError);
  std::vector<double> wrong(5, 0.0);
  CHECK_THROWS_AS(sim.step(wrong, 1e-4), ConfigError);
}

TEST_CASE("non-finite input is a simulation fault") {
  Simulator sim({2, 2}, quiet(), ideal(0.2, 0.0, 1000.0), 1);
  std::vector<double> field(4, 0.0);
  sim.initialize(field);
  field[3] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(sim.step(field, 1e-4), SimulationFault);
}

TEST_CASE("constructor rejects bad parameters") {
  CHECK_THROWS_AS(Simulator({0, 4}, quiet(), ideal(0.2), 1), ConfigError);
  CHECK_THROWS_AS(Simulator({4, 4}, quiet(), PixelParams{0.2, 0.1, 5, 100, 0}, 1), ConfigError);
  CHECK_THROWS_AS(Simulator({4, 4}, NoiseModel{}, ideal(0.2), 1), ConfigError);
}

TEST_CASE("transient bursts") {
  NoiseModel m;
  const auto base = ideal(0.2, 1e-5, 300.0);
  CHECK(burst_for_change(base, base, 1.0, 4096, m).n_events == 0);

  const auto op0 = bias::operating_point({}, {});
  const auto small = bias::operating_point({0.0, 0.1, 0.0}, {});
  const auto large = bias::operating_point({0.0, 0.5, 0.0}, {});
  const auto n_small = burst_for_change(op0.params, small.params, 0.0, 4096, m).n_events;
  const auto n_large = burst_for_change(op0.params, large.params, 0.0, 4096, m).n_events;
  CHECK(n_small > 0);
  CHECK(n_small < n_large);

  // Truncated exponential inverse CDF, solved by hand.
  const double tau = 0.3;
  for (double u : {0.0, 0.1, 0.5, 0.9, 0.999999}) {
    const double want = -tau * std::log(1.0 - u * (1.0 - std::exp(-5.0)));
    CHECK(burst_offset(u, tau) == doctest::Approx(want).epsilon(1e-12));
    CHECK(burst_offset(u, tau) <= 5.0 * tau);
  }

  NoiseModel loud = m;
  loud.base_rate_hz = 0.0;
  loud.burst_gain = 20.0;
  Simulator sim({16, 16}, loud, op0.params, 3);
  std::vector<double> field(256, 0.0);
  sim.initialize(field);
  const double dt = 1.0 / 8000.0;
  for (int k = 0; k < 100; ++k) sim.step(field, dt);
  const double at = sim.now();
  const auto spec = sim.apply_biases(large.params, at);
  REQUIRE(spec.n_events > 2000);
  std::vector<Event> burst;
  for (int k = 0; k < 12100; ++k) {
    for (const auto& e : sim.step(field, dt)) {
      if (e.provenance == Provenance::Transient) burst.push_back(e);
    }
  }
  CHECK(burst.size() == spec.n_events);
  const auto lo = static_cast<std::int64_t>(std::floor(at * 1e6));
  const auto hi = static_cast<std::int64_t>(std::ceil((at + spec.horizon_s()) * 1e6));
  for (const auto& e : burst) {
    CHECK(e.t_us >= lo);
    CHECK(e.t_us <= hi);
  }
  double mean = 0.0;
  for (const auto& e : burst) mean += e.t_us * 1e-6 - at;
  mean /= static_cast<double>(burst.size());
  // Mean of an exponential truncated at 5 tau.
  const double z = 1.0 - std::exp(-5.0);
  const double want = tau * (1.0 - 6.0 * std::exp(-5.0)) / z;
  CHECK(mean == doctest::Approx(want).epsilon(0.05));
}

TEST_CASE("dead-time rate oracle") {
  // Delta at 100 us, approximated by a narrow bin.
  IntervalHistogram spike{{99.999e-6, 100.001e-6}, {1.0 / 2e-9}};
  CHECK(refractory_rate_oracle(spike, 100e-6, 1.0) == doctest::Approx(5000.0).epsilon(1e-6));

  IntervalHistogram f{{1e-4, 1e-3, 1e-2}, {0.5 / 9e-4, 0.5 / 9e-3}};
  // Midpoint quadrature as an independent check.
  auto quad = [&](double refr) {
    double sum = 0.0;
    for (std::size_t b = 0; b < 2; ++b) {
      const int n = 200000;
      const double h = (f.edges[b + 1] - f.edges[b]) / n;
      for (int i = 0; i < n; ++i) {
        const double t = f.edges[b] + (i + 0.5) * h;
        sum += f.density[b] * h / (t + refr);
      }
    }
    return sum;
  };
  CHECK(refractory_rate_oracle(f, 0.0, 100.0) == doctest::Approx(100.0 * quad(0.0)).epsilon(1e-6));
  CHECK(refractory_rate_oracle(f, 5e-4, 100.0) == doctest::Approx(100.0 * quad(5e-4)).epsilon(1e-6));

  std::mt19937 rng(21);
  std::uniform_real_distribution<double> u(0.1, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    IntervalHistogram g{{1e-5}, {}};
    double mass = 0.0;
    for (int b = 0; b < 5; ++b) {
      g.edges.push_back(g.edges.back() + u(rng) * 1e-3);
      g.density.push_back(u(rng));
      mass += g.density.back() * (g.edges[b + 1] - g.edges[b]);
    }
    for (auto& d : g.density) d /= mass;
    const double refr = u(rng) * 1e-3;
    CHECK(refractory_rate_oracle(g, 2.0 * refr, 10.0) < refractory_rate_oracle(g, refr, 10.0));
  }

  CHECK_THROWS_AS(refractory_rate_oracle({{0.0, 1.0}, {0.5}}, 0.0, 1.0), ValidationError);
  CHECK_THROWS_AS(refractory_rate_oracle({{1.0, 0.5}, {1.0}}, 0.0, 1.0), ValidationError);
  CHECK_THROWS_AS(refractory_rate_oracle({{0.0, 1.0}, {}}, 0.0, 1.0), ValidationError);
}

TEST_CASE("noise model parse and serialize") {
  NoiseModel m;
  m.base_rate_hz = 0.25;
  m.burst_time_s = 0.1;
  const auto doc = textcfg::parse(serialize_noise_model(m));
  const auto back = parse_noise_model(*doc.find("noise"));
  CHECK(back.base_rate_hz == 0.25);
  CHECK(back.burst_time_s == 0.1);
  CHECK(serialize_noise_model(back) == serialize_noise_model(m));
  const auto bad = textcfg::parse("[noise]\nhum = 1\n");
  CHECK_THROWS_AS(parse_noise_model(*bad.find("noise")), ParseError);
}

}  // TEST_SUITE
