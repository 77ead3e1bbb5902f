#include <cmath>
#include <random>

#include <doctest.h>

#include "dvsbias/bias_model.hpp"
#include "dvsbias/errors.hpp"

using namespace dvsbias;
using namespace dvsbias::bias;

TEST_SUITE("bias_model") {

TEST_CASE("tweak to current endpoints and midpoints") {
  const TweakRange r{10.0, 10.0, 2e-9};
  CHECK(tweak_to_current(0.0, r).value == doctest::Approx(2e-9).epsilon(1e-15));
  CHECK(tweak_to_current(1.0, r).value == doctest::Approx(20e-9).epsilon(1e-12));
  CHECK(tweak_to_current(-1.0, r).value == doctest::Approx(0.2e-9).epsilon(1e-12));
  CHECK(tweak_to_current(0.5, r).value == doctest::Approx(2e-9 * 3.16227766016838).epsilon(1e-12));

  const TweakRange asym{100.0, 8.0, 5e-9};
  CHECK(tweak_to_current(1.0, asym).value == doctest::Approx(40e-9).epsilon(1e-12));
  CHECK(tweak_to_current(-1.0, asym).value == doctest::Approx(0.05e-9).epsilon(1e-12));
}

TEST_CASE("out-of-range tweaks clamp and report it") {
  const TweakRange r{10.0, 10.0, 1.0};
  const auto hi = tweak_to_current(3.0, r);
  CHECK(hi.clamped);
  CHECK(hi.value == doctest::Approx(10.0));
  const auto lo = tweak_to_current(-1e9, r);
  CHECK(lo.clamped);
  CHECK(lo.value == doctest::Approx(0.1));
  CHECK_FALSE(tweak_to_current(1.0, r).clamped);
  CHECK_THROWS_AS(clamp_tweak(std::nan("")), RangeError);
  CHECK_THROWS_AS(tweak_to_current(0.0, {1.0, 10.0, 1.0}), ConfigError);
  CHECK_THROWS_AS(tweak_to_current(0.0, {10.0, 10.0, -1.0}), ConfigError);
}

TEST_CASE("current to tweak inverse") {
  const double i0 = 3e-9;
  const TweakRange r{10.0, 10.0, i0};
  CHECK(current_to_tweak(i0, r) == 0.0);
  CHECK(current_to_tweak(10.0 * i0, r) == doctest::Approx(1.0));
  CHECK(current_to_tweak(i0 / std::sqrt(10.0), r) == doctest::Approx(-0.5));
  CHECK_THROWS_AS(current_to_tweak(11.0 * i0, r), RangeError);
  CHECK_THROWS_AS(current_to_tweak(i0 / 11.0, r), RangeError);
  CHECK_THROWS_AS(current_to_tweak(0.0, r), RangeError);
}

TEST_CASE("tweak map properties over random ranges") {
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> factor(1.01, 200.0);
  std::uniform_real_distribution<double> log_i0(std::log(1e-12), std::log(1e-5));
  std::uniform_real_distribution<double> tweak(-1.0, 1.0);
  std::uniform_real_distribution<double> wild(-50.0, 50.0);
  for (int trial = 0; trial < 2000; ++trial) {
    const TweakRange r{factor(rng), factor(rng), std::exp(log_i0(rng))};
    const double lo = r.nominal_current / r.t_min;
    const double hi = r.nominal_current * r.t_max;

    const double a = tweak(rng);
    const double b = tweak(rng);
    const double ia = tweak_to_current(a, r).value;
    const double ib = tweak_to_current(b, r).value;
    if (a < b) CHECK(ia < ib);
    if (a > b) CHECK(ia > ib);

    const double iw = tweak_to_current(wild(rng), r).value;
    CHECK(iw >= lo * (1 - 1e-12));
    CHECK(iw <= hi * (1 + 1e-12));

    CHECK(current_to_tweak(ia, r) == doctest::Approx(a).epsilon(1e-9).scale(1.0));

    const double eps = 1e-12;
    CHECK(tweak_to_current(eps, r).value == doctest::Approx(r.nominal_current).epsilon(1e-9));
    CHECK(tweak_to_current(-eps, r).value == doctest::Approx(r.nominal_current).epsilon(1e-9));
  }
}

TEST_CASE("thresholds from the default currents") {
  const BiasCurrents c;
  const auto th = thresholds_from_currents(c, 1.0 / 15.5);
  CHECK(th.theta_on == doctest::Approx(std::log(65.0) / 15.5).epsilon(1e-14));
  CHECK(th.theta_on == doctest::Approx(0.2693).epsilon(1e-3));
  CHECK(th.theta_off == doctest::Approx(std::log(0.015) / 15.5).epsilon(1e-14));
  CHECK(th.theta_off == doctest::Approx(-0.2710).epsilon(1e-3));

  BiasCurrents zero = c;
  zero.i_on = zero.i_d;
  CHECK_THROWS_AS(thresholds_from_currents(zero), InvalidBiasError);
  BiasCurrents off = c;
  off.i_off = off.i_d * 2.0;
  CHECK_THROWS_AS(thresholds_from_currents(off), InvalidBiasError);
}

TEST_CASE("balanced threshold inverse") {
  const BiasCurrents c;
  const auto r = currents_for_threshold(0.2693, c);
  CHECK_FALSE(r.clamped);
  // theta / a_theta = ln(i_on / i_d) solved by hand.
  CHECK(r.value.i_on == doctest::Approx(20e-9 * std::exp(0.2693 * 15.5)).epsilon(1e-12));
  CHECK(r.value.i_on == doctest::Approx(1.3e-6).epsilon(1e-3));
  CHECK(r.value.i_off == doctest::Approx(0.3077e-9).epsilon(1e-3));
  CHECK(r.value.i_pr == c.i_pr);
  CHECK(r.value.i_refr == c.i_refr);

  const double theta = thresholds_from_currents(c).theta_on;
  const auto back = thresholds_from_currents(currents_for_threshold(theta, c).value);
  CHECK(back.theta_on == doctest::Approx(theta).epsilon(1e-9));
  CHECK(back.theta_off == doctest::Approx(-theta).epsilon(1e-9));

  CHECK_THROWS_AS(currents_for_threshold(0.0, c), InvalidBiasError);
  CHECK_THROWS_AS(currents_for_threshold(-0.1, c), InvalidBiasError);
  CHECK(currents_for_threshold(5.0, c).clamped);
}

TEST_CASE("threshold round trip over random thetas") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> theta(0.15, 0.4);
  const BiasCurrents c;
  for (int i = 0; i < 500; ++i) {
    const double t = theta(rng);
    const auto cur = currents_for_threshold(t, c);
    if (cur.clamped) continue;
    const auto th = thresholds_from_currents(cur.value);
    CHECK(th.theta_on == doctest::Approx(t).epsilon(1e-9));
  }
}

TEST_CASE("refractory period") {
  CHECK(refractory_from_current(4e-12) == doctest::Approx(20e-15 / (4e-12 * 0.5)).epsilon(1e-14));
  CHECK(refractory_from_current(4e-12) == doctest::Approx(10e-3).epsilon(1e-12));
  CHECK(refractory_from_current(5e-9) == doctest::Approx(8e-6).epsilon(1e-12));
  CHECK(refractory_from_current(2e-9) == doctest::Approx(2.0 * refractory_from_current(4e-9)));
  CHECK_THROWS_AS(refractory_from_current(0.0), InvalidBiasError);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> log_i(std::log(1e-13), std::log(1e-6));
  for (int i = 0; i < 1000; ++i) {
    const double current = std::exp(log_i(rng));
    CHECK(refractory_from_current(current) * current == doctest::Approx(4.0e-14).epsilon(1e-15));
  }
}

TEST_CASE("photoreceptor bandwidth") {
  const BiasCurrents n;
  CHECK(bandwidth_from_currents(n, n, 300.0) == doctest::Approx(300.0));
  BiasCurrents both = n;
  both.i_pr *= 2.0;
  both.i_sf *= 2.0;
  CHECK(bandwidth_from_currents(both, n, 300.0) > 300.0);

  BiasCurrents pr4 = n;
  pr4.i_pr *= 4.0;
  CHECK(bandwidth_from_currents(pr4, n, 300.0, 0.5) == doctest::Approx(300.0));
  pr4.i_sf *= 8.0;
  CHECK(bandwidth_from_currents(pr4, n, 300.0, 0.5) == doctest::Approx(600.0));

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> ratio(0.05, 20.0);
  for (int i = 0; i < 1000; ++i) {
    BiasCurrents a = n;
    a.i_pr *= ratio(rng);
    a.i_sf *= ratio(rng);
    BiasCurrents b = a;
    // Raise whichever stage is the bottleneck.
    if (a.i_pr / n.i_pr <= a.i_sf / n.i_sf) {
      b.i_pr *= 1.1;
    } else {
      b.i_sf *= 1.1;
    }
    CHECK(bandwidth_from_currents(b, n, 300.0) > bandwidth_from_currents(a, n, 300.0));
  }
}

TEST_CASE("rate versus sensitivity model") {
  CHECK(predicted_rate_from_sensitivity(2.2, 2.2, 3.6, 1e5) == 0.0);
  CHECK(predicted_rate_from_sensitivity(3.6, 2.2, 3.6, 1e5) == doctest::Approx(1e5));
  CHECK(predicted_rate_from_sensitivity(5.0, 2.2, 3.6, 1e5) == doctest::Approx(2e5));
  CHECK(predicted_rate_from_sensitivity(1.0, 2.2, 3.6, 1e5) == 0.0);
  CHECK_THROWS_AS(predicted_rate_from_sensitivity(3.0, 3.6, 2.2, 1e5), ModelParameterError);

  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> s(2.3, 10.0);
  for (int i = 0; i < 200; ++i) {
    const double a = s(rng);
    const double b = s(rng);
    const double mid = 0.5 * (a + b);
    const double fa = predicted_rate_from_sensitivity(a, 2.2, 3.6, 1e5);
    const double fb = predicted_rate_from_sensitivity(b, 2.2, 3.6, 1e5);
    CHECK(predicted_rate_from_sensitivity(mid, 2.2, 3.6, 1e5) ==
          doctest::Approx(0.5 * (fa + fb)).epsilon(1e-12));
  }
}

TEST_CASE("operating point from tweaks") {
  const CameraConfig cam;
  const auto nominal = operating_point({}, cam);
  CHECK_FALSE(nominal.clamped);
  CHECK(nominal.params.theta_on == doctest::Approx(std::log(65.0) / 15.5).epsilon(1e-12));
  CHECK(nominal.params.theta_off == doctest::Approx(-nominal.params.theta_on).epsilon(1e-9));
  CHECK(nominal.params.bandwidth_hz == doctest::Approx(300.0));
  CHECK(nominal.params.refractory_s == doctest::Approx(8e-6));

  const auto up = operating_point({0.5, 0.0, 0.0}, cam);
  CHECK(up.params.theta_on > nominal.params.theta_on);
  const auto wide = operating_point({0.0, 1.0, 0.0}, cam);
  CHECK(wide.params.bandwidth_hz == doctest::Approx(300.0 * std::sqrt(30.0)));
  const auto longer = operating_point({0.0, 0.0, -1.0}, cam);
  CHECK(longer.params.refractory_s == doctest::Approx(8e-6 * 100.0));

  const auto clamped = operating_point({2.0, 0.0, 0.0}, cam);
  CHECK(clamped.clamped);
  CHECK(clamped.tweaks.threshold == 1.0);
}

TEST_CASE("camera config parse and serialize") {
  CameraConfig c;
  c.a_theta = 0.07;
  c.nominal.i_refr = 3e-9;
  c.nominal_bandwidth_hz = 82.0;
  const auto doc = textcfg::parse(serialize_camera_config(c));
  const auto back = parse_camera_config(*doc.find("camera"));
  CHECK(back.a_theta == c.a_theta);
  CHECK(back.nominal.i_refr == c.nominal.i_refr);
  CHECK(back.nominal_bandwidth_hz == c.nominal_bandwidth_hz);
  CHECK(serialize_camera_config(back) == serialize_camera_config(c));

  const auto bad = textcfg::parse("[camera]\nwidget = 3\n");
  CHECK_THROWS_AS(parse_camera_config(*bad.find("camera")), ParseError);
}

}  // TEST_SUITE
