#include <random>
#include <sstream>

#include <doctest.h>

#include "dvsbias/errors.hpp"
#include "dvsbias/event_io.hpp"

using namespace dvsbias;
using namespace dvsbias::io;
using sim::Polarity;
using sim::Provenance;

namespace {

std::vector<Event> random_events(std::size_t n, std::uint32_t seed) {
  std::mt19937 rng(seed);
  std::uniform_int_distribution<int> coord(0, 345);
  std::uniform_int_distribution<int> gap(0, 50);
  std::uniform_int_distribution<int> prov(0, 2);
  std::bernoulli_distribution on(0.5);
  std::vector<Event> out;
  std::int64_t t = 0;
  for (std::size_t i = 0; i < n; ++i) {
    t += gap(rng);
    out.push_back(Event{t, static_cast<std::uint16_t>(coord(rng)),
                        static_cast<std::uint16_t>(coord(rng)),
                        on(rng) ? Polarity::On : Polarity::Off,
                        static_cast<Provenance>(prov(rng))});
  }
  return out;
}

}  // namespace

TEST_SUITE("event_io") {

TEST_CASE("csv round trip with provenance") {
  const auto ev = random_events(5000, 1);
  std::stringstream buf;
  CsvEventWriter w(buf, true);
  w.write(ev);
  CHECK(buf.str().rfind("t_us,x,y,polarity,provenance\n", 0) == 0);
  CHECK(read_csv(buf) == ev);
}

TEST_CASE("csv without provenance reads back as signal") {
  auto ev = random_events(100, 2);
  std::stringstream buf;
  CsvEventWriter w(buf, false);
  w.write(ev);
  const auto back = read_csv(buf);
  REQUIRE(back.size() == ev.size());
  for (std::size_t i = 0; i < ev.size(); ++i) {
    CHECK(back[i].t_us == ev[i].t_us);
    CHECK(back[i].polarity == ev[i].polarity);
    CHECK(back[i].provenance == Provenance::Signal);
  }
}

TEST_CASE("csv writes polarity as 1/0") {
  std::stringstream buf;
  CsvEventWriter w(buf, true);
  const std::vector<Event> ev{{12, 3, 4, Polarity::Off, Provenance::Noise}};
  w.write(ev);
  CHECK(buf.str() == "t_us,x,y,polarity,provenance\n12,3,4,0,noise\n");
}

TEST_CASE("malformed csv reports its line") {
  std::stringstream bad("t_us,x,y,polarity\n1,2,3,1\n5,x,3,0\n");
  try {
    read_csv(bad);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  std::stringstream header("time,x,y\n");
  CHECK_THROWS_AS(read_csv(header), ParseError);
  std::stringstream pol("t_us,x,y,polarity\n1,2,3,7\n");
  CHECK_THROWS_AS(read_csv(pol), ParseError);
}

TEST_CASE("binary round trip and layout") {
  const auto ev = random_events(3000, 3);
  std::stringstream buf;
  BinaryEventWriter w(buf);
  w.write(ev);
  CHECK(buf.str().size() == ev.size() * kBinaryRecordSize);
  CHECK(read_binary(buf) == ev);

  std::stringstream one;
  BinaryEventWriter w1(one);
  const std::vector<Event> e{{0x01020304, 0x0506, 0x0708, Polarity::On, Provenance::Transient}};
  w1.write(e);
  const std::string bytes = one.str();
  REQUIRE(bytes.size() == 9);
  const unsigned char want[9] = {0x04, 0x03, 0x02, 0x01, 0x06, 0x05, 0x08, 0x07, 0x05};
  for (int i = 0; i < 9; ++i) CHECK(static_cast<unsigned char>(bytes[i]) == want[i]);
}

TEST_CASE("binary limits") {
  std::stringstream buf;
  BinaryEventWriter w(buf);
  const std::vector<Event> late{{std::int64_t{1} << 32, 0, 0}};
  CHECK_THROWS_AS(w.write(late), RangeError);

  std::stringstream truncated(std::string(13, '\0'));
  try {
    read_binary(truncated);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
}

}  // TEST_SUITE
