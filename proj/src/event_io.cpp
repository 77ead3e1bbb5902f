#include "dvsbias/event_io.hpp"

#include <array>
#include <charconv>
#include <istream>
#include <limits>
#include <ostream>
#include <string>
#include <string_view>

#include "dvsbias/errors.hpp"

namespace dvsbias::io {

namespace {

constexpr std::string_view kProvenanceNames[] = {"signal", "noise", "transient"};

template <typename T>
T parse_field(std::string_view s, int line) {
  T v{};
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) {
    throw ParseError(line, "bad event field '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace

CsvEventWriter::CsvEventWriter(std::ostream& out, bool with_provenance)
    : out_(out), with_provenance_(with_provenance) {
  out_ << (with_provenance_ ? "t_us,x,y,polarity,provenance\n" : "t_us,x,y,polarity\n");
}

void CsvEventWriter::write(std::span<const Event> events) {
  std::string buf;
  buf.reserve(events.size() * 24);
  std::array<char, 24> num{};
  auto append = [&](auto v) {
    const auto r = std::to_chars(num.data(), num.data() + num.size(), v);
    buf.append(num.data(), r.ptr);
  };
  for (const auto& e : events) {
    append(e.t_us);
    buf += ',';
    append(e.x);
    buf += ',';
    append(e.y);
    buf += e.polarity == sim::Polarity::On ? ",1" : ",0";
    if (with_provenance_) {
      buf += ',';
      buf += kProvenanceNames[static_cast<int>(e.provenance)];
    }
    buf += '\n';
  }
  out_ << buf;
}

BinaryEventWriter::BinaryEventWriter(std::ostream& out) : out_(out) {}

void BinaryEventWriter::write(std::span<const Event> events) {
  std::string buf(events.size() * kBinaryRecordSize, '\0');
  char* p = buf.data();
  auto put = [&p](std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) *p++ = static_cast<char>((v >> (8 * i)) & 0xff);
  };
  for (const auto& e : events) {
    if (e.t_us < 0 || e.t_us > std::numeric_limits<std::uint32_t>::max()) {
      throw RangeError("timestamp does not fit the 32-bit binary record");
    }
    put(static_cast<std::uint64_t>(e.t_us), 4);
    put(e.x, 2);
    put(e.y, 2);
    put(static_cast<unsigned>(e.polarity) | (static_cast<unsigned>(e.provenance) << 1), 1);
  }
  out_.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

std::vector<Event> read_csv(std::istream& in) {
  std::vector<Event> events;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty() || line.starts_with("t_us")) continue;
    std::array<std::string_view, 5> f{};
    std::size_t n = 0;
    std::string_view rest(line);
    while (n < f.size()) {
      const auto comma = rest.find(',');
      f[n++] = rest.substr(0, comma);
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (n < 4) throw ParseError(number, "expected t_us,x,y,polarity");
    Event e;
    e.t_us = parse_field<std::int64_t>(f[0], number);
    e.x = parse_field<std::uint16_t>(f[1], number);
    e.y = parse_field<std::uint16_t>(f[2], number);
    const int pol = parse_field<int>(f[3], number);
    if (pol != 0 && pol != 1) throw ParseError(number, "polarity must be 0 or 1");
    e.polarity = pol == 1 ? sim::Polarity::On : sim::Polarity::Off;
    if (n == 5) {
      int k = 0;
      while (k < 3 && kProvenanceNames[k] != f[4]) ++k;
      if (k == 3) throw ParseError(number, "unknown provenance '" + std::string(f[4]) + "'");
      e.provenance = static_cast<sim::Provenance>(k);
    }
    events.push_back(e);
  }
  return events;
}

std::vector<Event> read_binary(std::istream& in) {
  std::vector<Event> events;
  std::array<unsigned char, kBinaryRecordSize> r{};
  for (int index = 1;; ++index) {
    in.read(reinterpret_cast<char*>(r.data()), r.size());
    const auto got = in.gcount();
    if (got == 0) break;
    if (got != static_cast<std::streamsize>(r.size())) throw ParseError(index, "truncated record");
    auto get = [&r](int at, int bytes) {
      std::uint64_t v = 0;
      for (int i = bytes - 1; i >= 0; --i) v = (v << 8) | r[at + i];
      return v;
    };
    const auto flags = static_cast<unsigned>(r[8]);
    if ((flags >> 1) > 2) throw ParseError(index, "bad flags byte");
    events.push_back(Event{static_cast<std::int64_t>(get(0, 4)),
                           static_cast<std::uint16_t>(get(4, 2)),
                           static_cast<std::uint16_t>(get(6, 2)),
                           (flags & 1) != 0 ? sim::Polarity::On : sim::Polarity::Off,
                           static_cast<sim::Provenance>(flags >> 1)});
  }
  return events;
}

}  // namespace dvsbias::io
