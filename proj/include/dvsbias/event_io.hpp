#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "dvsbias/pixel_sim.hpp"

namespace dvsbias::io {

using sim::Event;

// CSV: header "t_us,x,y,polarity" (plus ",provenance" with ground truth),
// polarity as 1/0, provenance as signal|noise|transient.
//
// Binary: headerless 9-byte little-endian records
//   u32 t_us | u16 x | u16 y | u8 flags
// flags bit 0 = polarity (1 = ON), bits 1-2 = provenance (0 signal,
// 1 noise, 2 transient). Timestamps must fit in 32 bits.

inline constexpr std::size_t kBinaryRecordSize = 9;

class CsvEventWriter {
 public:
  CsvEventWriter(std::ostream& out, bool with_provenance);
  void write(std::span<const Event> events);

 private:
  std::ostream& out_;
  bool with_provenance_;
};

class BinaryEventWriter {
 public:
  explicit BinaryEventWriter(std::ostream& out);
  /// Throws RangeError if a timestamp does not fit in 32 bits.
  void write(std::span<const Event> events);

 private:
  std::ostream& out_;
};

/// Events without a provenance column read back as signal.
/// Throws ParseError with a line number on malformed input.
std::vector<Event> read_csv(std::istream& in);
/// Throws ParseError (line = record index + 1) on a truncated record.
std::vector<Event> read_binary(std::istream& in);

}  // namespace dvsbias::io
