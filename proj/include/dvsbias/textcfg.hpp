#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace dvsbias::textcfg {

// Line-oriented key=value text with optional [section] headers.
//
//   # comment
//   [camera]
//   a_theta = 0.0645
//   [directives]
//   t=0 dot_speed_hz=2 dot_contrast=0.5
//
// Each non-blank line becomes a Line holding its key=value pairs in order.
// Lines before the first header belong to a section with an empty name.

struct Pair {
  std::string key;
  std::string value;
};

struct Line {
  int number = 0;
  std::vector<Pair> pairs;
};

struct Section {
  std::string name;
  int header_line = 0;
  std::vector<Line> lines;
};

struct Document {
  std::vector<Section> sections;

  const Section* find(std::string_view name) const;
  bool has_headers() const;
};

/// Throws ParseError with the offending line number.
Document parse(std::string_view text);

double to_double(const Pair& p, int line);
long long to_int(const Pair& p, int line);
bool to_bool(const Pair& p, int line);

std::string format_double(double v);

}  // namespace dvsbias::textcfg
