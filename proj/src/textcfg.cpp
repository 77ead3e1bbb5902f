#include "dvsbias/textcfg.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "dvsbias/errors.hpp"

namespace dvsbias::textcfg {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> tokenize(std::string_view line) {
  std::vector<std::string> raw;
  std::istringstream in{std::string(line)};
  std::string tok;
  while (in >> tok) raw.push_back(tok);

  // Allow "key = value" and "key= value" by gluing stray '=' tokens.
  std::vector<std::string> out;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    std::string cur = raw[i];
    if (cur == "=" && !out.empty() && i + 1 < raw.size()) {
      out.back() += "=" + raw[++i];
      continue;
    }
    if (cur.front() == '=' && !out.empty() && out.back().find('=') == std::string::npos) {
      out.back() += cur;
      if (cur.size() == 1 && i + 1 < raw.size()) out.back() += raw[++i];
      continue;
    }
    if (cur.back() == '=' && i + 1 < raw.size() &&
        raw[i + 1].find('=') == std::string::npos) {
      cur += raw[++i];
    }
    out.push_back(std::move(cur));
  }
  return out;
}

}  // namespace

const Section* Document::find(std::string_view name) const {
  for (const auto& s : sections) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

bool Document::has_headers() const {
  for (const auto& s : sections) {
    if (!s.name.empty()) return true;
  }
  return false;
}

Document parse(std::string_view text) {
  Document doc;
  doc.sections.push_back(Section{});
  int number = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view raw =
        text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++number;

    if (const auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
    const auto line = trim(raw);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) throw ParseError(number, "malformed section header");
      std::string name(trim(line.substr(1, line.size() - 2)));
      for (const auto& s : doc.sections) {
        if (s.name == name) throw ParseError(number, "duplicate section [" + name + "]");
      }
      doc.sections.push_back(Section{name, number, {}});
      continue;
    }

    Line parsed{number, {}};
    for (const auto& tok : tokenize(line)) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos || eq == 0 || eq + 1 == tok.size()) {
        throw ParseError(number, "expected key=value, got '" + tok + "'");
      }
      parsed.pairs.push_back(Pair{tok.substr(0, eq), tok.substr(eq + 1)});
    }
    doc.sections.back().lines.push_back(std::move(parsed));
  }
  return doc;
}

double to_double(const Pair& p, int line) {
  double v = 0.0;
  const auto* b = p.value.data();
  const auto* e = b + p.value.size();
  auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc{} || ptr != e || !std::isfinite(v)) {
    throw ParseError(line, "'" + p.key + "' expects a finite number, got '" + p.value + "'");
  }
  return v;
}

long long to_int(const Pair& p, int line) {
  long long v = 0;
  const auto* b = p.value.data();
  const auto* e = b + p.value.size();
  auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc{} || ptr != e) {
    throw ParseError(line, "'" + p.key + "' expects an integer, got '" + p.value + "'");
  }
  return v;
}

bool to_bool(const Pair& p, int line) {
  const auto& v = p.value;
  if (v == "on" || v == "true" || v == "1" || v == "yes") return true;
  if (v == "off" || v == "false" || v == "0" || v == "no") return false;
  throw ParseError(line, "'" + p.key + "' expects on/off, got '" + v + "'");
}

std::string format_double(double v) {
  // Shortest representation that round-trips.
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace dvsbias::textcfg
