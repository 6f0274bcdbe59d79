#pragma once

#include <cctype>
#include <cmath>
#include <charconv>
#include <cstdlib>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "scenegen/blueprint.hpp"
#include "scenegen/error.hpp"

namespace scenegen {

struct LayoutReply {
  Layout layout;
  std::string background_prompt;
};

namespace detail {

inline std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline std::string collapse_ws(std::string_view s) {
  std::string out;
  bool pending = false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending = !out.empty();
    } else {
      if (pending) out.push_back(' ');
      pending = false;
      out.push_back(c);
    }
  }
  return out;
}

inline std::size_t ifind(std::string_view hay, std::string_view needle, std::size_t from = 0) {
  return lower(hay).find(lower(needle), from);
}

class Cursor {
 public:
  explicit Cursor(std::string_view s, std::size_t pos = 0) : s_(s), pos_(pos) {}

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool eof() const { return pos_ >= s_.size(); }
  char peek() const { return eof() ? '\0' : s_[pos_]; }
  bool accept(char c) {
    skip_ws();
    if (peek() == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  void expect(char c, const char* ctx) {
    if (!accept(c)) throw Error(Errc::malformed_tuple, std::string("expected '") + c + "' " + ctx + near());
  }
  std::string near() const { return " near \"" + std::string(s_.substr(pos_, 24)) + "\""; }

  std::string quoted_or_bare() {
    skip_ws();
    const char q = peek();
    if (q == '\'' || q == '"') {
      const std::size_t end = s_.find(q, pos_ + 1);
      if (end == std::string_view::npos) throw Error(Errc::malformed_tuple, "unterminated object name" + near());
      std::string out(s_.substr(pos_ + 1, end - pos_ - 1));
      pos_ = end + 1;
      return out;
    }
    const std::size_t end = s_.find(',', pos_);
    if (end == std::string_view::npos) throw Error(Errc::malformed_tuple, "object name without box" + near());
    std::string out(trim(s_.substr(pos_, end - pos_)));
    pos_ = end;
    return out;
  }

  double number() {
    skip_ws();
    std::size_t end = pos_;
    while (end < s_.size() && s_[end] != ',' && s_[end] != ']' && !std::isspace(static_cast<unsigned char>(s_[end])))
      ++end;
    const std::string tok(s_.substr(pos_, end - pos_));
    char* stop = nullptr;
    const double v = std::strtod(tok.c_str(), &stop);
    if (tok.empty() || stop != tok.c_str() + tok.size() || !std::isfinite(v))
      throw Error(Errc::malformed_tuple, "non-numeric coordinate '" + tok + "'");
    pos_ = end;
    return v;
  }

  std::size_t pos() const { return pos_; }

 private:
  std::string_view s_;
  std::size_t pos_;
};

inline std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace detail

// Parses the bounding-box generator's reply:
//   Objects: [('a bird', [296, 42, 143, 100]), ...]
//   Background prompt: A realistic image of ...
// Surrounding prose is ignored. Repeated names get a " (2)", " (3)" suffix
// so every entry stays addressable.
inline LayoutReply parse_layout_response(std::string_view text) {
  using detail::Cursor;
  std::size_t at = detail::ifind(text, "objects:");
  while (at != std::string_view::npos) {
    Cursor probe(text, at + 8);
    probe.skip_ws();
    if (probe.peek() == '[') break;
    at = detail::ifind(text, "objects:", at + 8);
  }
  if (at == std::string_view::npos) throw Error(Errc::missing_section, "no 'Objects:' list in reply");
  const std::size_t bg_at = detail::ifind(text, "background prompt:");
  if (bg_at == std::string_view::npos) throw Error(Errc::missing_section, "no 'Background prompt:' line in reply");

  LayoutReply out;
  Cursor cur(text, at + 8);
  cur.expect('[', "to open the object list");
  std::map<std::string, int> seen;
  while (true) {
    cur.skip_ws();
    if (cur.accept(']')) break;
    if (cur.eof()) throw Error(Errc::malformed_tuple, "unterminated object list");
    if (!out.layout.empty()) cur.expect(',', "between tuples");
    if (cur.accept(']')) break;  // trailing comma
    cur.expect('(', "to open a tuple");
    std::string name = detail::collapse_ws(cur.quoted_or_bare());
    if (name.empty()) throw Error(Errc::malformed_tuple, "empty object name");
    cur.expect(',', "after object name");
    cur.expect('[', "to open coordinates");
    std::vector<double> coords;
    if (!cur.accept(']')) {
      do {
        coords.push_back(cur.number());
      } while (cur.accept(','));
      cur.expect(']', "to close coordinates");
    }
    cur.expect(')', "to close a tuple");
    if (coords.size() != 4)
      throw Error(Errc::malformed_tuple, "tuple for '" + name + "' has " + std::to_string(coords.size()) + " coordinates");
    const int n = ++seen[normalize_name(name)];
    if (n > 1) name += " (" + std::to_string(n) + ")";
    out.layout.push_back({std::move(name), {coords[0], coords[1], coords[2], coords[3]}});
  }
  if (out.layout.empty()) throw Error(Errc::empty_layout, "reply lists zero objects");

  std::size_t line_start = bg_at + 18;
  std::size_t line_end = text.find('\n', line_start);
  if (line_end == std::string_view::npos) line_end = text.size();
  out.background_prompt = std::string(detail::trim(text.substr(line_start, line_end - line_start)));
  return out;
}

// Inverse of parse_layout_response for well-formed layouts; numbers are
// written in shortest round-trip form.
inline std::string render_layout_text(const Layout& layout, std::string_view background) {
  std::string s = "Objects: [";
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& nb = layout[i];
    const char q = nb.name.find('\'') == std::string::npos ? '\'' : '"';
    if (i) s += ", ";
    s += "(";
    s += q;
    s += nb.name;
    s += q;
    s += ", [" + detail::format_number(nb.box.x) + ", " + detail::format_number(nb.box.y) + ", " +
         detail::format_number(nb.box.w) + ", " + detail::format_number(nb.box.h) + "])";
  }
  s += "]\nBackground prompt: ";
  s += background;
  return s;
}

inline std::string fallback_description(std::string_view name) {
  return "A realistic photo of " + std::string(name);
}

namespace detail {

inline bool is_key_text(std::string_view key) {
  key = trim(key);
  if (key.empty() || key.size() > 120) return false;
  for (char c : key)
    if (c == '\n' || c == '{' || c == '}' || c == '.' || c == ',' || c == ':') return false;
  return true;
}

inline std::string strip_quotes(std::string_view s) {
  s = trim(s);
  if (!s.empty() && (s.front() == '\'' || s.front() == '"')) s.remove_prefix(1);
  if (!s.empty() && s.back() == ',') s.remove_suffix(1);
  s = trim(s);
  if (!s.empty() && (s.back() == '\'' || s.back() == '"')) s.remove_suffix(1);
  return std::string(trim(s));
}

// Lenient scan of a Python-dict-like block whose values may be unquoted and
// contain commas. An entry starts at the block start, or after a comma when
// a plausible "key:" follows and either a newline sits in between, the key
// is quoted, or the key names a requested object.
inline std::vector<std::pair<std::string, std::string>> scan_dict(std::string_view body,
                                                                  const std::vector<std::string>& wanted) {
  struct Start {
    std::size_t key_begin, colon;
  };
  const auto key_at = [&](std::size_t from, bool strong_sep) -> std::optional<Start> {
    std::size_t k = from;
    while (k < body.size() && std::isspace(static_cast<unsigned char>(body[k]))) ++k;
    if (k >= body.size()) return std::nullopt;
    std::size_t colon = std::string_view::npos;
    if (body[k] == '\'' || body[k] == '"') {
      const std::size_t close = body.find(body[k], k + 1);
      if (close == std::string_view::npos) return std::nullopt;
      std::size_t c = close + 1;
      while (c < body.size() && std::isspace(static_cast<unsigned char>(body[c]))) ++c;
      if (c < body.size() && body[c] == ':') return Start{k, c};
      return std::nullopt;
    }
    colon = body.find(':', k);
    if (colon == std::string_view::npos) return std::nullopt;
    const std::string_view key = body.substr(k, colon - k);
    if (!is_key_text(key)) return std::nullopt;
    if (strong_sep) return Start{k, colon};
    const std::string norm = normalize_name(strip_quotes(key));
    for (const auto& w : wanted)
      if (normalize_name(w) == norm) return Start{k, colon};
    return std::nullopt;
  };

  std::vector<Start> starts;
  if (auto s = key_at(0, true)) starts.push_back(*s);
  for (std::size_t i = 0; i < body.size(); ++i) {
    if (body[i] != ',') continue;
    if (!starts.empty() && i < starts.back().colon) continue;
    std::size_t k = i + 1;
    bool newline = false;
    while (k < body.size() && std::isspace(static_cast<unsigned char>(body[k]))) newline |= body[k++] == '\n';
    const bool quoted = k < body.size() && (body[k] == '\'' || body[k] == '"');
    if (auto s = key_at(i + 1, newline || quoted)) starts.push_back(*s);
  }

  std::vector<std::pair<std::string, std::string>> entries;
  for (std::size_t e = 0; e < starts.size(); ++e) {
    const std::size_t vbeg = starts[e].colon + 1;
    std::size_t vend = body.size();
    if (e + 1 < starts.size()) {
      vend = body.rfind(',', starts[e + 1].key_begin);
      if (vend == std::string_view::npos || vend < vbeg) vend = starts[e + 1].key_begin;
    }
    std::string key = collapse_ws(strip_quotes(body.substr(starts[e].key_begin, starts[e].colon - starts[e].key_begin)));
    std::string value = collapse_ws(strip_quotes(body.substr(vbeg, vend - vbeg)));
    if (!key.empty()) entries.emplace_back(std::move(key), std::move(value));
  }
  return entries;
}

}  // namespace detail

// Maps each requested object name to its description from a dictionary-like
// reply block. Names match after normalize_name; anything the reply left out
// falls back to "A realistic photo of {name}".
inline std::unordered_map<std::string, std::string> parse_description_response(std::string_view text,
                                                                               const std::vector<std::string>& names) {
  const std::size_t open = text.find('{');
  const std::size_t close = text.rfind('}');
  if (open == std::string_view::npos || close == std::string_view::npos || close <= open)
    throw Error(Errc::no_dictionary_found, "no {...} block in description reply");
  const std::string_view body = text.substr(open + 1, close - open - 1);

  std::vector<std::pair<std::string, std::string>> entries;
  const auto as_json = nlohmann::json::parse(text.substr(open, close - open + 1), nullptr, false);
  if (!as_json.is_discarded() && as_json.is_object()) {
    for (const auto& [k, v] : as_json.items())
      if (v.is_string()) entries.emplace_back(k, detail::collapse_ws(v.get<std::string>()));
  } else {
    entries = detail::scan_dict(body, names);
  }
  if (entries.empty()) throw Error(Errc::no_dictionary_found, "description block has no entries");

  std::unordered_map<std::string, std::string> by_norm;
  for (auto& [k, v] : entries)
    if (!v.empty()) by_norm.emplace(normalize_name(k), v);

  std::unordered_map<std::string, std::string> out;
  for (const auto& name : names) {
    const auto it = by_norm.find(normalize_name(name));
    out[name] = it != by_norm.end() ? it->second : fallback_description(name);
  }
  return out;
}

}  // namespace scenegen
