#include "synth/xml.hpp"

#include "synth/error.hpp"
#include "synth/html.hpp"
#include "synth/text.hpp"

namespace synth::xml {

namespace {

bool is_name_start(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_' || c == ':' ||
         static_cast<unsigned char>(c) >= 0x80;
}

bool is_name_char(char c) {
  return is_name_start(c) || (c >= '0' && c <= '9') || c == '-' || c == '.';
}

class Parser {
 public:
  explicit Parser(std::string_view s) : s_(s) {}

  Element document() {
    skip_prolog();
    if (pos_ >= s_.size() || s_[pos_] != '<') fail("expected root element");
    Element root = element();
    skip_misc();
    if (pos_ != s_.size()) fail("content after root element");
    return root;
  }

 private:
  [[noreturn]] void fail(const std::string& why) const { fail_at(pos_, why); }
  [[noreturn]] void fail_at(std::size_t at, const std::string& why) const {
    throw ParseError("malformed XML at offset " + std::to_string(at) + ": " + why, at);
  }

  bool starts(std::string_view p) const { return s_.compare(pos_, p.size(), p) == 0; }

  void skip_space() {
    while (pos_ < s_.size() && is_ascii_space(s_[pos_])) ++pos_;
  }

  void skip_until(std::string_view end) {
    const auto e = s_.find(end, pos_);
    if (e == std::string_view::npos) fail("unterminated construct");
    pos_ = e + end.size();
  }

  void skip_misc() {
    while (true) {
      skip_space();
      if (starts("<!--")) {
        skip_until("-->");
      } else if (starts("<?")) {
        skip_until("?>");
      } else {
        return;
      }
    }
  }

  void skip_prolog() {
    if (starts("\xEF\xBB\xBF")) pos_ += 3;
    while (true) {
      skip_misc();
      if (starts("<!DOCTYPE") || starts("<!doctype")) {
        int depth = 0;
        while (pos_ < s_.size()) {
          const char c = s_[pos_++];
          if (c == '[') ++depth;
          if (c == ']') --depth;
          if (c == '>' && depth <= 0) break;
        }
      } else {
        return;
      }
    }
  }

  std::string name() {
    if (pos_ >= s_.size() || !is_name_start(s_[pos_])) fail("expected name");
    const auto start = pos_;
    while (pos_ < s_.size() && is_name_char(s_[pos_])) ++pos_;
    return std::string(s_.substr(start, pos_ - start));
  }

  std::string char_data(std::string_view raw) {
    // Entity references must be terminated.
    for (std::size_t i = 0; i < raw.size(); ++i) {
      if (raw[i] == '&' && raw.find(';', i) == std::string_view::npos) fail("unterminated entity reference");
    }
    return html::decode_entities(raw);
  }

  Element element() {
    ++pos_;  // '<'
    Element el;
    el.name = name();
    const auto colon = el.name.find(':');
    el.local_name = colon == std::string::npos ? el.name : el.name.substr(colon + 1);
    while (true) {
      skip_space();
      if (pos_ >= s_.size()) fail("unterminated start tag");
      if (s_[pos_] == '/') {
        if (!starts("/>")) fail("expected '/>'");
        pos_ += 2;
        return el;
      }
      if (s_[pos_] == '>') {
        ++pos_;
        break;
      }
      auto attr_name = name();
      skip_space();
      if (pos_ >= s_.size() || s_[pos_] != '=') fail("expected '=' after attribute name");
      ++pos_;
      skip_space();
      if (pos_ >= s_.size() || (s_[pos_] != '"' && s_[pos_] != '\'')) fail("expected quoted attribute value");
      const char q = s_[pos_++];
      const auto end = s_.find(q, pos_);
      if (end == std::string_view::npos) fail("unterminated attribute value");
      const auto raw = s_.substr(pos_, end - pos_);
      if (raw.find('<') != std::string_view::npos) fail("'<' in attribute value");
      el.attrs.emplace_back(std::move(attr_name), char_data(raw));
      pos_ = end + 1;
    }
    // Content.
    while (true) {
      if (pos_ >= s_.size()) fail("unterminated element <" + el.name + ">");
      if (starts("</")) {
        const auto tag_start = pos_;
        pos_ += 2;
        const auto close = name();
        if (close != el.name) fail_at(tag_start, "mismatched end tag </" + close + "> for <" + el.name + ">");
        skip_space();
        if (pos_ >= s_.size() || s_[pos_] != '>') fail("expected '>'");
        ++pos_;
        return el;
      }
      if (starts("<!--")) {
        skip_until("-->");
      } else if (starts("<![CDATA[")) {
        pos_ += 9;
        const auto end = s_.find("]]>", pos_);
        if (end == std::string_view::npos) fail("unterminated CDATA section");
        el.text.append(s_.substr(pos_, end - pos_));
        pos_ = end + 3;
      } else if (starts("<?")) {
        skip_until("?>");
      } else if (s_[pos_] == '<') {
        el.children.push_back(element());
      } else {
        const auto end = s_.find('<', pos_);
        const auto stop = end == std::string_view::npos ? s_.size() : end;
        el.text += char_data(s_.substr(pos_, stop - pos_));
        pos_ = stop;
      }
    }
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

}  // namespace

const std::string* Element::attr(std::string_view n) const {
  for (const auto& [k, v] : attrs) {
    if (k == n) return &v;
  }
  return nullptr;
}

const Element* Element::child(std::string_view local) const {
  for (const auto& c : children) {
    if (c.local_name == local) return &c;
  }
  return nullptr;
}

Element parse(std::string_view doc) { return Parser(doc).document(); }

}  // namespace synth::xml
