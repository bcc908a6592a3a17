#include "synth/html.hpp"

#include <algorithm>
#include <array>
#include <unordered_map>

#include "synth/text.hpp"

namespace synth::html {

namespace {

constexpr std::array<std::string_view, 16> kVoid = {
    "area", "base", "br", "col", "embed", "hr", "img", "input",
    "link", "meta", "param", "source", "track", "wbr", "keygen", "frame"};

constexpr std::array<std::string_view, 30> kClosesP = {
    "address", "article", "aside", "blockquote", "details", "div",    "dl",     "fieldset",
    "figure",  "footer",  "form",  "h1",         "h2",      "h3",     "h4",     "h5",
    "h6",      "header",  "hr",    "main",       "nav",     "ol",     "p",      "pre",
    "section", "table",   "ul",    "figcaption", "menu",    "dialog"};

template <std::size_t N>
bool contains(const std::array<std::string_view, N>& set, std::string_view v) {
  return std::find(set.begin(), set.end(), v) != set.end();
}

bool is_name_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' ||
         c == '_' || c == ':' || c == '.';
}

const std::unordered_map<std::string_view, char32_t>& named_entities() {
  static const std::unordered_map<std::string_view, char32_t> kMap = {
      {"amp", '&'},      {"lt", '<'},       {"gt", '>'},       {"quot", '"'},     {"apos", '\''},
      {"nbsp", ' '},     {"mdash", 0x2014}, {"ndash", 0x2013}, {"hellip", 0x2026}, {"rsquo", 0x2019},
      {"lsquo", 0x2018}, {"ldquo", 0x201C}, {"rdquo", 0x201D}, {"copy", 0xA9},     {"reg", 0xAE},
      {"trade", 0x2122}, {"eacute", 0xE9},  {"egrave", 0xE8},  {"ecirc", 0xEA},    {"agrave", 0xE0},
      {"aacute", 0xE1},  {"acirc", 0xE2},   {"ccedil", 0xE7},  {"iacute", 0xED},   {"oacute", 0xF3},
      {"uacute", 0xFA},  {"ntilde", 0xF1},  {"ouml", 0xF6},    {"uuml", 0xFC},     {"auml", 0xE4},
      {"szlig", 0xDF},   {"middot", 0xB7},  {"bull", 0x2022},  {"laquo", 0xAB},    {"raquo", 0xBB},
      {"euro", 0x20AC},  {"pound", 0xA3},   {"deg", 0xB0},     {"times", 0xD7},    {"shy", 0xAD},
      {"zwj", 0x200D},   {"zwnj", 0x200C},  {"thinsp", 0x2009}, {"ensp", 0x2002},  {"emsp", 0x2003},
  };
  return kMap;
}

// windows-1252 code points for bytes 0x80..0x9F.
constexpr std::array<char32_t, 32> kCp1252High = {
    0x20AC, 0xFFFD, 0x201A, 0x0192, 0x201E, 0x2026, 0x2020, 0x2021, 0x02C6, 0x2030, 0x0160,
    0x2039, 0x0152, 0xFFFD, 0x017D, 0xFFFD, 0xFFFD, 0x2018, 0x2019, 0x201C, 0x201D, 0x2022,
    0x2013, 0x2014, 0x02DC, 0x2122, 0x0161, 0x203A, 0x0153, 0xFFFD, 0x017E, 0x0178};

std::string charset_from(std::string_view s) {
  const auto lower = to_lower_ascii(s);
  const auto pos = lower.find("charset");
  if (pos == std::string::npos) return {};
  auto i = pos + 7;
  while (i < lower.size() && (lower[i] == ' ' || lower[i] == '=' || lower[i] == '"' || lower[i] == '\'')) ++i;
  const auto start = i;
  while (i < lower.size() && (is_name_char(lower[i]))) ++i;
  return lower.substr(start, i - start);
}

class Builder {
 public:
  explicit Builder(std::vector<Node>& nodes) : nodes_(nodes) {
    nodes_.push_back(Node{"#root", {}, {}, -1, {}});
    stack_.push_back(0);
  }

  void text(std::string_view raw, bool decode) {
    if (raw.empty()) return;
    std::string t = decode ? decode_entities(raw) : std::string(raw);
    auto& parent = nodes_[static_cast<std::size_t>(stack_.back())];
    if (!parent.children.empty()) {
      auto& last = nodes_[static_cast<std::size_t>(parent.children.back())];
      if (last.is_text()) {
        last.text += t;
        return;
      }
    }
    add(Node{"", {}, std::move(t), stack_.back(), {}});
  }

  void start(std::string tag, std::vector<std::pair<std::string, std::string>> attrs, bool self_closing) {
    if (contains(kClosesP, tag)) close_if_open("p", {"div", "article", "section", "td", "li", "blockquote"});
    if (tag == "li") close_if_open("li", {"ul", "ol", "menu"});
    if (tag == "dt" || tag == "dd") {
      close_if_open("dt", {"dl"});
      close_if_open("dd", {"dl"});
    }
    if (tag == "tr") close_if_open("tr", {"table", "tbody", "thead", "tfoot"});
    if (tag == "td" || tag == "th") {
      close_if_open("td", {"tr", "table"});
      close_if_open("th", {"tr", "table"});
    }
    if (tag == "option") close_if_open("option", {"select", "datalist"});
    const bool is_void = contains(kVoid, tag) || self_closing;
    const int id = add(Node{std::move(tag), std::move(attrs), {}, stack_.back(), {}});
    if (!is_void) stack_.push_back(id);
  }

  void end(std::string_view tag) {
    for (std::size_t i = stack_.size(); i-- > 1;) {
      if (nodes_[static_cast<std::size_t>(stack_[i])].tag == tag) {
        stack_.resize(i);
        return;
      }
    }
  }

 private:
  int add(Node n) {
    const int id = static_cast<int>(nodes_.size());
    const int parent = n.parent;
    nodes_.push_back(std::move(n));
    nodes_[static_cast<std::size_t>(parent)].children.push_back(id);
    return id;
  }

  // Closes `tag` when it is open above the nearest of `scope`.
  void close_if_open(std::string_view tag, std::initializer_list<std::string_view> scope) {
    for (std::size_t i = stack_.size(); i-- > 1;) {
      const auto& t = nodes_[static_cast<std::size_t>(stack_[i])].tag;
      if (t == tag) {
        stack_.resize(i);
        return;
      }
      if (std::find(scope.begin(), scope.end(), t) != scope.end()) return;
    }
  }

  std::vector<Node>& nodes_;
  std::vector<int> stack_;
};

}  // namespace

const std::string* Node::attr(std::string_view name) const {
  for (const auto& [k, v] : attrs) {
    if (k == name) return &v;
  }
  return nullptr;
}

void Document::walk(int from, const std::function<bool(int)>& visit) const {
  std::vector<int> stack{from};
  while (!stack.empty()) {
    const int i = stack.back();
    stack.pop_back();
    if (!visit(i)) continue;
    const auto& ch = node(i).children;
    for (auto it = ch.rbegin(); it != ch.rend(); ++it) stack.push_back(*it);
  }
}

std::vector<int> Document::find_all(std::string_view tag) const {
  std::vector<int> out;
  walk(root(), [&](int i) {
    if (node(i).tag == tag) out.push_back(i);
    return true;
  });
  return out;
}

std::string Document::text_of(int i) const {
  std::string raw;
  walk(i, [&](int k) {
    const auto& n = node(k);
    if (n.tag == "script" || n.tag == "style") return false;
    if (n.is_text()) {
      raw += n.text;
    } else if (n.tag == "br") {
      raw += ' ';
    }
    return true;
  });
  return collapse_whitespace(raw);
}

bool Document::has_ancestor(int i, std::string_view tag) const {
  for (int p = node(i).parent; p >= 0; p = node(p).parent) {
    if (node(p).tag == tag) return true;
  }
  return false;
}

Document parse(std::string_view s) {
  Document doc;
  Builder b(doc.nodes_);
  std::size_t i = 0;
  std::size_t text_start = 0;
  auto flush = [&](std::size_t end) {
    if (end > text_start) b.text(s.substr(text_start, end - text_start), true);
  };
  while (i < s.size()) {
    if (s[i] != '<') {
      ++i;
      continue;
    }
    if (s.compare(i, 4, "<!--") == 0) {
      flush(i);
      const auto end = s.find("-->", i + 4);
      i = end == std::string_view::npos ? s.size() : end + 3;
      text_start = i;
      continue;
    }
    if (i + 1 < s.size() && (s[i + 1] == '!' || s[i + 1] == '?')) {
      flush(i);
      if (s.compare(i, 9, "<![CDATA[") == 0) {
        const auto end = s.find("]]>", i + 9);
        const auto stop = end == std::string_view::npos ? s.size() : end;
        b.text(s.substr(i + 9, stop - i - 9), false);
        i = end == std::string_view::npos ? s.size() : end + 3;
      } else {
        const auto end = s.find('>', i);
        i = end == std::string_view::npos ? s.size() : end + 1;
      }
      text_start = i;
      continue;
    }
    const bool closing = i + 1 < s.size() && s[i + 1] == '/';
    std::size_t j = i + (closing ? 2 : 1);
    const auto name_start = j;
    while (j < s.size() && is_name_char(s[j])) ++j;
    if (j == name_start || !((s[name_start] >= 'a' && s[name_start] <= 'z') ||
                             (s[name_start] >= 'A' && s[name_start] <= 'Z'))) {
      ++i;  // literal '<'
      continue;
    }
    flush(i);
    std::string tag = to_lower_ascii(s.substr(name_start, j - name_start));
    std::vector<std::pair<std::string, std::string>> attrs;
    bool self_closing = false;
    // Attributes.
    while (j < s.size() && s[j] != '>') {
      if (is_ascii_space(s[j])) {
        ++j;
        continue;
      }
      if (s[j] == '/') {
        self_closing = j + 1 < s.size() && s[j + 1] == '>';
        ++j;
        continue;
      }
      const auto an_start = j;
      while (j < s.size() && !is_ascii_space(s[j]) && s[j] != '=' && s[j] != '>' &&
             !(s[j] == '/' && j + 1 < s.size() && s[j + 1] == '>')) {
        ++j;
      }
      std::string name = to_lower_ascii(s.substr(an_start, j - an_start));
      while (j < s.size() && is_ascii_space(s[j])) ++j;
      std::string value;
      if (j < s.size() && s[j] == '=') {
        ++j;
        while (j < s.size() && is_ascii_space(s[j])) ++j;
        if (j < s.size() && (s[j] == '"' || s[j] == '\'')) {
          const char q = s[j];
          const auto end = s.find(q, j + 1);
          const auto stop = end == std::string_view::npos ? s.size() : end;
          value = decode_entities(s.substr(j + 1, stop - j - 1));
          j = end == std::string_view::npos ? s.size() : end + 1;
        } else {
          const auto v_start = j;
          while (j < s.size() && !is_ascii_space(s[j]) && s[j] != '>') ++j;
          value = decode_entities(s.substr(v_start, j - v_start));
        }
      }
      if (!name.empty() && !closing) attrs.emplace_back(std::move(name), std::move(value));
      if (an_start == j) ++j;
    }
    i = j < s.size() ? j + 1 : s.size();
    text_start = i;
    if (closing) {
      b.end(tag);
      continue;
    }
    const bool raw = tag == "script" || tag == "style" || tag == "textarea" || tag == "title";
    b.start(tag, std::move(attrs), self_closing);
    if (raw && !self_closing) {
      const std::string closer = "</" + tag;
      std::size_t k = i;
      std::size_t end = std::string_view::npos;
      while (k < s.size()) {
        const auto lt = s.find("</", k);
        if (lt == std::string_view::npos) break;
        if (starts_with_icase(s.substr(lt), closer)) {
          end = lt;
          break;
        }
        k = lt + 2;
      }
      const auto stop = end == std::string_view::npos ? s.size() : end;
      b.text(s.substr(i, stop - i), tag == "textarea" || tag == "title");
      b.end(tag);
      const auto gt = end == std::string_view::npos ? std::string_view::npos : s.find('>', end);
      i = gt == std::string_view::npos ? s.size() : gt + 1;
      text_start = i;
    }
  }
  flush(s.size());
  return doc;
}

std::string decode_entities(std::string_view s) {
  if (s.find('&') == std::string_view::npos) return std::string(s);
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size();) {
    if (s[i] != '&') {
      out.push_back(s[i++]);
      continue;
    }
    const auto semi = s.find(';', i + 1);
    if (semi == std::string_view::npos || semi - i > 12) {
      out.push_back(s[i++]);
      continue;
    }
    const auto body = s.substr(i + 1, semi - i - 1);
    char32_t cp = 0;
    bool ok = false;
    if (!body.empty() && body[0] == '#') {
      const bool hex = body.size() > 1 && (body[1] == 'x' || body[1] == 'X');
      const auto digits = body.substr(hex ? 2 : 1);
      ok = !digits.empty();
      for (char c : digits) {
        int v;
        if (c >= '0' && c <= '9') v = c - '0';
        else if (hex && c >= 'a' && c <= 'f') v = c - 'a' + 10;
        else if (hex && c >= 'A' && c <= 'F') v = c - 'A' + 10;
        else { ok = false; break; }
        cp = cp * (hex ? 16 : 10) + static_cast<char32_t>(v);
        if (cp > 0x10FFFF) { ok = false; break; }
      }
      if (ok && (cp == 0 || (cp >= 0xD800 && cp <= 0xDFFF))) cp = 0xFFFD;
      if (ok && cp >= 0x80 && cp <= 0x9F) cp = kCp1252High[cp - 0x80];
    } else {
      const auto& map = named_entities();
      if (auto it = map.find(body); it != map.end()) {
        cp = it->second;
        ok = true;
      }
    }
    if (ok) {
      utf8_append(out, cp);
      i = semi + 1;
    } else {
      out.push_back(s[i++]);
    }
  }
  return out;
}

bool is_valid_utf8(std::string_view s) {
  const auto decoded = utf8_decode(s);
  if (std::find(decoded.begin(), decoded.end(), char32_t{0xFFFD}) == decoded.end()) return true;
  // U+FFFD may also be encoded literally.
  return utf8_encode(decoded) == s;
}

std::string to_utf8(std::string_view bytes, std::string_view content_type) {
  if (bytes.substr(0, 3) == "\xEF\xBB\xBF") return std::string(bytes.substr(3));
  std::string charset = charset_from(content_type);
  if (charset.empty()) {
    const auto head = to_lower_ascii(bytes.substr(0, 2048));
    for (std::size_t pos = head.find("<meta"); pos != std::string::npos; pos = head.find("<meta", pos + 5)) {
      const auto end = head.find('>', pos);
      charset = charset_from(head.substr(pos, end == std::string::npos ? std::string::npos : end - pos));
      if (!charset.empty()) break;
    }
  }
  const bool single_byte = charset == "iso-8859-1" || charset == "latin1" || charset == "windows-1252" ||
                           charset == "cp1252" || charset == "us-ascii" || charset == "iso-8859-15";
  if (!single_byte && is_valid_utf8(bytes)) return std::string(bytes);
  std::string out;
  out.reserve(bytes.size() + bytes.size() / 4);
  for (unsigned char c : bytes) {
    if (c < 0x80) out.push_back(static_cast<char>(c));
    else if (c < 0xA0) utf8_append(out, kCp1252High[c - 0x80]);
    else utf8_append(out, c);
  }
  return out;
}

}  // namespace synth::html
