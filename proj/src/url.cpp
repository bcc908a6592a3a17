#include "synth/url.hpp"

#include <algorithm>
#include <array>
#include <vector>

#include "synth/error.hpp"
#include "synth/text.hpp"

namespace synth {

namespace {

bool is_scheme_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '+' ||
         c == '-' || c == '.';
}

std::string remove_dot_segments(std::string_view path) {
  std::string input(path);
  std::string output;
  auto pop_segment = [&output] {
    const auto slash = output.rfind('/');
    output.erase(slash == std::string::npos ? 0 : slash);
  };
  while (!input.empty()) {
    if (input.rfind("../", 0) == 0) {
      input.erase(0, 3);
    } else if (input.rfind("./", 0) == 0) {
      input.erase(0, 2);
    } else if (input.rfind("/./", 0) == 0) {
      input.erase(0, 2);
    } else if (input == "/.") {
      input = "/";
    } else if (input.rfind("/../", 0) == 0) {
      input.erase(0, 3);
      pop_segment();
    } else if (input == "/..") {
      input = "/";
      pop_segment();
    } else if (input == "." || input == "..") {
      input.clear();
    } else {
      const auto next = input.find('/', input[0] == '/' ? 1 : 0);
      output += input.substr(0, next);
      input.erase(0, next);
    }
  }
  return output;
}

bool is_tracking_param(std::string_view key) {
  const auto k = to_lower_ascii(key);
  return k.rfind("utm_", 0) == 0 || k == "fbclid" || k == "gclid";
}

bool is_default_port(std::string_view scheme, std::string_view port) {
  return (scheme == "http" && port == "80") || (scheme == "https" && port == "443");
}

}  // namespace

std::string Url::str() const {
  std::string out = scheme + "://" + authority() + path;
  if (has_query) out += "?" + query;
  if (!fragment.empty()) out += "#" + fragment;
  return out;
}

std::optional<Url> parse_url(std::string_view raw, std::string* reason) {
  auto fail = [&](const char* why) -> std::optional<Url> {
    if (reason) *reason = why;
    return std::nullopt;
  };
  const auto s = trim(raw);
  if (s.empty()) return fail("empty URL");
  for (char c : s) {
    if (static_cast<unsigned char>(c) < 0x21) return fail("URL contains whitespace or control characters");
  }
  const auto colon = s.find(':');
  if (colon == std::string_view::npos || colon == 0) return fail("missing scheme");
  for (std::size_t i = 0; i < colon; ++i) {
    if (!is_scheme_char(s[i])) return fail("invalid scheme");
  }
  if (s.substr(colon, 3) != "://") return fail("not a hierarchical URL");
  Url url;
  url.scheme = to_lower_ascii(s.substr(0, colon));
  auto rest = s.substr(colon + 3);
  const auto auth_end = rest.find_first_of("/?#");
  auto authority = rest.substr(0, auth_end);
  rest = auth_end == std::string_view::npos ? std::string_view{} : rest.substr(auth_end);
  if (const auto at = authority.rfind('@'); at != std::string_view::npos) {
    authority = authority.substr(at + 1);
  }
  std::string_view host = authority;
  if (!authority.empty() && authority[0] == '[') {
    const auto close = authority.find(']');
    if (close == std::string_view::npos) return fail("unterminated IPv6 literal");
    host = authority.substr(0, close + 1);
    if (close + 1 < authority.size()) {
      if (authority[close + 1] != ':') return fail("invalid authority");
      url.port = std::string(authority.substr(close + 2));
    }
  } else if (const auto pc = authority.rfind(':'); pc != std::string_view::npos) {
    host = authority.substr(0, pc);
    url.port = std::string(authority.substr(pc + 1));
  }
  if (host.empty()) return fail("missing host");
  for (char c : url.port) {
    if (c < '0' || c > '9') return fail("invalid port");
  }
  url.host = to_lower_ascii(host);
  if (url.host.back() == '.') url.host.pop_back();
  if (url.host.empty()) return fail("missing host");
  if (const auto hash = rest.find('#'); hash != std::string_view::npos) {
    url.fragment = std::string(rest.substr(hash + 1));
    rest = rest.substr(0, hash);
  }
  if (const auto q = rest.find('?'); q != std::string_view::npos) {
    url.query = std::string(rest.substr(q + 1));
    url.has_query = true;
    rest = rest.substr(0, q);
  }
  url.path = rest.empty() ? "/" : std::string(rest);
  return url;
}

std::optional<std::string> resolve_url(const Url& base, std::string_view ref_raw) {
  const auto ref = trim(ref_raw);
  if (ref.empty()) return std::nullopt;
  // Absolute reference with scheme.
  const auto colon = ref.find(':');
  const auto first_delim = ref.find_first_of("/?#");
  if (colon != std::string_view::npos && (first_delim == std::string_view::npos || colon < first_delim)) {
    bool scheme_ok = colon > 0;
    for (std::size_t i = 0; i < colon && scheme_ok; ++i) scheme_ok = is_scheme_char(ref[i]);
    if (scheme_ok) {
      const auto scheme = to_lower_ascii(ref.substr(0, colon));
      if (scheme != "http" && scheme != "https") return std::nullopt;
      auto parsed = parse_url(ref);
      if (!parsed) return std::nullopt;
      parsed->path = remove_dot_segments(parsed->path);
      return parsed->str();
    }
  }
  Url out = base;
  out.fragment.clear();
  if (ref.substr(0, 2) == "//") {
    auto parsed = parse_url(base.scheme + ":" + std::string(ref));
    if (!parsed) return std::nullopt;
    parsed->path = remove_dot_segments(parsed->path);
    return parsed->str();
  }
  std::string_view r = ref;
  std::string fragment;
  if (const auto hash = r.find('#'); hash != std::string_view::npos) {
    fragment = std::string(r.substr(hash + 1));
    r = r.substr(0, hash);
  }
  std::optional<std::string> query;
  if (const auto q = r.find('?'); q != std::string_view::npos) {
    query = std::string(r.substr(q + 1));
    r = r.substr(0, q);
  }
  if (r.empty()) {
    if (query) {
      out.query = *query;
      out.has_query = true;
    }
  } else {
    if (r[0] == '/') {
      out.path = remove_dot_segments(r);
    } else {
      const auto slash = base.path.rfind('/');
      const std::string dir = slash == std::string::npos ? "/" : base.path.substr(0, slash + 1);
      out.path = remove_dot_segments(dir + std::string(r));
    }
    out.query = query.value_or("");
    out.has_query = query.has_value();
  }
  out.fragment = fragment;
  return out.str();
}

std::string normalize_url(std::string_view raw) {
  std::string reason;
  auto url = parse_url(raw, &reason);
  if (!url) throw Error("malformed URL '" + std::string(raw) + "': " + reason);
  if (is_default_port(url->scheme, url->port)) url->port.clear();
  url->fragment.clear();
  url->path = remove_dot_segments(url->path);
  if (url->path.empty()) url->path = "/";
  while (url->path.size() > 1 && url->path.back() == '/') url->path.pop_back();

  std::vector<std::string_view> params;
  std::string_view q = url->query;
  while (!q.empty()) {
    const auto amp = q.find('&');
    const auto part = q.substr(0, amp);
    if (!part.empty()) {
      const auto key = part.substr(0, part.find('='));
      if (!is_tracking_param(key)) params.push_back(part);
    }
    if (amp == std::string_view::npos) break;
    q = q.substr(amp + 1);
  }
  std::sort(params.begin(), params.end());
  std::string query;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (i > 0) query += '&';
    query += params[i];
  }
  url->query = query;
  url->has_query = !query.empty();
  return url->str();
}

std::string registrable_domain(std::string_view host_raw) {
  std::string host = to_lower_ascii(host_raw);
  if (!host.empty() && host.back() == '.') host.pop_back();
  std::vector<std::string_view> labels;
  std::string_view h = host;
  while (true) {
    const auto dot = h.find('.');
    labels.push_back(h.substr(0, dot));
    if (dot == std::string_view::npos) break;
    h = h.substr(dot + 1);
  }
  if (labels.size() <= 2) return host;
  // IPv4 literal
  if (std::all_of(host.begin(), host.end(), [](char c) { return (c >= '0' && c <= '9') || c == '.'; })) {
    return host;
  }
  static constexpr std::array<std::string_view, 8> kSecondLevel = {"co", "com", "org", "net",
                                                                   "ac", "gov", "edu", "ne"};
  const auto tld = labels.back();
  const auto sld = labels[labels.size() - 2];
  std::size_t keep = 2;
  if (tld.size() == 2 && std::find(kSecondLevel.begin(), kSecondLevel.end(), sld) != kSecondLevel.end()) {
    keep = 3;
  }
  std::string out;
  for (std::size_t i = labels.size() - keep; i < labels.size(); ++i) {
    if (!out.empty()) out += '.';
    out += labels[i];
  }
  return out;
}

bool host_within(std::string_view host, std::string_view domain) {
  if (iequals(host, domain)) return true;
  return host.size() > domain.size() + 1 && host[host.size() - domain.size() - 1] == '.' &&
         iequals(host.substr(host.size() - domain.size()), domain);
}

}  // namespace synth
