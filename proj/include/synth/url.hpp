#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace synth {

struct Url {
  std::string scheme;  // lowercase
  std::string host;    // lowercase
  std::string port;    // empty when absent
  std::string path;    // "/" at least for http(s)
  std::string query;   // without '?'
  std::string fragment;
  bool has_query = false;

  std::string authority() const { return port.empty() ? host : host + ":" + port; }
  std::string origin() const { return scheme + "://" + authority(); }
  std::string path_and_query() const { return has_query ? path + "?" + query : path; }
  std::string str() const;
};

// Parses an absolute URL. Returns nullopt and sets `reason` on failure.
std::optional<Url> parse_url(std::string_view raw, std::string* reason = nullptr);

// RFC 3986 reference resolution. Returns nullopt for unusable references
// (javascript:, mailto:, empty after resolution).
std::optional<std::string> resolve_url(const Url& base, std::string_view ref);

// Canonical form used for joins: lowercase scheme and host, default port
// dropped, fragment removed, tracking parameters (utm_*, fbclid, gclid)
// removed, remaining parameters sorted, trailing slash removed on non-root
// paths. Throws synth::Error naming the reason for malformed input.
std::string normalize_url(std::string_view raw);

// Crude registrable-domain approximation: last two labels, or last three
// when the second-level label is a common public suffix part (co.uk, com.au).
std::string registrable_domain(std::string_view host);

// True when host == domain or host is a subdomain of domain.
bool host_within(std::string_view host, std::string_view domain);

}  // namespace synth
