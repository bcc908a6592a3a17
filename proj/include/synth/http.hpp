#pragma once

#include <chrono>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace synth::http {

struct Response {
  int status = 0;
  std::string body;
  std::string content_type;
};

struct Options {
  std::chrono::milliseconds timeout{30000};
  std::string user_agent = "synthnews/1.0";
  // "host:port" to connect to instead of the URL's host; the Host header keeps
  // the URL's authority.
  std::string connect_to;
  std::vector<std::pair<std::string, std::string>> headers;
};

// Transport failures (connection refused, timeout) raise RemoteUnavailable.
// Any HTTP status is returned as-is.
Response get(const std::string& url, const Options& options);
Response post(const std::string& url, const std::string& body, const std::string& content_type,
              const Options& options);

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds backoff{200};
};

// POSTs a JSON document and parses the JSON reply. Transport errors and
// non-2xx replies are retried with exponential backoff, then surface as
// RemoteUnavailable; an unparseable body raises ProtocolError.
nlohmann::json post_json(const std::string& url, const nlohmann::json& body, const Options& options,
                         const RetryPolicy& retry = {});

}  // namespace synth::http
