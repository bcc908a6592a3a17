#include "httplib.h"

#include "synth/http.hpp"

#include <thread>

#include "synth/error.hpp"
#include "synth/url.hpp"

namespace synth::http {

namespace {

Response send(const std::string& method, const std::string& url_str, const std::string* body,
              const std::string& content_type, const Options& options) {
  std::string reason;
  const auto url = parse_url(url_str, &reason);
  if (!url) throw Error("cannot request '" + url_str + "': " + reason);
  std::string target = url->scheme + "://";
  target += options.connect_to.empty() ? url->authority() : options.connect_to;
  httplib::Client client(target);
  const auto secs = options.timeout.count() / 1000;
  const auto usecs = (options.timeout.count() % 1000) * 1000;
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  client.set_follow_location(false);
  if (url->scheme == "https") client.enable_server_certificate_verification(true);

  httplib::Headers headers;
  headers.emplace("User-Agent", options.user_agent);
  if (!options.connect_to.empty()) headers.emplace("Host", url->authority());
  for (const auto& [k, v] : options.headers) headers.emplace(k, v);

  const auto path = url->path_and_query();
  httplib::Result res = method == "GET" ? client.Get(path, headers)
                                        : client.Post(path, headers, *body, content_type);
  if (!res) {
    throw RemoteUnavailable(method + " " + url_str + " failed: " + httplib::to_string(res.error()));
  }
  Response out;
  out.status = res->status;
  out.body = std::move(res->body);
  out.content_type = res->get_header_value("Content-Type");
  return out;
}

}  // namespace

Response get(const std::string& url, const Options& options) {
  return send("GET", url, nullptr, {}, options);
}

Response post(const std::string& url, const std::string& body, const std::string& content_type,
              const Options& options) {
  return send("POST", url, &body, content_type, options);
}

nlohmann::json post_json(const std::string& url, const nlohmann::json& body, const Options& options,
                         const RetryPolicy& retry) {
  const auto payload = body.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
  std::string last_error;
  auto delay = retry.backoff;
  for (int attempt = 1; attempt <= std::max(1, retry.max_attempts); ++attempt) {
    try {
      const auto res = post(url, payload, "application/json", options);
      if (res.status >= 200 && res.status < 300) {
        try {
          return nlohmann::json::parse(res.body);
        } catch (const nlohmann::json::exception& e) {
          throw ProtocolError("invalid JSON from " + url + ": " + e.what());
        }
      }
      last_error = "HTTP " + std::to_string(res.status) + " from " + url;
    } catch (const RemoteUnavailable& e) {
      last_error = e.what();
    }
    if (attempt < retry.max_attempts) {
      std::this_thread::sleep_for(delay);
      delay *= 2;
    }
  }
  throw RemoteUnavailable(last_error);
}

}  // namespace synth::http
