#pragma once

#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "synth/corpus.hpp"
#include "synth/date.hpp"
#include "synth/http.hpp"

namespace synth::ingest {

enum class DiscoveredVia { rss, homepage };
std::string_view to_string(DiscoveredVia v);

struct CrawlPolicy {
  std::chrono::milliseconds per_domain_min_interval{1000};
  std::string user_agent = "synthnews-crawler/1.0 (+research; contact via site operator)";
  bool obey_robots = true;
  std::chrono::milliseconds timeout{30000};
  int max_retries = 3;  // total attempts per URL
  std::chrono::milliseconds backoff_base{500};
  std::size_t max_body_bytes = 8u << 20;

  void validate() const;
};

struct FetchJob {
  std::string domain;
  std::string url;
  DiscoveredVia discovered_via = DiscoveredVia::homepage;
  Timestamp scheduled_at{};
  int attempts = 0;
  std::optional<Date> feed_date;
};

// <link rel="alternate" type="application/rss+xml|atom+xml|..."> targets,
// resolved and deduplicated in document order.
std::vector<std::string> discover_feeds(std::string_view homepage_html, std::string_view base_url);

struct FeedEntry {
  std::string url;
  std::optional<Date> published_at;
  std::optional<std::string> title;
};

// RSS 2.0, RSS 1.0 (RDF) and Atom. Atom entries use <published>, falling back
// to <updated>. Throws synth::ParseError naming the offset on malformed XML.
std::vector<FeedEntry> parse_feed(std::string_view feed_xml);

// Same-site anchors on today's homepage that were not present yesterday, in
// document order, normalized. The homepage itself is never returned.
std::vector<std::string> diff_homepage_links(std::string_view today_html,
                                             const std::set<std::string>& yesterday,
                                             std::string_view base_url);

// All same-site anchor targets on a page, normalized, first-seen order.
std::vector<std::string> same_site_links(std::string_view html, std::string_view base_url);

class RobotsRules {
 public:
  RobotsRules() = default;
  static RobotsRules parse(std::string_view robots_txt, std::string_view user_agent);
  static RobotsRules allow_all() { return {}; }
  static RobotsRules disallow_all();

  // Longest matching rule wins; Allow wins ties. `*` and `$` are honored.
  bool allowed(std::string_view path_and_query) const;

 private:
  struct Rule {
    std::string pattern;
    bool allow;
  };
  std::vector<Rule> rules_;
};

// Per-domain token: one request in flight per domain, and each request
// starts at least `interval` after the previous one on that domain finished.
// Spacing from completion keeps the gap intact as seen by the server even when
// a request is slow to arrive. Thread-safe.
class DomainRateLimiter {
 public:
  using Clock = std::chrono::steady_clock;
  explicit DomainRateLimiter(std::chrono::milliseconds interval);

  class Slot {
   public:
    Slot(DomainRateLimiter* owner, std::string domain) : owner_(owner), domain_(std::move(domain)) {}
    Slot(Slot&& other) noexcept : owner_(std::exchange(other.owner_, nullptr)), domain_(std::move(other.domain_)) {}
    Slot(const Slot&) = delete;
    Slot& operator=(const Slot&) = delete;
    Slot& operator=(Slot&&) = delete;
    ~Slot() {
      if (owner_) owner_->release(domain_);
    }

   private:
    DomainRateLimiter* owner_;
    std::string domain_;
  };

  // Blocks until the domain's token is free and the interval has elapsed.
  Slot acquire(const std::string& domain);

 private:
  struct State {
    bool busy = false;
    std::optional<Clock::time_point> last_end;
  };
  void release(const std::string& domain);

  std::chrono::milliseconds interval_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::map<std::string, State> state_;
};

class Fetcher {
 public:
  virtual ~Fetcher() = default;
  // Throws RemoteUnavailable on transport failure or timeout.
  virtual http::Response get(const std::string& url, const CrawlPolicy& policy) = 0;
};

class HttpFetcher : public Fetcher {
 public:
  explicit HttpFetcher(std::string connect_to = {}) : connect_to_(std::move(connect_to)) {}
  http::Response get(const std::string& url, const CrawlPolicy& policy) override;

 private:
  std::string connect_to_;
};

// Serves <root>/<host>/<path> from disk; directories map to index.html, a
// query string is appended to the file name as "?query". Missing files are
// 404.
class FixtureFetcher : public Fetcher {
 public:
  explicit FixtureFetcher(std::filesystem::path root) : root_(std::move(root)) {}
  http::Response get(const std::string& url, const CrawlPolicy& policy) override;

 private:
  std::filesystem::path root_;
};

struct FetchOutcome {
  std::string url;
  int status = 0;
  std::string body;
  std::string content_type;
  int attempts = 0;
  bool ok = false;
  bool skipped = false;  // robots-disallowed
  bool truncated = false;
  std::string reason;
};

// Rate-limited, robots-aware, retrying client shared by all crawl workers.
class PoliteClient {
 public:
  PoliteClient(Fetcher& fetcher, CrawlPolicy policy);

  FetchOutcome fetch(const std::string& url);
  const CrawlPolicy& policy() const { return policy_; }

 private:
  const RobotsRules& robots_for(const std::string& origin, const std::string& domain_key);
  FetchOutcome fetch_unchecked(const std::string& url, const std::string& domain_key);

  Fetcher& fetcher_;
  CrawlPolicy policy_;
  DomainRateLimiter limiter_;
  std::mutex robots_mu_;
  std::map<std::string, std::shared_future<std::shared_ptr<const RobotsRules>>> robots_;
};

struct CrawlOptions {
  std::filesystem::path state_dir;
  std::filesystem::path out_dir;
  std::string scheme = "https";
  int jobs = 4;
  std::optional<Timestamp> now;  // fixed fetch time for reproducible runs
};

struct DomainReport {
  std::string domain;
  std::size_t feeds = 0;
  std::size_t discovered = 0;
  std::size_t fetched = 0;
  std::size_t failed = 0;
  std::size_t skipped = 0;
  std::vector<std::string> errors;
};

// One daily crawl pass: per site, discover feeds and new homepage links,
// fetch unseen article URLs, append raw pages to <out_dir>/<domain>.jsonl and
// update <state_dir>/<domain>.json.
std::vector<DomainReport> crawl(const std::vector<SiteRecord>& sites, PoliteClient& client,
                                const CrawlOptions& options);

// One fetched page as stored under articles_raw/.
struct RawPage {
  std::string url;
  std::string domain;
  DiscoveredVia discovered_via = DiscoveredVia::homepage;
  std::optional<Date> feed_date;
  Timestamp fetched_at{};
  int status = 0;
  std::string content_type;
  std::string html;
};

std::string raw_page_to_json(const RawPage& p);
RawPage raw_page_from_json(std::string_view line);
// Reads every *.jsonl file of a directory in lexicographic file order.
std::vector<RawPage> load_raw_pages(const std::filesystem::path& dir);

}  // namespace synth::ingest
