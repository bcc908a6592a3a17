#include "synth/ingest.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <thread>
#include <unordered_set>

#include "json.hpp"

#include "synth/error.hpp"
#include "synth/html.hpp"
#include "synth/text.hpp"
#include "synth/url.hpp"
#include "synth/xml.hpp"

namespace synth::ingest {

using ojson = nlohmann::ordered_json;

std::string_view to_string(DiscoveredVia v) { return v == DiscoveredVia::rss ? "rss" : "homepage"; }

void CrawlPolicy::validate() const {
  if (per_domain_min_interval.count() <= 0) throw UsageError("per-domain interval must be positive");
  if (max_retries < 1) throw UsageError("max_retries must be at least 1");
  if (timeout.count() <= 0) throw UsageError("timeout must be positive");
}

namespace {

bool is_feed_type(std::string_view type) {
  const auto t = to_lower_ascii(trim(type.substr(0, type.find(';'))));
  return t == "application/rss+xml" || t == "application/atom+xml" || t == "application/rdf+xml" ||
         t == "application/rss" || t == "text/rss+xml";
}

bool rel_has(const std::string* rel, std::string_view token) {
  if (!rel) return false;
  for (auto part : split_whitespace(*rel)) {
    if (iequals(part, token)) return true;
  }
  return false;
}

// Effective base: <base href> when present and absolute.
Url document_base(const html::Document& doc, const Url& fallback) {
  for (int i : doc.find_all("base")) {
    if (const auto* href = doc.node(i).attr("href")) {
      if (auto resolved = resolve_url(fallback, *href)) {
        if (auto u = parse_url(*resolved)) return *u;
      }
    }
  }
  return fallback;
}

Url require_url(std::string_view base_url) {
  std::string reason;
  auto base = parse_url(base_url, &reason);
  if (!base) throw Error("invalid base URL '" + std::string(base_url) + "': " + reason);
  return *base;
}

std::optional<Date> entry_date(const xml::Element& item, std::initializer_list<std::string_view> fields) {
  for (auto f : fields) {
    if (const auto* el = item.child(f)) {
      if (auto ts = parse_any_timestamp(el->text)) return date_of(*ts);
    }
  }
  return std::nullopt;
}

std::optional<std::string> entry_title(const xml::Element& item) {
  if (const auto* t = item.child("title")) {
    auto s = collapse_whitespace(t->text);
    if (!s.empty()) return s;
  }
  return std::nullopt;
}

void collect_rss_items(const xml::Element& el, std::vector<FeedEntry>& out) {
  for (const auto& c : el.children) {
    if (c.local_name == "item") {
      FeedEntry e;
      if (const auto* link = c.child("link")) e.url = std::string(trim(link->text));
      if (e.url.empty()) {
        if (const auto* guid = c.child("guid")) {
          const auto* perma = guid->attr("isPermaLink");
          if (!perma || *perma != "false") e.url = std::string(trim(guid->text));
        }
      }
      if (e.url.empty()) continue;
      e.published_at = entry_date(c, {"pubDate", "date", "published", "updated"});
      e.title = entry_title(c);
      out.push_back(std::move(e));
    } else if (c.local_name == "channel") {
      collect_rss_items(c, out);
    }
  }
}

void collect_atom_entries(const xml::Element& feed, std::vector<FeedEntry>& out) {
  for (const auto& c : feed.children) {
    if (c.local_name != "entry") continue;
    FeedEntry e;
    for (const auto& l : c.children) {
      if (l.local_name != "link") continue;
      const auto* rel = l.attr("rel");
      const auto* href = l.attr("href");
      if (href && (!rel || *rel == "alternate")) {
        e.url = std::string(trim(*href));
        break;
      }
    }
    if (e.url.empty()) continue;
    e.published_at = entry_date(c, {"published", "updated"});
    e.title = entry_title(c);
    out.push_back(std::move(e));
  }
}

bool glob_match(std::string_view pattern, std::string_view path) {
  bool anchored = !pattern.empty() && pattern.back() == '$';
  if (anchored) pattern.remove_suffix(1);
  // Iterative wildcard match with backtracking on the last '*'.
  std::size_t p = 0, s = 0, star = std::string_view::npos, mark = 0;
  while (s < path.size()) {
    if (p < pattern.size() && pattern[p] == '*') {
      star = p++;
      mark = s;
    } else if (p < pattern.size() && pattern[p] == path[s]) {
      ++p;
      ++s;
    } else if (p == pattern.size() && !anchored) {
      return true;
    } else if (star != std::string_view::npos) {
      p = star + 1;
      s = ++mark;
    } else {
      return false;
    }
  }
  while (p < pattern.size() && pattern[p] == '*') ++p;
  return p == pattern.size();
}

std::string domain_key(const std::string& host) { return registrable_domain(host); }

struct DomainState {
  std::set<std::string> homepage_links;
  std::set<std::string> fetched;
};

DomainState load_state(const std::filesystem::path& path) {
  DomainState st;
  if (!std::filesystem::exists(path)) return st;
  const auto j = nlohmann::json::parse(read_file(path));
  for (const auto& u : j.value("homepage_links", nlohmann::json::array())) st.homepage_links.insert(u.get<std::string>());
  for (const auto& u : j.value("fetched_urls", nlohmann::json::array())) st.fetched.insert(u.get<std::string>());
  return st;
}

void save_state(const DomainState& st, const std::filesystem::path& path) {
  ojson j;
  j["homepage_links"] = st.homepage_links;
  j["fetched_urls"] = st.fetched;
  write_file(path, j.dump(1) + "\n");
}

std::string content_type_for(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".xml" || ext == ".rss") return "application/rss+xml";
  if (ext == ".atom") return "application/atom+xml";
  if (ext == ".txt") return "text/plain";
  if (ext == ".json") return "application/json";
  return "text/html; charset=utf-8";
}

}  // namespace

std::vector<std::string> discover_feeds(std::string_view homepage_html, std::string_view base_url) {
  const auto base = require_url(base_url);
  const auto doc = html::parse(homepage_html);
  const auto eff = document_base(doc, base);
  std::vector<std::string> feeds;
  std::unordered_set<std::string> seen;
  for (int i : doc.find_all("link")) {
    const auto& n = doc.node(i);
    const auto* type = n.attr("type");
    const auto* href = n.attr("href");
    if (!href || !type || !rel_has(n.attr("rel"), "alternate") || !is_feed_type(*type)) continue;
    auto resolved = resolve_url(eff, *href);
    if (resolved && seen.insert(*resolved).second) feeds.push_back(std::move(*resolved));
  }
  return feeds;
}

std::vector<FeedEntry> parse_feed(std::string_view feed_xml) {
  const auto root = xml::parse(feed_xml);
  std::vector<FeedEntry> out;
  if (root.local_name == "rss" || root.local_name == "RDF") {
    collect_rss_items(root, out);
  } else if (root.local_name == "feed") {
    collect_atom_entries(root, out);
  } else {
    throw ParseError("unsupported feed root element <" + root.name + "> at offset 0", 0);
  }
  return out;
}

std::vector<std::string> same_site_links(std::string_view html_text, std::string_view base_url) {
  const auto base = require_url(base_url);
  const auto doc = html::parse(html_text);
  const auto eff = document_base(doc, base);
  const auto site = registrable_domain(base.host);
  std::string home;
  try {
    home = normalize_url(base.origin() + "/");
  } catch (const Error&) {
  }
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (int i : doc.find_all("a")) {
    const auto* href = doc.node(i).attr("href");
    if (!href) continue;
    auto resolved = resolve_url(eff, *href);
    if (!resolved) continue;
    const auto u = parse_url(*resolved);
    if (!u || registrable_domain(u->host) != site) continue;
    std::string canon;
    try {
      canon = normalize_url(*resolved);
    } catch (const Error&) {
      continue;
    }
    if (canon == home) continue;
    if (seen.insert(canon).second) out.push_back(std::move(canon));
  }
  return out;
}

std::vector<std::string> diff_homepage_links(std::string_view today_html,
                                             const std::set<std::string>& yesterday,
                                             std::string_view base_url) {
  std::vector<std::string> out;
  for (auto& link : same_site_links(today_html, base_url)) {
    if (!yesterday.count(link)) out.push_back(std::move(link));
  }
  return out;
}

RobotsRules RobotsRules::disallow_all() {
  RobotsRules r;
  r.rules_.push_back({"/", false});
  return r;
}

RobotsRules RobotsRules::parse(std::string_view text, std::string_view user_agent) {
  const auto token = to_lower_ascii(user_agent.substr(0, user_agent.find_first_of("/ ")));
  std::vector<Rule> specific, wildcard;
  bool group_specific = false, group_wildcard = false, in_agents = false;
  bool any_specific = false;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(pos, end - pos);
    pos = end + 1;
    line = line.substr(0, line.find('#'));
    const auto colon = line.find(':');
    if (colon == std::string_view::npos) continue;
    const auto key = to_lower_ascii(trim(line.substr(0, colon)));
    const auto value = std::string(trim(line.substr(colon + 1)));
    if (key == "user-agent") {
      if (!in_agents) {
        group_specific = group_wildcard = false;
        in_agents = true;
      }
      const auto agent = to_lower_ascii(value);
      if (agent == "*") {
        group_wildcard = true;
      } else if (!token.empty() && token.find(agent) != std::string::npos) {
        group_specific = true;
        any_specific = true;
      }
      continue;
    }
    in_agents = false;
    if (key != "allow" && key != "disallow") continue;
    if (value.empty()) continue;
    const Rule rule{value, key == "allow"};
    if (group_specific) specific.push_back(rule);
    if (group_wildcard) wildcard.push_back(rule);
  }
  RobotsRules r;
  r.rules_ = any_specific ? specific : wildcard;
  return r;
}

bool RobotsRules::allowed(std::string_view path) const {
  std::size_t best_len = 0;
  bool verdict = true;
  bool matched = false;
  for (const auto& rule : rules_) {
    if (!glob_match(rule.pattern, path)) continue;
    const auto len = rule.pattern.size();
    if (!matched || len > best_len || (len == best_len && rule.allow)) {
      best_len = len;
      verdict = rule.allow;
      matched = true;
    }
  }
  return verdict;
}

DomainRateLimiter::DomainRateLimiter(std::chrono::milliseconds interval) : interval_(interval) {}

DomainRateLimiter::Slot DomainRateLimiter::acquire(const std::string& domain) {
  std::unique_lock lock(mu_);
  for (;;) {
    auto& st = state_[domain];
    if (!st.busy) {
      if (!st.last_end || Clock::now() >= *st.last_end + interval_) {
        st.busy = true;
        return Slot(this, domain);
      }
      cv_.wait_until(lock, *st.last_end + interval_);
    } else {
      cv_.wait(lock);
    }
  }
}

void DomainRateLimiter::release(const std::string& domain) {
  {
    std::lock_guard lock(mu_);
    auto& st = state_[domain];
    st.busy = false;
    st.last_end = Clock::now();
  }
  cv_.notify_all();
}

http::Response HttpFetcher::get(const std::string& url, const CrawlPolicy& policy) {
  http::Options opts;
  opts.timeout = policy.timeout;
  opts.user_agent = policy.user_agent;
  opts.connect_to = connect_to_;
  return http::get(url, opts);
}

http::Response FixtureFetcher::get(const std::string& url, const CrawlPolicy&) {
  const auto u = parse_url(url);
  if (!u) throw Error("invalid fixture URL " + url);
  std::string rel = u->path;
  while (!rel.empty() && rel.front() == '/') rel.erase(rel.begin());
  if (rel.find("..") != std::string::npos) return {404, {}, {}};
  auto path = root_ / u->host / rel;
  if (rel.empty() || rel.back() == '/' || std::filesystem::is_directory(path)) path /= "index.html";
  if (u->has_query) path += "?" + u->query;
  if (!std::filesystem::is_regular_file(path)) return {404, "not found", "text/plain"};
  return {200, read_file(path), content_type_for(path)};
}

PoliteClient::PoliteClient(Fetcher& fetcher, CrawlPolicy policy)
    : fetcher_(fetcher), policy_(std::move(policy)), limiter_(policy_.per_domain_min_interval) {
  policy_.validate();
}

const RobotsRules& PoliteClient::robots_for(const std::string& origin, const std::string& key) {
  std::promise<std::shared_ptr<const RobotsRules>> promise;
  std::shared_future<std::shared_ptr<const RobotsRules>> future;
  bool owner = false;
  {
    std::lock_guard lock(robots_mu_);
    if (auto it = robots_.find(origin); it != robots_.end()) {
      future = it->second;
    } else {
      future = promise.get_future().share();
      robots_.emplace(origin, future);
      owner = true;
    }
  }
  // One fetch per origin; concurrent callers wait for the owner's result.
  if (owner) {
    const auto outcome = fetch_unchecked(origin + "/robots.txt", key);
    auto rules = std::make_shared<RobotsRules>();
    if (outcome.ok) {
      *rules = RobotsRules::parse(outcome.body, policy_.user_agent);
    } else if (outcome.status >= 500 || outcome.status == 0) {
      *rules = RobotsRules::disallow_all();
    }
    promise.set_value(std::move(rules));
  }
  return *future.get();
}

FetchOutcome PoliteClient::fetch_unchecked(const std::string& url, const std::string& key) {
  FetchOutcome out;
  out.url = url;
  auto delay = policy_.backoff_base;
  for (int attempt = 1; attempt <= policy_.max_retries; ++attempt) {
    out.attempts = attempt;
    bool retriable = false;
    try {
      const auto slot = limiter_.acquire(key);
      auto res = fetcher_.get(url, policy_);
      out.status = res.status;
      out.content_type = std::move(res.content_type);
      out.body = std::move(res.body);
      retriable = res.status >= 500;
      out.reason = retriable ? "HTTP " + std::to_string(res.status) : "";
    } catch (const RemoteUnavailable& e) {
      out.status = 0;
      out.reason = e.what();
      retriable = true;
    }
    if (!retriable) break;
    if (attempt < policy_.max_retries) {
      std::this_thread::sleep_for(delay);
      delay *= 2;
    }
  }
  if (out.body.size() > policy_.max_body_bytes) {
    out.body.resize(policy_.max_body_bytes);
    out.truncated = true;
  }
  out.ok = out.status >= 200 && out.status < 300;
  if (!out.ok && out.reason.empty()) out.reason = "HTTP " + std::to_string(out.status);
  if (!out.ok && out.status >= 500) out.reason = "exhausted retries: " + out.reason;
  if (!out.ok && out.status == 0) out.reason = "exhausted retries: " + out.reason;
  return out;
}

FetchOutcome PoliteClient::fetch(const std::string& url) {
  std::string reason;
  const auto u = parse_url(url, &reason);
  if (!u) {
    FetchOutcome out;
    out.url = url;
    out.reason = reason;
    return out;
  }
  const auto key = domain_key(u->host);
  if (policy_.obey_robots && !robots_for(u->origin(), key).allowed(u->path_and_query())) {
    FetchOutcome out;
    out.url = url;
    out.skipped = true;
    out.reason = "disallowed by robots.txt";
    return out;
  }
  return fetch_unchecked(url, key);
}

std::string raw_page_to_json(const RawPage& p) {
  ojson j;
  j["url"] = p.url;
  j["domain"] = p.domain;
  j["discovered_via"] = to_string(p.discovered_via);
  j["feed_date"] = p.feed_date ? ojson(format_date(*p.feed_date)) : ojson(nullptr);
  j["fetched_at"] = format_timestamp(p.fetched_at);
  j["status"] = p.status;
  j["content_type"] = p.content_type;
  j["html"] = p.html;
  return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

RawPage raw_page_from_json(std::string_view line) {
  const auto j = ojson::parse(line);
  RawPage p;
  p.url = j.at("url").get<std::string>();
  p.domain = j.at("domain").get<std::string>();
  p.discovered_via = j.value("discovered_via", "homepage") == "rss" ? DiscoveredVia::rss : DiscoveredVia::homepage;
  if (j.contains("feed_date") && !j.at("feed_date").is_null()) p.feed_date = parse_date(j.at("feed_date").get<std::string>());
  const auto ts = parse_iso_timestamp(j.at("fetched_at").get<std::string>());
  if (!ts) throw Error("invalid fetched_at");
  p.fetched_at = *ts;
  p.status = j.value("status", 200);
  p.content_type = j.value("content_type", "");
  p.html = j.at("html").get<std::string>();
  return p;
}

std::vector<RawPage> load_raw_pages(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw Error("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".jsonl") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<RawPage> pages;
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (trim(line).empty()) continue;
      try {
        pages.push_back(raw_page_from_json(line));
      } catch (const std::exception& e) {
        throw ParseError(f.string() + ": corrupt record on line " + std::to_string(line_no) + ": " + e.what(),
                         line_no);
      }
    }
  }
  return pages;
}

namespace {

DomainReport crawl_domain(const SiteRecord& site, PoliteClient& client, const CrawlOptions& options) {
  DomainReport report;
  report.domain = site.domain;
  const auto state_path = options.state_dir / (site.domain + ".json");
  auto state = load_state(state_path);
  const std::string home_url = options.scheme + "://" + site.domain + "/";
  const auto home = client.fetch(home_url);
  if (!home.ok) {
    report.errors.push_back(home_url + ": " + home.reason);
    ++report.failed;
    return report;
  }
  const auto html_text = html::to_utf8(home.body, home.content_type);

  std::vector<FetchJob> jobs;
  std::unordered_set<std::string> queued;
  const auto stamp = [&] {
    return options.now.value_or(std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now()));
  };
  auto enqueue = [&](const std::string& url, DiscoveredVia via, std::optional<Date> feed_date) {
    if (state.fetched.count(url) || !queued.insert(url).second) return;
    FetchJob job;
    job.domain = site.domain;
    job.url = url;
    job.discovered_via = via;
    job.scheduled_at = stamp();
    job.feed_date = feed_date;
    jobs.push_back(std::move(job));
  };

  for (const auto& feed_url : discover_feeds(html_text, home_url)) {
    const auto fu = parse_url(feed_url);
    if (!fu || !host_within(fu->host, site.domain)) continue;
    ++report.feeds;
    const auto feed = client.fetch(feed_url);
    if (!feed.ok) {
      report.errors.push_back(feed_url + ": " + feed.reason);
      continue;
    }
    try {
      for (const auto& entry : parse_feed(feed.body)) {
        std::string canon;
        try {
          canon = normalize_url(entry.url);
        } catch (const Error&) {
          continue;
        }
        const auto eu = parse_url(canon);
        if (eu && host_within(eu->host, site.domain)) enqueue(canon, DiscoveredVia::rss, entry.published_at);
      }
    } catch (const ParseError& e) {
      report.errors.push_back(feed_url + ": " + e.what());
    }
  }
  const auto links = same_site_links(html_text, home_url);
  for (const auto& link : links) {
    if (state.homepage_links.count(link)) continue;
    const auto lu = parse_url(link);
    if (lu && host_within(lu->host, site.domain)) enqueue(link, DiscoveredVia::homepage, std::nullopt);
  }
  report.discovered = jobs.size();

  std::string out;
  for (auto& job : jobs) {
    const auto res = client.fetch(job.url);
    job.attempts = res.attempts;
    if (res.skipped) {
      ++report.skipped;
      state.fetched.insert(job.url);
      continue;
    }
    if (!res.ok) {
      ++report.failed;
      report.errors.push_back(job.url + ": " + res.reason);
      if (res.status >= 400 && res.status < 500) state.fetched.insert(job.url);
      continue;
    }
    RawPage page;
    page.url = job.url;
    page.domain = site.domain;
    page.discovered_via = job.discovered_via;
    page.feed_date = job.feed_date;
    page.fetched_at = stamp();
    page.status = res.status;
    page.content_type = res.content_type;
    page.html = html::to_utf8(res.body, res.content_type);
    out += raw_page_to_json(page);
    out += '\n';
    state.fetched.insert(job.url);
    ++report.fetched;
  }
  if (!out.empty()) {
    std::filesystem::create_directories(options.out_dir);
    std::ofstream f(options.out_dir / (site.domain + ".jsonl"), std::ios::binary | std::ios::app);
    f << out;
    if (!f) throw Error("cannot append to raw output for " + site.domain);
  }
  state.homepage_links = std::set<std::string>(links.begin(), links.end());
  save_state(state, state_path);
  return report;
}

}  // namespace

std::vector<DomainReport> crawl(const std::vector<SiteRecord>& sites, PoliteClient& client,
                                const CrawlOptions& options) {
  std::filesystem::create_directories(options.state_dir);
  std::filesystem::create_directories(options.out_dir);
  std::vector<DomainReport> reports(sites.size());
  std::vector<std::string> failures(sites.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < sites.size(); i = next++) {
      try {
        reports[i] = crawl_domain(sites[i], client, options);
      } catch (const std::exception& e) {
        reports[i].domain = sites[i].domain;
        reports[i].errors.push_back(e.what());
        ++reports[i].failed;
      }
    }
  };
  const auto n = static_cast<std::size_t>(std::max(1, options.jobs));
  std::vector<std::thread> threads;
  for (std::size_t t = 0; t < std::min(n, sites.size()); ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  return reports;
}

}  // namespace synth::ingest
