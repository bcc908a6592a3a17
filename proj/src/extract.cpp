#include "synth/extract.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <regex>
#include <thread>
#include <unordered_map>

#include "json.hpp"
#include "synth/error.hpp"
#include "synth/html.hpp"
#include "synth/text.hpp"
#include "synth/url.hpp"

namespace synth::extract {

namespace {

using html::Document;

template <std::size_t N>
bool among(const std::array<std::string_view, N>& set, std::string_view v) {
  return std::find(set.begin(), set.end(), v) != set.end();
}

constexpr std::array<std::string_view, 16> kDropTags = {
    "script", "style", "nav",    "footer", "header", "aside",    "form",   "noscript",
    "iframe", "svg",   "button", "select", "menu",   "template", "object", "canvas"};

constexpr std::array<std::string_view, 4> kParagraphTags = {"p", "pre", "blockquote", "li"};

// Containers that count as a block when they hold inline text themselves.
constexpr std::array<std::string_view, 9> kTextContainers = {"div",     "td",   "th",     "section", "article",
                                                             "main",    "center", "dd",    "body"};

constexpr std::array<std::string_view, 24> kInlineTags = {
    "a",    "b",   "i",    "em",    "strong", "span", "font", "small", "u",   "sub",  "sup",   "abbr",
    "cite", "code", "mark", "q",     "time",   "s",    "big",  "tt",    "var", "kbd",  "label", "br"};

// Class/id tokens that mark page furniture.
constexpr std::array<std::string_view, 30> kNoiseTokens = {
    "comment",   "comments",   "footer",       "sidebar",  "related",   "share",      "sharing", "social",
    "promo",     "newsletter", "byline",       "caption",  "advert",    "advertisement", "ad",  "ads",
    "cookie",    "cookies",    "subscribe",    "nav",      "navigation", "menu",      "breadcrumb",
    "breadcrumbs", "banner",   "popup",        "modal",    "widget",    "sponsored",  "outbrain"};

bool noisy_attr(const std::string* value) {
  if (!value) return false;
  std::string token;
  auto flush = [&]() {
    bool hit = !token.empty() && among(kNoiseTokens, token);
    token.clear();
    return hit;
  };
  for (char c : *value) {
    const auto uc = static_cast<unsigned char>(c);
    if (std::isalnum(uc)) {
      token += static_cast<char>(std::tolower(uc));
    } else if (flush()) {
      return true;
    }
  }
  return flush();
}

bool dropped(const html::Node& n) {
  if (n.is_text()) return false;
  if (among(kDropTags, n.tag)) return true;
  if (n.attr("hidden")) return true;
  return noisy_attr(n.attr("class")) || noisy_attr(n.attr("id"));
}

struct Block {
  int node = 0;
  std::vector<std::string> paragraphs;
  double score = 0.0;
};

// Collects text below `i`. In inline mode only inline descendants are
// visited, so nested blocks are left to be scored on their own. <br> is kept
// as '\n' to let double breaks split paragraphs.
void collect(const Document& doc, int i, bool inline_only, bool in_link, std::string& text, std::string& link_text) {
  const auto& n = doc.node(i);
  if (n.is_text()) {
    text += n.text;
    if (in_link) link_text += n.text;
    return;
  }
  if (dropped(n)) return;
  if (n.tag == "br") {
    text += '\n';
    return;
  }
  if (n.tag == "title") return;
  const bool link = in_link || n.tag == "a";
  for (int c : n.children) {
    const auto& child = doc.node(c);
    if (inline_only && !child.is_text() && !among(kInlineTags, child.tag)) continue;
    collect(doc, c, inline_only, link, text, link_text);
  }
}

// Splits at runs of two or more line breaks; single breaks become spaces.
std::vector<std::string> split_paragraphs(const std::string& raw) {
  std::vector<std::string> out;
  std::string current;
  std::size_t i = 0;
  auto flush = [&] {
    auto p = collapse_whitespace(current);
    if (!p.empty()) out.push_back(std::move(p));
    current.clear();
  };
  while (i < raw.size()) {
    if (raw[i] != '\n') {
      current += raw[i++];
      continue;
    }
    int breaks = 0;
    std::size_t j = i;
    while (j < raw.size() && (raw[j] == '\n' || is_ascii_space(raw[j]))) {
      if (raw[j] == '\n') ++breaks;
      ++j;
    }
    if (breaks >= 2) {
      flush();
    } else {
      current += ' ';
    }
    i = j;
  }
  flush();
  return out;
}

std::size_t non_space_length(std::string_view s) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto c = static_cast<unsigned char>(s[i]);
    if (!is_ascii_space(s[i]) && (c & 0xC0) != 0x80) ++n;
  }
  return n;
}

bool has_paragraph_ancestor(const Document& doc, int i) {
  for (int p = doc.node(i).parent; p > 0; p = doc.node(p).parent) {
    if (among(kParagraphTags, doc.node(p).tag)) return true;
  }
  return false;
}

std::vector<Block> find_blocks(const Document& doc) {
  std::vector<Block> blocks;
  doc.walk(Document::root(), [&](int i) {
    const auto& n = doc.node(i);
    if (n.is_text()) return false;
    if (dropped(n)) return false;
    const bool paragraph = among(kParagraphTags, n.tag) && !has_paragraph_ancestor(doc, i);
    const bool container = among(kTextContainers, n.tag);
    if (!paragraph && !container) return true;
    std::string text, link_text;
    collect(doc, i, !paragraph, false, text, link_text);
    Block b;
    b.node = i;
    b.paragraphs = split_paragraphs(text);
    std::size_t len = 0;
    for (const auto& p : b.paragraphs) len += utf8_length(p);
    if (len > 0) {
      // The link ratio ignores whitespace so separators between anchors do
      // not count as body text.
      const auto visible = non_space_length(text);
      const auto link_len = std::min(visible, non_space_length(link_text));
      const double ratio = visible ? static_cast<double>(link_len) / static_cast<double>(visible) : 1.0;
      b.score = static_cast<double>(len) * (1.0 - ratio);
      blocks.push_back(std::move(b));
    }
    // Paragraph blocks own their subtree; containers keep being searched.
    return !paragraph;
  });
  return blocks;
}

bool descends_from(const Document& doc, int i, int ancestor) {
  for (int p = doc.node(i).parent; p >= 0; p = doc.node(p).parent) {
    if (p == ancestor) return true;
  }
  return false;
}

std::string extract_title(const Document& doc) {
  std::string title;
  for (int i : doc.find_all("meta")) {
    const auto& n = doc.node(i);
    const auto* prop = n.attr("property");
    if (!prop) prop = n.attr("name");
    const auto* content = n.attr("content");
    if (prop && content && iequals(*prop, "og:title")) {
      title = collapse_whitespace(*content);
      if (!title.empty()) break;
    }
  }
  if (title.empty()) {
    const auto titles = doc.find_all("title");
    if (!titles.empty()) {
      std::string raw;
      for (int c : doc.node(titles.front()).children) raw += doc.node(c).text;
      title = collapse_whitespace(raw);
    }
  }
  return std::string(utf8_prefix(title, kMaxTitleChars));
}

std::optional<Date> date_from_string(std::string_view s) {
  s = trim(s);
  if (auto d = parse_date(s)) return d;
  if (auto ts = parse_any_timestamp(s)) return date_of(*ts);
  return std::nullopt;
}

std::optional<Date> meta_date(const Document& doc) {
  for (int i : doc.find_all("meta")) {
    const auto& n = doc.node(i);
    const auto* key = n.attr("property");
    if (!key) key = n.attr("name");
    const auto* content = n.attr("content");
    if (key && content && iequals(*key, "article:published_time")) {
      if (auto d = date_from_string(*content)) return d;
    }
  }
  return std::nullopt;
}

std::optional<std::string> find_date_published(const nlohmann::ordered_json& j) {
  if (j.is_object()) {
    if (auto it = j.find("datePublished"); it != j.end() && it->is_string()) return it->get<std::string>();
    for (const auto& [k, v] : j.items()) {
      if (auto d = find_date_published(v)) return d;
    }
  } else if (j.is_array()) {
    for (const auto& v : j) {
      if (auto d = find_date_published(v)) return d;
    }
  }
  return std::nullopt;
}

std::optional<Date> jsonld_date(const Document& doc) {
  for (int i : doc.find_all("script")) {
    const auto& n = doc.node(i);
    const auto* type = n.attr("type");
    if (!type || !iequals(trim(*type), "application/ld+json")) continue;
    std::string raw;
    for (int c : n.children) raw += doc.node(c).text;
    const auto j = nlohmann::ordered_json::parse(raw, nullptr, false);
    if (j.is_discarded()) continue;
    if (auto s = find_date_published(j)) {
      if (auto d = date_from_string(*s)) return d;
    }
  }
  return std::nullopt;
}

std::optional<Date> url_date(std::string_view url) {
  static const std::regex pattern(R"(/((?:19|20)\d{2})/(\d{2})/(\d{2})(?:/|$))");
  std::string path(url);
  if (const auto u = parse_url(url)) path = u->path;
  std::smatch m;
  if (!std::regex_search(path, m, pattern)) return std::nullopt;
  const Date d{std::chrono::year{std::stoi(m[1])}, std::chrono::month{static_cast<unsigned>(std::stoi(m[2]))},
               std::chrono::day{static_cast<unsigned>(std::stoi(m[3]))}};
  if (!d.ok()) return std::nullopt;
  return d;
}

// Character trigram profile over case-folded letters; everything else is a
// single separating space.
using Profile = std::unordered_map<std::uint64_t, double>;

std::u32string letters_only(std::string_view text) {
  std::u32string out = U" ";
  for (char32_t cp : utf8_decode(text)) {
    if (is_letter(cp)) {
      out += fold_case(cp);
    } else if (out.back() != U' ') {
      out += U' ';
    }
  }
  if (out.back() != U' ') out += U' ';
  return out;
}

Profile trigram_profile(std::string_view text) {
  const auto s = letters_only(text);
  Profile p;
  for (std::size_t i = 0; i + 3 <= s.size(); ++i) {
    const std::uint64_t key = (static_cast<std::uint64_t>(s[i]) << 42) | (static_cast<std::uint64_t>(s[i + 1]) << 21) |
                              static_cast<std::uint64_t>(s[i + 2]);
    p[key] += 1.0;
  }
  return p;
}

double norm(const Profile& p) {
  double sum = 0.0;
  for (const auto& [k, v] : p) sum += v * v;
  return std::sqrt(sum);
}

struct LanguageProfile {
  std::string code;
  Profile profile;
  double norm = 0.0;
};

const std::vector<LanguageProfile>& language_profiles() {
  static const std::vector<LanguageProfile> profiles = [] {
    struct Sample {
      const char* code;
      const char* text;
    };
    static const Sample samples[] = {
#include "lang_samples.inc"
    };
    std::vector<LanguageProfile> out;
    for (const auto& s : samples) {
      LanguageProfile lp;
      lp.code = s.code;
      lp.profile = trigram_profile(s.text);
      lp.norm = norm(lp.profile);
      out.push_back(std::move(lp));
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.code < b.code; });
    return out;
  }();
  return profiles;
}

}  // namespace

MainContent extract_main_text(std::string_view html_utf8) {
  const auto doc = html::parse(html_utf8);
  MainContent out;
  out.title = extract_title(doc);

  const auto blocks = find_blocks(doc);
  std::unordered_map<int, double> candidate;
  for (const auto& b : blocks) {
    if (b.score <= 0.0) continue;
    const int parent = doc.node(b.node).parent;
    if (parent < 0) continue;
    candidate[parent] += b.score;
    const int grandparent = doc.node(parent).parent;
    if (grandparent >= 0) candidate[grandparent] += b.score / 2.0;
  }
  if (candidate.empty()) return out;

  // Node indices follow document order, so ties go to the earlier node.
  int best = -1;
  double best_score = 0.0;
  for (const auto& [node, score] : candidate) {
    if (score > best_score || (score == best_score && node < best)) {
      best = node;
      best_score = score;
    }
  }

  // Sibling containers that carry a comparable share of text continue the
  // article (for example a body split around a figure).
  std::vector<int> selected = {best};
  if (const int parent = doc.node(best).parent; parent >= 0) {
    for (int sib : doc.node(parent).children) {
      if (sib == best) continue;
      const auto it = candidate.find(sib);
      if (it != candidate.end() && it->second >= 0.2 * best_score) selected.push_back(sib);
    }
  }

  std::vector<std::string> paragraphs;
  for (const auto& b : blocks) {
    if (b.score <= 0.0) continue;
    const bool inside = std::any_of(selected.begin(), selected.end(),
                                    [&](int s) { return descends_from(doc, b.node, s); });
    if (!inside) continue;
    for (const auto& p : b.paragraphs) paragraphs.push_back(p);
  }
  for (std::size_t i = 0; i < paragraphs.size(); ++i) {
    if (i) out.text += '\n';
    out.text += paragraphs[i];
  }
  return out;
}

DateResult extract_date(std::string_view html_utf8, std::string_view url, std::optional<Date> feed_date) {
  const auto doc = html::parse(html_utf8);
  const std::pair<std::optional<Date>, const char*> sources[] = {
      {feed_date, "feed_date"},
      {meta_date(doc), "meta_date"},
      {jsonld_date(doc), "jsonld_date"},
      {url_date(url), "url_date"},
  };
  DateResult out;
  for (const auto& [date, method] : sources) {
    if (!date) continue;
    if (!out.date) {
      out.date = date;
      out.method = method;
    } else if (*date != *out.date) {
      ++out.conflicts;
    }
  }
  return out;
}

LanguageGuess detect_language(std::string_view text, double threshold) {
  LanguageGuess guess{"und", 0.0};
  if (utf8_length(trim(text)) < kMinLanguageChars) return guess;
  const auto p = trigram_profile(text);
  const double pn = norm(p);
  if (pn == 0.0) return guess;
  std::string best;
  double best_sim = -1.0;
  for (const auto& lp : language_profiles()) {
    double dot = 0.0;
    for (const auto& [k, v] : p) {
      if (auto it = lp.profile.find(k); it != lp.profile.end()) dot += v * it->second;
    }
    const double sim = dot / (pn * lp.norm);
    if (sim > best_sim) {
      best_sim = sim;
      best = lp.code;
    }
  }
  guess.confidence = best_sim;
  if (best_sim >= threshold) guess.code = best;
  return guess;
}

std::vector<std::string> supported_languages() {
  std::vector<std::string> out;
  for (const auto& lp : language_profiles()) out.push_back(lp.code);
  return out;
}

ExtractionResult extract_page(std::string_view html_utf8, std::string_view url, std::optional<Date> feed_date,
                              Timestamp fetched_at) {
  ExtractionResult r;
  auto main = extract_main_text(html_utf8);
  r.title = std::move(main.title);
  r.text = std::move(main.text);
  if (!r.text.empty()) r.method_tags.insert("density");
  const auto date = extract_date(html_utf8, url, feed_date);
  r.date_conflicts = date.conflicts;
  if (date.date) {
    r.published_at = date.date;
    r.method_tags.insert(date.method);
  } else {
    r.published_at = date_of(fetched_at);
    r.method_tags.insert("fetched_date");
  }
  const auto lang = detect_language(r.text);
  r.language = lang.code;
  r.language_confidence = lang.confidence;
  r.method_tags.insert("lang_trigram");
  return r;
}

std::vector<ArticleRecord> extract_pages(const std::vector<ingest::RawPage>& pages, int jobs, ExtractStats* stats) {
  struct Slot {
    std::optional<ArticleRecord> record;
    std::set<std::string> tags;
    int conflicts = 0;
  };
  std::vector<Slot> slots(pages.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < pages.size(); i = next++) {
      const auto& page = pages[i];
      if (page.status < 200 || page.status >= 300) continue;
      try {
        auto r = extract_page(page.html, page.url, page.feed_date, page.fetched_at);
        slots[i].record = make_article(page.url, page.domain, r.published_at, page.fetched_at, std::move(r.title),
                                       std::move(r.text), std::move(r.language));
        slots[i].tags = std::move(r.method_tags);
        slots[i].conflicts = r.date_conflicts;
      } catch (const Error&) {
        slots[i].record.reset();
      }
    }
  };
  const auto n_threads = static_cast<std::size_t>(std::clamp(jobs, 1, 64));
  std::vector<std::thread> threads;
  for (std::size_t t = 1; t < n_threads; ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();

  ExtractStats local;
  local.pages = pages.size();
  std::vector<ArticleRecord> out;
  for (auto& s : slots) {
    if (!s.record) {
      ++local.skipped;
      continue;
    }
    ++local.articles;
    if (s.record->admitted) ++local.admitted;
    local.date_conflicts += static_cast<std::size_t>(s.conflicts);
    for (const auto& t : s.tags) ++local.method_counts[t];
    out.push_back(std::move(*s.record));
  }
  std::stable_sort(out.begin(), out.end(), [](const ArticleRecord& a, const ArticleRecord& b) {
    return std::tie(a.domain, a.url) < std::tie(b.domain, b.url);
  });
  if (stats) *stats = std::move(local);
  return out;
}

}  // namespace synth::extract
