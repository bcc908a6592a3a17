#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "synth/corpus.hpp"
#include "synth/date.hpp"
#include "synth/ingest.hpp"

namespace synth::extract {

constexpr std::size_t kMaxTitleChars = 512;

struct MainContent {
  std::string title;
  std::string text;  // paragraphs joined by '\n'
};

// Title from og:title, else <title>. Body by link-density scoring: each
// paragraph-like block scores len * (1 - link_len / len); the container whose
// direct and (half-weighted) grandchild blocks score highest is selected and
// its positive-scoring blocks are emitted in document order.
MainContent extract_main_text(std::string_view html_utf8);

struct DateResult {
  std::optional<Date> date;
  std::string method;  // feed_date, meta_date, jsonld_date, url_date, or empty
  int conflicts = 0;   // lower-priority sources that disagree with the winner
};

// Priority: feed date, <meta property="article:published_time">, JSON-LD
// datePublished, then a /YYYY/MM/DD/ path segment in the URL.
DateResult extract_date(std::string_view html_utf8, std::string_view url, std::optional<Date> feed_date);

struct LanguageGuess {
  std::string code;  // ISO 639-1, or "und"
  double confidence = 0.0;
};

constexpr std::size_t kMinLanguageChars = 40;
constexpr double kLanguageThreshold = 0.40;

// Cosine similarity of character-trigram frequencies against the bundled
// profiles. Shorter than 40 characters, or best similarity below the
// threshold, yields "und" (the best similarity is still reported).
LanguageGuess detect_language(std::string_view text, double threshold = kLanguageThreshold);

// Languages with a bundled profile, sorted.
std::vector<std::string> supported_languages();

struct ExtractionResult {
  std::string title;
  std::string text;
  std::optional<Date> published_at;
  std::string language;
  double language_confidence = 0.0;
  std::set<std::string> method_tags;
  int date_conflicts = 0;
};

// Full pipeline for one page. Without any recoverable date the fetch date is
// used and tagged "fetched_date".
ExtractionResult extract_page(std::string_view html_utf8, std::string_view url, std::optional<Date> feed_date,
                              Timestamp fetched_at);

struct ExtractStats {
  std::size_t pages = 0;
  std::size_t articles = 0;
  std::size_t admitted = 0;
  std::size_t skipped = 0;  // non-2xx or unparseable URL
  std::size_t date_conflicts = 0;
  std::map<std::string, std::size_t> method_counts;
};

// Raw pages to ArticleRecords sorted by (domain, url). Work is spread over
// `jobs` threads; output order does not depend on it.
std::vector<ArticleRecord> extract_pages(const std::vector<ingest::RawPage>& pages, int jobs = 1,
                                         ExtractStats* stats = nullptr);

}  // namespace synth::extract
