#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "synth/date.hpp"

namespace synth {

inline constexpr std::size_t kMinArticleChars = 1000;

enum class Reliability { reliable, unreliable };
enum class CruxBucket { B10K, B100K, B1M, B10M, B10Mplus, unknown };
enum class Label { human, machine };
enum class Split { train, test };
enum class Variant { Baseline, Pert, Para, PertPara };

std::string_view to_string(Reliability r);
std::string_view to_string(CruxBucket b);
std::string_view to_string(Label l);
std::string_view to_string(Split s);
std::string_view to_string(Variant v);
Reliability parse_reliability(std::string_view s);
CruxBucket parse_crux_bucket(std::string_view s);
Label parse_label(std::string_view s);
Split parse_split(std::string_view s);
Variant parse_variant(std::string_view s);

struct SiteRecord {
  std::string domain;
  Reliability reliability = Reliability::reliable;
  CruxBucket bucket = CruxBucket::unknown;
  std::optional<long long> bucket_value;
};

struct ArticleRecord {
  std::string id;
  std::string url;
  std::string domain;
  std::optional<Date> published_at;
  Timestamp fetched_at{};
  std::string title;
  std::string text;
  std::string language;
  std::size_t char_count = 0;
  std::size_t word_count = 0;
  bool admitted = false;
};

struct LabeledText {
  std::string id;
  std::string text;
  Label label = Label::human;
  std::string generator_id;
  std::string decoding_config;
  Split split = Split::train;
  std::set<Variant> variants;
};

// True iff language is "en" and the text holds at least 1000 Unicode scalar
// values.
bool admit(std::string_view text, std::string_view language);

// Maps a CrUX rank magnitude to its stratum; an absent value is the
// "beyond 10M" stratum. Throws synth::Error for other magnitudes.
CruxBucket stratify(std::optional<long long> bucket_value);

// Hash of (canonical url, separator, first 4096 characters of text).
std::string article_id(std::string_view canonical_url, std::string_view text);

// Builds a record with derived counts, id and admission flag. `url` is
// normalized.
ArticleRecord make_article(std::string_view url, std::string_view domain,
                           std::optional<Date> published_at, Timestamp fetched_at,
                           std::string title, std::string text, std::string language);

// Domain form used for SiteRecord: lowercase host, no scheme, no path, "www."
// stripped.
std::string canonical_domain(std::string_view raw);

std::string article_to_json(const ArticleRecord& a);
ArticleRecord article_from_json(std::string_view line);
std::string labeled_to_json(const LabeledText& t);
LabeledText labeled_from_json(std::string_view line);

struct LoadStats {
  std::size_t duplicates = 0;
};

// Newline-delimited JSON persistence. A corrupt line raises synth::ParseError
// whose message and position name the 1-based line number. Duplicate ids keep
// the first position with the last record's content.
void store_articles(const std::vector<ArticleRecord>& records, const std::filesystem::path& path);
std::vector<ArticleRecord> load_articles(const std::filesystem::path& path, LoadStats* stats = nullptr);
void store_labeled(const std::vector<LabeledText>& records, const std::filesystem::path& path);
std::vector<LabeledText> load_labeled(const std::filesystem::path& path, LoadStats* stats = nullptr);

// sites.csv: header "domain,reliability_class,crux_bucket_value"; an empty
// bucket value means the site is outside the top 10M.
std::vector<SiteRecord> load_sites(const std::filesystem::path& path);
void store_sites(const std::vector<SiteRecord>& sites, const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

}  // namespace synth
