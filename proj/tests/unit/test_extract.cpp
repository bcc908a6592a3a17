#include "doctest.h"

#include <filesystem>
#include <iostream>
#include <regex>

#include "synth/corpus.hpp"
#include "synth/extract.hpp"
#include "synth/text.hpp"

using namespace synth;
using namespace synth::extract;

namespace {

const std::filesystem::path kCorpus = std::filesystem::path(SYNTH_FIXTURES) / "extraction";

bool has_residual_tag(const std::string& s) {
  for (std::size_t i = 0; i + 1 < s.size(); ++i) {
    if (s[i] == '<' && std::isalpha(static_cast<unsigned char>(s[i + 1]))) return true;
  }
  return false;
}

const char* kEnglishProse =
    "Heavy rain moved across the region overnight, flooding several low roads near the river and delaying the "
    "morning commute for thousands of people. Emergency crews spent the early hours clearing fallen branches, "
    "and the county opened two shelters for families whose basements had taken on water. Forecasters expect "
    "the storm to weaken by the afternoon, although another band of showers could arrive on Thursday. Schools "
    "remained open, but several bus routes were shortened while inspectors checked the bridges.";

}  // namespace

TEST_CASE("article with navigation yields exactly its paragraphs") {
  const auto r = extract_main_text(
      "<html><head><title>T</title></head><body><nav><a href='/'>Home</a> <a href='/a'>World news and more</a></nav>"
      "<article><p>First paragraph.</p><p>Second paragraph.</p><p>Third paragraph.</p></article></body></html>");
  CHECK(r.text == "First paragraph.\nSecond paragraph.\nThird paragraph.");
  CHECK(r.title == "T");
}

TEST_CASE("a pure link block scores zero and is not selected") {
  std::string farm = "<div class='x'>";
  for (int i = 0; i < 40; ++i) farm += "<a href='/s" + std::to_string(i) + "'>A long headline about something</a> ";
  farm += "</div>";
  const auto r = extract_main_text("<body>" + farm + "<div><p>Short real text here.</p></div></body>");
  CHECK(r.text == "Short real text here.");
  CHECK(extract_main_text("<body>" + farm + "</body>").text.empty());
  CHECK(extract_main_text("").text.empty());
}

TEST_CASE("title prefers og:title and is capped") {
  CHECK(extract_main_text("<head><meta property='og:title' content=' Og  title '><title>Plain</title></head>").title ==
        "Og title");
  const std::string long_title(700, 'x');
  CHECK(utf8_length(extract_main_text("<title>" + long_title + "</title>").title) == kMaxTitleChars);
}

TEST_CASE("hand-labeled extraction corpus") {
  int matches = 0;
  int total = 0;
  for (int i = 1; i <= 20; ++i) {
    char name[8];
    std::snprintf(name, sizeof name, "%02d", i);
    const auto html = read_file(kCorpus / (std::string(name) + ".html"));
    auto expected = read_file(kCorpus / (std::string(name) + ".txt"));
    while (!expected.empty() && expected.back() == '\n') expected.pop_back();
    const auto got = extract_main_text(html).text;
    ++total;
    CHECK_FALSE(has_residual_tag(got));
    if (got == expected) {
      ++matches;
    } else {
      MESSAGE("page " << name << " differs:\n--- got ---\n" << got << "\n--- expected ---\n" << expected);
    }
  }
  CHECK(total == 20);
  CHECK(matches >= 18);
}

TEST_CASE("date extraction priority") {
  CHECK(extract_date("<meta property='article:published_time' content='2022-03-01T10:00:00Z'>", "https://x.com/a", {})
            .date == parse_date("2022-03-01"));
  const auto from_url = extract_date("<p>no dates</p>", "https://x.com/2023/01/15/slug", {});
  CHECK(from_url.date == parse_date("2023-01-15"));
  CHECK(from_url.method == "url_date");
  const auto prio = extract_date("<meta property='article:published_time' content='2022-05-03'>", "https://x.com/a",
                                 parse_date("2022-05-02"));
  CHECK(prio.date == parse_date("2022-05-02"));
  CHECK(prio.method == "feed_date");
  CHECK(prio.conflicts == 1);
  const auto ld = extract_date(
      R"(<script type="application/ld+json">{"@graph":[{"@type":"WebPage"},{"@type":"NewsArticle","datePublished":"2021-12-31T23:30:00-05:00"}]}</script>)",
      "https://x.com/2020/01/01/old", {});
  CHECK(ld.date == parse_date("2021-12-31"));
  CHECK(ld.method == "jsonld_date");
  CHECK(ld.conflicts == 1);
  CHECK_FALSE(extract_date("<p>x</p>", "https://x.com/2023/13/45/bad", {}).date);
  CHECK_FALSE(extract_date("<meta property='article:published_time' content='garbage'>", "https://x.com/", {}).date);
  CHECK_FALSE(extract_date("<script type='application/ld+json'>{broken</script>", "https://x.com/", {}).date);
}

TEST_CASE("pages without dates fall back to the fetch date") {
  const auto r = extract_page("<article><p>Body text.</p></article>", "https://x.com/a", {},
                              timestamp_from_epoch(1646128800));
  CHECK(r.published_at == parse_date("2022-03-01"));
  CHECK(r.method_tags.count("fetched_date") == 1);
  CHECK(r.method_tags.count("density") == 1);
}

TEST_CASE("language identification") {
  const auto en = detect_language(kEnglishProse);
  CHECK(en.code == "en");
  CHECK(en.confidence >= kLanguageThreshold);
  const auto fr = detect_language(
      "Le conseil municipal s'est réuni mardi soir pour discuter du budget de l'année prochaine. Plusieurs élus ont "
      "estimé que la hausse prévue des dépenses pour les routes et les transports publics était nécessaire.");
  CHECK(fr.code == "fr");
  CHECK(detect_language("Too short to classify").code == "und");
  // Languages without a profile stay well under the threshold.
  CHECK(detect_language("Köy sakinleri cumartesi günü ilçedeki son ilkokulun kapatılmasını protesto etti. Öğrenci "
                        "sayısındaki düşüş nedeniyle alınan karar, ailelerin bölgeden ayrılmasına yol açabilir.")
            .code == "und");
  CHECK(supported_languages().size() >= 10);
  const auto spaced = std::regex_replace(std::string(kEnglishProse), std::regex(" "), "   \n ");
  CHECK(detect_language(spaced).confidence == en.confidence);
  CHECK(detect_language(kEnglishProse).confidence == en.confidence);
}

TEST_CASE("extraction corpus bodies are identified as English") {
  for (int i = 1; i <= 20; ++i) {
    char name[8];
    std::snprintf(name, sizeof name, "%02d", i);
    const auto expected = read_file(kCorpus / (std::string(name) + ".txt"));
    CHECK_MESSAGE(detect_language(expected).code == "en", name);
  }
}

TEST_CASE("extract_pages builds sorted article records") {
  std::vector<ingest::RawPage> pages(3);
  pages[0].url = "https://b.com/z";
  pages[0].domain = "b.com";
  pages[0].status = 200;
  pages[0].html = "<article><p>" + std::string(kEnglishProse) + "</p></article>";
  pages[0].fetched_at = timestamp_from_epoch(1646128800);
  pages[1] = pages[0];
  pages[1].url = "https://a.com/y";
  pages[1].domain = "a.com";
  pages[2] = pages[0];
  pages[2].status = 404;
  ExtractStats stats;
  const auto out = extract_pages(pages, 2, &stats);
  REQUIRE(out.size() == 2);
  CHECK(out[0].domain == "a.com");
  CHECK(out[0].language == "en");
  CHECK(out[0].text == collapse_whitespace(kEnglishProse));
  CHECK(stats.skipped == 1);
  CHECK(stats.method_counts.at("fetched_date") == 2);
}
