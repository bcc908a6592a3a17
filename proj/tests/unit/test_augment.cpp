#include "doctest.h"

#include <filesystem>
#include <random>
#include <regex>

#include "fixture_server.hpp"
#include "json.hpp"
#include "synth/augment.hpp"
#include "synth/error.hpp"
#include "synth/text.hpp"

using namespace synth;
using namespace synth::augment;

namespace {

const std::vector<std::string> kVocab = {"the",   "council", "said",  "on",     "Tuesday", "that",  "water",
                                         "rates", "would",   "rise",  "after",  "a",       "long",  "debate,",
                                         "while", "résumé",  "fell.", "Prices", "in",      "March"};

std::string random_text(std::mt19937_64& rng, std::size_t words) {
  std::string out;
  for (std::size_t i = 0; i < words; ++i) {
    if (i) out += bounded_draw(rng, 7) == 0 ? "  \n" : " ";
    out += kVocab[bounded_draw(rng, kVocab.size())];
  }
  return out;
}

std::string words_of(std::size_t n) {
  std::string out;
  for (std::size_t i = 0; i < n; ++i) out += (i ? " w" : "w") + std::to_string(i);
  return out;
}

LabeledText machine_text(const std::string& id, std::string text) {
  LabeledText t;
  t.id = id;
  t.text = std::move(text);
  t.label = Label::machine;
  t.generator_id = "fixture";
  return t;
}

}  // namespace

TEST_CASE("plan_masks examples") {
  const auto p100 = plan_masks(100, 1);
  CHECK(p100.spans.size() == 5);
  CHECK(p100.masked_fraction() == 0.25);
  const auto p20 = plan_masks(20, 9);
  CHECK(p20.spans.size() == 1);
  CHECK(p20.masked_fraction() == 0.25);
  CHECK(plan_masks(100, 1) == p100);
  CHECK_FALSE(plan_masks(100, 2) == p100);
  const auto p3 = plan_masks(3, 4);
  REQUIRE(p3.spans.size() == 1);
  CHECK(p3.spans[0] == Span{0, 3});
  CHECK(plan_masks(0, 1).spans.empty());
}

TEST_CASE("plan_masks properties over random lengths") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 300; ++trial) {
    const auto wc = 20 + bounded_draw(rng, 1981);
    const auto seed = rng();
    const auto plan = plan_masks(wc, seed);
    std::vector<int> cover(wc, 0);
    for (const auto& s : plan.spans) {
      CHECK(s.length == kSpanWords);
      REQUIRE(s.start + s.length <= wc);
      for (std::size_t i = s.start; i < s.start + s.length; ++i) ++cover[i];
    }
    CHECK(*std::max_element(cover.begin(), cover.end()) <= 1);
    CHECK(plan.masked_fraction() >= 0.25);
    CHECK(plan.masked_fraction() < 0.25 + 5.0 / static_cast<double>(wc));
    CHECK_FALSE(plan.exhausted);
  }
}

TEST_CASE("identity filler round-trips random texts") {
  std::mt19937_64 rng(5);
  IdentityFiller identity;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto text = random_text(rng, 1 + bounded_draw(rng, 300));
    const auto plan = plan_masks(word_count(text), rng());
    CHECK(apply_fill(text, plan, identity) == text);
  }
}

TEST_CASE("constant filler replaces exactly a quarter of the words") {
  const auto text = words_of(100);
  ConstantFiller constant("x x x x x");
  const auto out = apply_fill(text, plan_masks(100, 77), constant);
  const auto words = split_whitespace(out);
  CHECK(words.size() == 100);
  CHECK(std::count(words.begin(), words.end(), "x") == 25);
}

TEST_CASE("sentinel payload and alignment") {
  const auto text = words_of(40);
  MaskPlan plan;
  plan.word_count = 40;
  plan.spans = {{0, 5}, {5, 5}, {20, 5}};
  const MaskedText masked(text, plan);
  CHECK(masked.regions().size() == 2);
  CHECK(masked.sentinel_text().rfind("<extra_id_0> <extra_id_1> w10", 0) == 0);
  CHECK(masked.sentinel_text().find("w19 <extra_id_2> w25") != std::string::npos);
  auto filled = std::regex_replace(masked.sentinel_text(), std::regex("<extra_id_0> <extra_id_1>"), "new start");
  filled = std::regex_replace(filled, std::regex("<extra_id_2>"), "middle fill here");
  const auto fills = align_fills(masked, filled);
  CHECK(fills == std::vector<std::string>{"new start", "middle fill here"});
  CHECK_THROWS_AS(align_fills(masked, std::regex_replace(filled, std::regex("w30"), "CHANGED")), ProtocolError);
  CHECK_THROWS_AS(align_fills(masked, filled + " trailing"), ProtocolError);
}

TEST_CASE("remote filler keeps unmasked positions") {
  int calls = 0;
  std::vector<std::string> keys;
  std::mutex mu;
  testing::FixtureServer server(std::filesystem::temp_directory_path(),
                                [&](const httplib::Request& req, httplib::Response& res) {
                                  if (req.path != "/fill") return false;
                                  const auto body = nlohmann::json::parse(req.body);
                                  {
                                    std::lock_guard lock(mu);
                                    ++calls;
                                    keys.push_back(req.get_header_value("Idempotency-Key"));
                                  }
                                  // Each sentinel becomes two words naming its index.
                                  auto text = body.at("text").get<std::string>();
                                  text = std::regex_replace(text, std::regex("<extra_id_(\\d+)>"), "fill$1 fill$1");
                                  res.set_content(nlohmann::json{{"text", text}}.dump(), "application/json");
                                  return true;
                                });
  RemoteFiller filler("http://" + server.address());
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 25; ++trial) {
    const auto text = random_text(rng, 40 + bounded_draw(rng, 200));
    const auto plan = plan_masks(word_count(text), rng());
    const auto out = apply_fill(text, plan, filler);

    // Oracle: original tokens with each span swapped for its two fill tokens.
    const auto original = split_whitespace(text);
    std::vector<std::string> expected;
    std::size_t w = 0;
    for (std::size_t s = 0; s < plan.spans.size(); ++s) {
      while (w < plan.spans[s].start) expected.emplace_back(original[w++]);
      expected.push_back("fill" + std::to_string(s));
      expected.push_back("fill" + std::to_string(s));
      w += plan.spans[s].length;
    }
    while (w < original.size()) expected.emplace_back(original[w++]);
    const auto got = split_whitespace(out);
    CHECK(std::vector<std::string>(got.begin(), got.end()) == expected);
  }
  CHECK(calls == 25);
  CHECK(std::all_of(keys.begin(), keys.end(), [](const std::string& k) { return k.size() == 16; }));
}

TEST_CASE("filler failures drop the article with a reason") {
  testing::FixtureServer server(std::filesystem::temp_directory_path(), [](const httplib::Request&, httplib::Response& res) {
    res.status = 500;
    return true;
  });
  RemoteFiller filler("http://" + server.address(), {}, http::RetryPolicy{2, std::chrono::milliseconds(1)});
  const auto result = perturb_all({machine_text("m1", words_of(300))}, filler, {});
  CHECK(result.survivors.empty());
  REQUIRE(result.dropped.size() == 1);
  CHECK(result.dropped[0].reason.find("pert failed") == 0);
}

TEST_CASE("paraphrase post-filter and survivors") {
  const auto long_text = std::string(1200, 'a');
  IdentityParaphraser identity;
  CHECK(identity.paraphrase(long_text, kLexDiversity) == long_text);

  struct Shrinking : Paraphraser {
    std::string paraphrase(const std::string& t, int) override { return t.substr(0, 900); }
  } shrinking;
  const auto shrunk = paraphrase_all({machine_text("m1", long_text)}, shrinking, {});
  CHECK(shrunk.survivors.empty());
  CHECK(shrunk.dropped.at(0).reason.find("below 1000") == 0);

  // Reorders sentences; texts that end up under the limit are the only losses.
  struct Shuffle : Paraphraser {
    int seen_diversity = 0;
    std::string paraphrase(const std::string& t, int lex) override {
      seen_diversity = lex;
      auto parts = std::vector<std::string>();
      std::string cur;
      for (char c : t) {
        cur += c;
        if (c == '.') parts.push_back(std::exchange(cur, ""));
      }
      if (!cur.empty()) parts.push_back(cur);
      std::reverse(parts.begin(), parts.end());
      std::string out;
      for (const auto& p : parts) out += p;
      return out;
    }
  } shuffle;
  std::vector<LabeledText> machine;
  std::size_t long_enough = 0;
  std::mt19937_64 rng(3);
  for (int i = 0; i < 30; ++i) {
    const auto text = random_text(rng, 120 + bounded_draw(rng, 150));
    if (utf8_length(text) >= kMinArticleChars) ++long_enough;
    machine.push_back(machine_text("m" + std::to_string(i), text));
  }
  const auto result = paraphrase_all(machine, shuffle, {});
  CHECK(shuffle.seen_diversity == 60);
  CHECK(result.survivors.size() == long_enough);
  CHECK(result.survivors.size() + result.dropped.size() == machine.size());

  DatasetVariant baseline;
  for (const auto& m : machine) baseline.machine_ids.insert(m.id);
  baseline.human_ids = {"h1", "h2"};
  std::set<std::string> para_ids;
  for (const auto& s : result.survivors) {
    CHECK(s.label == Label::machine);
    para_ids.insert(s.id);
  }
  const auto para = build_variant(baseline, {}, para_ids, Variant::Para);
  CHECK(para.machine_ids.size() == baseline.machine_ids.size() + result.survivors.size());
  CHECK(para.human_ids == baseline.human_ids);
}

TEST_CASE("subsampling keeps a deterministic fraction") {
  std::vector<LabeledText> machine;
  for (int i = 0; i < 200; ++i) machine.push_back(machine_text("m" + std::to_string(i), std::string(1100, 'z')));
  IdentityParaphraser identity;
  AugmentOptions opts;
  opts.subsample = 0.3;
  opts.seed = 8;
  const auto a = paraphrase_all(machine, identity, opts);
  const auto b = paraphrase_all(machine, identity, opts);
  CHECK(a.survivors.size() == b.survivors.size());
  CHECK(a.survivors.size() > 30);
  CHECK(a.survivors.size() < 90);
}

TEST_CASE("variant composition with the published counts") {
  DatasetVariant baseline;
  for (int i = 0; i < 33446; ++i) {
    baseline.machine_ids.insert("b" + std::to_string(i));
    baseline.human_ids.insert("h" + std::to_string(i));
  }
  std::set<std::string> pert, para;
  for (int i = 0; i < 10557; ++i) pert.insert("p" + std::to_string(i));
  for (int i = 0; i < 8052; ++i) para.insert("q" + std::to_string(i));
  const auto v_pert = build_variant(baseline, pert, para, Variant::Pert);
  const auto v_para = build_variant(baseline, pert, para, Variant::Para);
  const auto v_both = build_variant(baseline, pert, para, Variant::PertPara);
  CHECK(v_pert.machine_ids.size() == 44003);
  CHECK(v_para.machine_ids.size() == 41498);
  CHECK(v_both.machine_ids.size() == 52055);
  CHECK(v_both.machine_ids.size() + baseline.machine_ids.size() ==
        v_pert.machine_ids.size() + v_para.machine_ids.size());
  CHECK(build_variant(baseline, pert, para, Variant::Baseline).machine_ids == baseline.machine_ids);
  CHECK_THROWS_AS(build_variant(baseline, {"b7"}, {}, Variant::Pert), Error);
}

TEST_CASE("generation prompts") {
  std::vector<ArticleRecord> articles(3);
  articles[0].id = "a";
  articles[0].text = words_of(200);
  articles[1].id = "b";
  articles[1].text = words_of(9);
  articles[2].id = "c";
  articles[2].text = "  one\ttwo  three four five six seven eight nine ten eleven";
  std::vector<Dropped> skipped;
  const auto prompts = make_generation_prompts(articles, &skipped);
  REQUIRE(prompts.size() == 2);
  CHECK(prompts[0].text == "w0 w1 w2 w3 w4 w5 w6 w7 w8 w9");
  CHECK(prompts[1].text == "one two three four five six seven eight nine ten");
  REQUIRE(skipped.size() == 1);
  CHECK(skipped[0].id == "b");

  std::vector<ArticleRecord> batch(3516);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    batch[i].id = std::to_string(i);
    batch[i].text = words_of(10 + i % 50);
  }
  CHECK(make_generation_prompts(batch).size() == 3516);
}
