#include "doctest.h"

#include <chrono>
#include <filesystem>
#include <random>

#include "fixture_server.hpp"
#include "json.hpp"
#include "news_fixture.hpp"
#include "synth/detect.hpp"
#include "synth/error.hpp"
#include "synth/text.hpp"

using namespace synth;
using namespace synth::detect;

namespace {

const std::filesystem::path kFixtures = SYNTH_FIXTURES;

std::filesystem::path temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "synth_test_detect";
  std::filesystem::create_directories(dir);
  const auto p = dir / name;
  std::filesystem::remove(p);
  return p;
}

std::string alphabet_text(std::mt19937_64& rng, std::string_view alphabet) {
  std::string out;
  while (out.size() < 1200) {
    const auto len = 2 + bounded_draw(rng, 6);
    for (std::size_t i = 0; i < len; ++i) out += alphabet[bounded_draw(rng, alphabet.size())];
    out += ' ';
  }
  return out;
}

std::vector<LabeledText> toy_corpus(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<LabeledText> out;
  for (int i = 0; i < 20; ++i) {
    LabeledText t;
    t.id = "t" + std::to_string(i);
    t.label = i % 2 ? Label::machine : Label::human;
    t.text = alphabet_text(rng, i % 2 ? "abcdefghijklm" : "nopqrstuvwxyz");
    out.push_back(t);
  }
  return out;
}

std::vector<ArticleRecord> fixture_articles(std::size_t n) {
  std::vector<ArticleRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    ArticleRecord a;
    a.id = hex64(fnv1a64("article" + std::to_string(i)));
    a.text = "Article body number " + std::to_string(i) + std::string(1000, 'x');
    a.admitted = true;
    out.push_back(a);
  }
  return out;
}

// Scores by the digit sum of the text so every article gets a distinct,
// reproducible value.
class DigitScorer : public Detector {
 public:
  std::string model_id() const override { return "digits"; }
  std::vector<double> score_batch(const std::vector<std::string>& texts) const override {
    std::vector<double> out;
    for (const auto& t : texts) {
      int sum = 0;
      for (char c : t) sum += std::isdigit(static_cast<unsigned char>(c)) ? c - '0' : 0;
      if (t.find("poison") != std::string::npos) throw Error("scorer rejected the text");
      out.push_back((sum % 100) / 99.0);
    }
    return out;
  }
};

const Timestamp kNow = timestamp_from_epoch(1700000000);

}  // namespace

TEST_CASE("constant scorer and thresholding") {
  const ConstantScorer stub(0.7);
  CHECK(stub.score("anything") == 0.7);
  CHECK(stub.score_batch({"a", "b", "c"}) == std::vector<double>{0.7, 0.7, 0.7});
  CHECK(label_for(0.5, 0.5) == Label::machine);
  CHECK(label_for(0.49, 0.5) == Label::human);
  CHECK_THROWS_AS(ConstantScorer(1.5), Error);
  // Raising the threshold never turns a human label into a machine one.
  std::mt19937_64 rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double s = unit_draw(rng);
    const double lo = unit_draw(rng);
    const double hi = lo + unit_draw(rng) * (1 - lo);
    if (label_for(s, lo) == Label::human) CHECK(label_for(s, hi) == Label::human);
  }
}

TEST_CASE("hashed features are unit length and whitespace invariant") {
  const auto x = hashed_features("The council met on Tuesday.");
  double norm = 0;
  for (const auto& [j, v] : x) {
    CHECK(j < kHashDims);
    norm += v * v;
  }
  CHECK(norm == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(hashed_features("The  council\nmet on   Tuesday.") == x);
  CHECK(hashed_features("THE COUNCIL MET ON TUESDAY.") == x);
  CHECK(hashed_features("ab").empty());
  CHECK(std::is_sorted(x.begin(), x.end()));
}

TEST_CASE("separable toy corpus trains to perfect accuracy, deterministically") {
  const auto data = toy_corpus(4);
  TrainOptions opts;
  opts.seed = 9;
  TrainReport rep;
  const auto model = train_baseline(data, opts, &rep);
  for (const auto& t : data) {
    CHECK(label_for(model.score(t.text), kDefaultTau) == t.label);
  }
  const auto again = train_baseline(data, opts);
  CHECK(again.weights() == model.weights());
  CHECK(again.bias() == model.bias());
  CHECK(again.model_id() == model.model_id());
  REQUIRE(rep.epoch_losses.size() == static_cast<std::size_t>(opts.epochs));
  for (std::size_t i = 1; i < rep.epoch_losses.size(); ++i) CHECK(rep.epoch_losses[i] <= rep.epoch_losses[i - 1]);
}

TEST_CASE("training rejects bad datasets") {
  auto data = toy_corpus(1);
  for (auto& t : data) t.label = Label::human;
  CHECK_THROWS_AS(train_baseline(data), Error);
  data = toy_corpus(1);
  data[3].text = "short";
  CHECK_THROWS_AS(train_baseline(data), Error);
}

TEST_CASE("loss never increases even with an aggressive step") {
  const auto fixture = testing::make_news_fixture(testing::human_news_path(kFixtures), 3);
  TrainOptions opts;
  opts.learning_rate = 500.0;
  opts.epochs = 6;
  TrainReport rep;
  train_baseline(fixture.train, opts, &rep);
  CHECK(rep.step_halvings > 0);
  for (std::size_t i = 1; i < rep.epoch_losses.size(); ++i) CHECK(rep.epoch_losses[i] <= rep.epoch_losses[i - 1]);
}

TEST_CASE("baseline on the news fixture") {
  const auto fixture = testing::make_news_fixture(testing::human_news_path(kFixtures), 2024);
  CHECK(fixture.train.size() == 48);
  CHECK(fixture.test.size() == 12);
  for (const auto& t : fixture.train) CHECK(utf8_length(t.text) >= kMinArticleChars);
  const auto model = train_baseline(fixture.train, {});

  std::size_t fit = 0;
  for (const auto& t : fixture.train) fit += label_for(model.score(t.text), kDefaultTau) == t.label;
  CHECK(fit * 100 >= fixture.train.size() * 95);

  std::size_t tp = 0, fp = 0, fn = 0;
  for (const auto& t : fixture.test) {
    const bool pred = label_for(model.score(t.text), kDefaultTau) == Label::machine;
    const bool truth = t.label == Label::machine;
    tp += pred && truth;
    fp += pred && !truth;
    fn += !pred && truth;
  }
  const double f1 = 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
  MESSAGE("held-out F1 " << f1 << " (tp " << tp << ", fp " << fp << ", fn " << fn << ")");
  CHECK(f1 >= 0.85);

  // Scores stay in range for arbitrary input.
  std::mt19937_64 rng(77);
  for (int i = 0; i < 10000; ++i) {
    std::string s(bounded_draw(rng, 64), '\0');
    for (auto& c : s) c = static_cast<char>(bounded_draw(rng, 256));
    const double p = model.score(s);
    REQUIRE((p >= 0.0 && p <= 1.0));
  }

  const auto path = temp_path("model.bin");
  model.save(path);
  const auto loaded = BaselineModel::load(path);
  CHECK(loaded.model_id() == model.model_id());
  CHECK(loaded.weights() == model.weights());
  for (const auto& t : fixture.test) CHECK(loaded.score(t.text) == model.score(t.text));
  write_file(path, read_file(path).substr(0, 40));
  CHECK_THROWS_AS(BaselineModel::load(path), ParseError);
}

TEST_CASE("remote scorer protocol") {
  int requests = 0;
  testing::FixtureServer server(std::filesystem::temp_directory_path(),
                                [&](const httplib::Request& req, httplib::Response& res) {
                                  ++requests;
                                  const auto texts = nlohmann::json::parse(req.body).at("texts");
                                  nlohmann::json scores = nlohmann::json::array();
                                  for (const auto& t : texts) scores.push_back(t.get<std::string>().size() / 10.0);
                                  if (req.path == "/short/score") scores.erase(scores.size() - 1);
                                  if (req.path == "/range/score") scores[0] = 1.5;
                                  if (req.path == "/down/score") {
                                    res.status = 503;
                                    return true;
                                  }
                                  res.set_content(nlohmann::json{{"scores", scores}}.dump(), "application/json");
                                  return true;
                                });
  const auto base = "http://" + server.address();
  const RemoteScorer ok(base, "remote-test");
  CHECK(ok.score_batch({"a", "bbb", "cc"}) == std::vector<double>{0.1, 0.3, 0.2});
  CHECK(ok.score_batch({}).empty());
  CHECK(requests == 1);
  CHECK_THROWS_AS(RemoteScorer(base + "/short").score_batch({"a", "b", "c"}), ProtocolError);
  CHECK_THROWS_AS(RemoteScorer(base + "/range").score_batch({"a"}), ProtocolError);
  CHECK_THROWS_AS(RemoteScorer(base + "/down", "r", {}, {2, std::chrono::milliseconds(1)}).score_batch({"a"}),
                  RemoteUnavailable);
}

TEST_CASE("classify_corpus scores every admitted article once") {
  auto articles = fixture_articles(100);
  const auto out = temp_path("scores.jsonl");
  ClassifyOptions opts;
  opts.now = kNow;
  opts.jobs = 3;
  opts.batch_size = 7;
  const auto rep = classify_corpus(articles, ConstantScorer(0.7, "stub"), out, opts);
  CHECK(rep.scored == 100);
  CHECK(rep.unscored == 0);
  const auto scores = load_scores(out);
  REQUIRE(scores.size() == 100);
  for (const auto& s : scores) {
    CHECK(s.score == 0.7);
    CHECK(s.label == Label::machine);
    CHECK(s.model_id == "stub");
    CHECK(s.scored_at == kNow);
  }
  CHECK(std::is_sorted(scores.begin(), scores.end(),
                       [](const auto& a, const auto& b) { return a.article_id < b.article_id; }));

  // A second model coexists; a rerun of the first scores nothing new.
  classify_corpus(articles, DigitScorer(), out, opts);
  CHECK(load_scores(out).size() == 200);
  const auto again = classify_corpus(articles, ConstantScorer(0.7, "stub"), out, opts);
  CHECK(again.scored == 0);
  CHECK(again.resumed == 100);
}

TEST_CASE("interrupted run resumes to the same result") {
  const auto articles = fixture_articles(60);
  ClassifyOptions opts;
  opts.now = kNow;
  opts.batch_size = 4;
  const auto full = temp_path("full.jsonl");
  classify_corpus(articles, DigitScorer(), full, opts);
  const auto expected = read_file(full);

  // What a killed writer leaves: some complete lines in completion order and a
  // torn last line.
  const auto partial = temp_path("partial.jsonl");
  std::vector<std::string> lines;
  for (std::size_t pos = 0; pos < expected.size();) {
    const auto nl = expected.find('\n', pos);
    lines.push_back(expected.substr(pos, nl - pos + 1));
    pos = nl + 1;
  }
  std::string torn;
  for (std::size_t i = 0; i < 25; ++i) torn += lines[(i * 7) % lines.size()];
  torn += lines[30].substr(0, lines[30].size() / 2);
  write_file(partial, torn);
  opts.jobs = 2;
  const auto rep = classify_corpus(articles, DigitScorer(), partial, opts);
  CHECK(rep.resumed == 25);
  CHECK(rep.scored == 35);
  CHECK(read_file(partial) == expected);

  write_file(partial, lines[0] + "{broken\n" + lines[1]);
  CHECK_THROWS_AS(load_scores(partial), ParseError);
}

TEST_CASE("scorer failures leave articles unscored and the run continues") {
  auto articles = fixture_articles(20);
  articles[3].text += " poison";
  articles[11].text += " poison";
  articles[5].admitted = false;
  const auto out = temp_path("fail.jsonl");
  ClassifyOptions opts;
  opts.now = kNow;
  const auto rep = classify_corpus(articles, DigitScorer(), out, opts);
  CHECK(rep.skipped == 1);
  CHECK(rep.unscored == 2);
  CHECK(rep.failures.size() == 2);
  CHECK(rep.scored == 17);
  CHECK(load_scores(out).size() == 20 - 1 - 2);
}
