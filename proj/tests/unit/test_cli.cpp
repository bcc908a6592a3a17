#include "doctest.h"

#include <cmath>
#include <cstdlib>
#include <random>
#include <sstream>

// Eigen before httplib: resolv.h defines _res, which Eigen uses as a name.
#include "synth/cli.hpp"
#include "synth/csv.hpp"
#include "synth/detect.hpp"
#include "synth/error.hpp"
#include "synth/plot.hpp"
#include "synth/text.hpp"

#include "fixture_server.hpp"
#include "pipeline_fixture.hpp"

using namespace synth;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("synth_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run_cli(const std::vector<std::string>& args, std::string* out = nullptr, std::string* err = nullptr) {
  std::ostringstream o, e;
  const int code = cli::run(args, o, e);
  if (out) *out = o.str();
  if (err) *err = e.str();
  return code;
}

std::string digest_tree(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::string d;
  for (const auto& f : files) d += fs::relative(f, dir).string() + ':' + hex64(fnv1a64(read_file(f))) + '\n';
  return d;
}

// Minimal joined inputs: one unreliable and one reliable site, scored articles.
struct TinyCorpus {
  fs::path articles, scores, sites;
};

TinyCorpus tiny_corpus(const fs::path& dir) {
  std::vector<SiteRecord> sites(2);
  sites[0].domain = "u.test";
  sites[0].reliability = Reliability::unreliable;
  sites[0].bucket = CruxBucket::B10Mplus;
  sites[1].domain = "r.test";
  sites[1].reliability = Reliability::reliable;
  sites[1].bucket_value = 1000;
  sites[1].bucket = CruxBucket::B10K;
  std::vector<ArticleRecord> articles;
  std::vector<detect::DetectionScore> scores;
  const std::string body(1200, 'a');
  for (int i = 0; i < 40; ++i) {
    const std::string domain = i % 2 ? "u.test" : "r.test";
    const Date d = add_days(*parse_date("2022-01-01"), i * 3);
    const std::string text = "Story number " + std::to_string(i) + " reports on the harbor. " + body;
    auto a = make_article("http://" + domain + "/s" + std::to_string(i), domain, d, timestamp_from_epoch(0),
                          "t", text, "en");
    detect::DetectionScore s;
    s.article_id = a.id;
    s.score = (i % 3 == 0) ? 0.9 : 0.1;
    s.label = detect::label_for(s.score, 0.5);
    s.model_id = "m";
    scores.push_back(s);
    articles.push_back(std::move(a));
  }
  TinyCorpus t{dir / "articles.jsonl", dir / "scores.jsonl", dir / "sites.csv"};
  store_articles(articles, t.articles);
  detect::store_scores(scores, t.scores);
  store_sites(sites, t.sites);
  return t;
}

}  // namespace

TEST_CASE("csv parsing") {
  const auto rows = parse_csv("a,b,c\n1,\"x, y\",\"say \"\"hi\"\"\"\n2,\"multi\nline\",\n");
  REQUIRE(rows.size() == 3);
  CHECK(rows[1][1] == "x, y");
  CHECK(rows[1][2] == "say \"hi\"");
  CHECK(rows[2][1] == "multi\nline");
  CHECK(rows[2][2].empty());
  CHECK(parse_csv("a,b").size() == 1);
  CHECK(parse_csv("").empty());
  CHECK_THROWS_AS(parse_csv("a,\"open\n"), ParseError);
  CHECK(csv_column(rows[0], "c") == 2);
  CHECK_THROWS_AS(csv_column(rows[0], "z"), ParseError);
}

TEST_CASE("svg line charts") {
  CHECK(plot::nice_ceiling(0.0) == 1.0);
  CHECK(plot::nice_ceiling(7.3) == 10.0);
  CHECK(plot::nice_ceiling(1.5) == 2.0);
  CHECK(plot::nice_ceiling(0.04) == doctest::Approx(0.05));
  CHECK(plot::nice_ceiling(20.0) == 20.0);
  plot::LineChart c;
  c.title = "A & B";
  c.x = {"2022-01", "2022-02", "2022-03", "2022-04"};
  c.series.push_back({"micro", {1, 2, NAN, 4}, {0.5, 1.5, NAN, 3}, {1.5, 2.5, NAN, 5}});
  const auto svg = plot::render_svg(c);
  CHECK(svg == plot::render_svg(c));
  CHECK(svg.find("A &amp; B") != std::string::npos);
  CHECK(svg.rfind("<svg", 0) == 0);
  // The gap splits the line and the band.
  const auto path = svg.substr(svg.find("<path d=\""));
  CHECK(path.substr(0, path.find("/>")).find(" M") != std::string::npos);
  std::size_t polygons = 0;
  for (auto p = svg.find("<polygon"); p != std::string::npos; p = svg.find("<polygon", p + 1)) ++polygons;
  CHECK(polygons == 2);
  c.series[0].y.pop_back();
  CHECK_THROWS_AS(plot::render_svg(c), Error);
}

TEST_CASE("groups and config files") {
  CHECK(cli::parse_group("unreliable/B10K") == prevalence::Group{Reliability::unreliable, CruxBucket::B10K});
  CHECK(cli::parse_group("ALL/ALL") == prevalence::Group{});
  CHECK_THROWS_AS(cli::parse_group("unreliable"), UsageError);
  CHECK_THROWS_AS(cli::parse_group("odd/B10K"), UsageError);
  const auto dir = scratch("config");
  write_file(dir / "a.cfg", "# defaults\n\ntau = 0.7\njobs=2\n");
  const auto cfg = cli::load_config(dir / "a.cfg");
  CHECK(cfg.at("tau") == "0.7");
  CHECK(cfg.at("jobs") == "2");
  write_file(dir / "b.cfg", "tau=0.7\ntau=0.8\n");
  CHECK_THROWS_AS(cli::load_config(dir / "b.cfg"), UsageError);
  write_file(dir / "c.cfg", "just words\n");
  CHECK_THROWS_AS(cli::load_config(dir / "c.cfg"), UsageError);
}

TEST_CASE("exit codes") {
  std::string out, err;
  CHECK(run_cli({"--help"}, &out) == 0);
  CHECK(out.find("prevalence") != std::string::npos);
  CHECK(run_cli({}) == 2);
  CHECK(run_cli({"classify", "--in", "a.jsonl", "--out", "s.jsonl"}, nullptr, &err) == 2);
  CHECK(err.find("--model") != std::string::npos);
  CHECK(run_cli({"classify", "--model", "m", "--remote", "http://x", "--in", "a", "--out", "b"}) == 2);
  CHECK(run_cli({"its", "--no-such-flag"}) == 2);
  CHECK(run_cli({"prevalence", "--articles", "/nonexistent/a.jsonl", "--scores", "s", "--sites", "x", "--out", "o"},
            nullptr, &err) == 1);
  CHECK(err.find("/nonexistent/a.jsonl") != std::string::npos);
  CHECK(run_cli({"its", "--prevalence", "/nonexistent/d.csv", "--out", "x", "--order", "1,0"}) == 1);
}

TEST_CASE("config precedence: flag over file over default") {
  const auto dir = scratch("precedence");
  const auto t = tiny_corpus(dir);
  write_file(dir / "run.cfg", "min-articles=7\ntop-k=3\n");
  const std::vector<std::string> base = {"prevalence", "--articles", t.articles.string(), "--scores", t.scores.string(),
                                         "--sites", t.sites.string(), "--out", (dir / "p.csv").string(),
                                         "--top-month", "2022-02", "--top-out", (dir / "top.csv").string()};
  auto args = base;
  args.insert(args.begin(), {"--config", (dir / "run.cfg").string()});
  args.insert(args.end(), {"--top-k", "5"});
  REQUIRE(run_cli(args) == 0);
  const auto snap = read_file(dir / "p.csv.config");
  CHECK(snap.find("min-articles=7\n") != std::string::npos);
  CHECK(snap.find("top-k=5\n") != std::string::npos);
  CHECK(snap.find("model-id=\n") != std::string::npos);

  // The environment names the default config; an explicit --config wins.
  write_file(dir / "env.cfg", "min-articles=11\n");
  ::setenv("SYNTH_CONFIG", (dir / "env.cfg").c_str(), 1);
  REQUIRE(run_cli(base) == 0);
  CHECK(read_file(dir / "p.csv.config").find("min-articles=11\n") != std::string::npos);
  REQUIRE(run_cli(args) == 0);
  CHECK(read_file(dir / "p.csv.config").find("min-articles=7\n") != std::string::npos);
  ::unsetenv("SYNTH_CONFIG");

  write_file(dir / "bad.cfg", "no-such-option=1\n");
  auto bad = base;
  bad.insert(bad.begin(), {"--config", (dir / "bad.cfg").string()});
  CHECK(run_cli(bad) == 2);
  auto missing = base;
  missing.insert(missing.begin(), {"--config", (dir / "absent.cfg").string()});
  CHECK(run_cli(missing) == 1);
}

TEST_CASE("prevalence outputs and re-runs") {
  const auto dir = scratch("prevalence");
  const auto t = tiny_corpus(dir);
  const auto inputs = digest_tree(dir);
  const auto out = dir / "out";
  const std::vector<std::string> args = {"prevalence", "--articles", t.articles.string(), "--scores",
                                         t.scores.string(), "--sites", t.sites.string(), "--out",
                                         (out / "p.csv").string(), "--daily-out", (out / "daily.csv").string(),
                                         "--adoption-out", (out / "adoption.csv").string()};
  REQUIRE(run_cli(args) == 0);
  const auto first = digest_tree(out);
  REQUIRE(run_cli(args) == 0);
  CHECK(digest_tree(out) == first);
  fs::remove_all(out);
  CHECK(digest_tree(dir) == inputs);  // inputs untouched

  REQUIRE(run_cli(args) == 0);
  const auto daily = parse_csv(read_file(out / "daily.csv"));
  REQUIRE(daily.size() > 1);
  CHECK(daily[0] == std::vector<std::string>{"date", "group", "aggregation", "n_articles", "n_synthetic", "n_sites",
                                              "pct"});
  // Daily rows of each group add up to the monthly totals.
  std::size_t n = 0, syn = 0;
  for (std::size_t i = 1; i < daily.size(); ++i) {
    if (daily[i][1] == "ALL/ALL" && daily[i][2] == "micro") {
      n += std::stoul(daily[i][3]);
      syn += std::stoul(daily[i][4]);
    }
  }
  CHECK(n == 40);
  CHECK(syn == 14);
  const auto adoption = parse_csv(read_file(out / "adoption.csv"));
  CHECK(adoption[0][0] == "window_start");
  CHECK(adoption.size() > 2);

  REQUIRE(run_cli({"report", "--prevalence", (out / "p.csv").string(), "--adoption", (out / "adoption.csv").string(),
               "--out-dir", (out / "report").string()}) == 0);
  CHECK(fs::exists(out / "report" / "prevalence_ALL_ALL.svg"));
  CHECK(fs::exists(out / "report" / "prevalence_unreliable_B10Mplus.csv"));
  CHECK(fs::exists(out / "report" / "adoption.svg"));
  const auto report_once = digest_tree(out / "report");
  REQUIRE(run_cli({"report", "--prevalence", (out / "p.csv").string(), "--adoption", (out / "adoption.csv").string(),
               "--out-dir", (out / "report").string()}) == 0);
  CHECK(digest_tree(out / "report") == report_once);
}

TEST_CASE("its subcommand fits every class and stratum") {
  const auto dir = scratch("its");
  std::mt19937_64 rng(4);
  std::string csv = "date,group,aggregation,n_articles,n_synthetic,n_sites,pct\n";
  const Date start = *parse_date("2022-09-01");
  for (const std::string g : {"ALL/ALL", "unreliable/ALL", "reliable/ALL"}) {
    const double jump = g == "unreliable/ALL" ? 5.0 : 0.0;
    for (int i = 0; i < 150; ++i) {
      const Date d = add_days(start, i);
      const double v = 10 + (d >= *parse_date("2022-11-30") ? jump : 0.0) + 0.3 * normal_draw(rng);
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.4f", v);
      csv += format_date(d) + ',' + g + ",micro,100,10,5," + buf + '\n';
    }
  }
  write_file(dir / "daily.csv", csv);
  std::string out;
  REQUIRE(run_cli({"its", "--prevalence", (dir / "daily.csv").string(), "--out", (dir / "its.csv").string(), "--order",
               "0,0,0"},
              &out) == 0);
  const auto rows = parse_csv(read_file(dir / "its.csv"));
  REQUIRE(rows.size() == 3);  // header, unreliable, reliable
  const auto c_class = csv_column(rows[0], "class"), c_b2 = csv_column(rows[0], "beta2");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double b2 = std::stod(rows[i][c_b2]);
    CHECK(std::abs(b2 - (rows[i][c_class] == "unreliable" ? 5.0 : 0.0)) < 0.3);
  }
  CHECK(out.find("ALL") != std::string::npos);

  // Cadence bins and automatic order selection run too.
  REQUIRE(run_cli({"its", "--prevalence", (dir / "daily.csv").string(), "--out", (dir / "weekly.csv").string(),
               "--cadence", "3"}) == 0);
  CHECK(parse_csv(read_file(dir / "weekly.csv")).size() == 3);

  // A missing day is rejected unless interpolation is asked for.
  std::string holes = csv;
  const auto cut = holes.find("2022-09-10,ALL/ALL");
  holes.erase(cut, holes.find('\n', cut) - cut + 1);
  const auto cut2 = holes.find("2022-09-10,unreliable/ALL");
  holes.erase(cut2, holes.find('\n', cut2) - cut2 + 1);
  write_file(dir / "holes.csv", holes);
  std::string err;
  REQUIRE(run_cli({"its", "--prevalence", (dir / "holes.csv").string(), "--out", (dir / "h.csv").string(), "--order",
               "0,0,0"},
              nullptr, &err) == 0);
  CHECK(err.find("skipping unreliable/ALL") != std::string::npos);
  CHECK(parse_csv(read_file(dir / "h.csv")).size() == 2);
  REQUIRE(run_cli({"its", "--prevalence", (dir / "holes.csv").string(), "--out", (dir / "h.csv").string(), "--order",
               "0,0,0", "--gaps", "interpolate"}) == 0);
  CHECK(parse_csv(read_file(dir / "h.csv")).size() == 3);
  CHECK(run_cli({"its", "--prevalence", (dir / "holes.csv").string(), "--out", (dir / "h.csv").string(), "--order",
             "x"}) == 2);
}

TEST_CASE("social subcommand") {
  const auto dir = scratch("social");
  const auto t = tiny_corpus(dir);
  const auto articles = load_articles(t.articles);
  std::string dump;
  for (std::size_t i = 0; i < articles.size(); ++i) {
    const auto& a = articles[i];
    const long long created = 1641000000 + static_cast<long long>(i) * 86400 * 3;
    dump += nlohmann::json{{"id", "p" + std::to_string(i)}, {"url", a.url}, {"created_utc", created},
                           {"subreddit", "news"}, {"num_comments", static_cast<long long>(i % 7)}}
                .dump() +
            '\n';
  }
  dump += "{\"id\": \"broken\"}\n";
  write_file(dir / "dump.ndjson", dump);
  std::string out;
  REQUIRE(run_cli({"social", "--dump", (dir / "dump.ndjson").string(), "--articles", t.articles.string(), "--scores",
               t.scores.string(), "--sites", t.sites.string(), "--out", (dir / "social.csv").string(),
               "--summary-out", (dir / "summary.csv").string()},
              &out) == 0);
  CHECK(out.find("malformed=1") != std::string::npos);
  CHECK(out.find("pairs=40") != std::string::npos);
  const auto rows = parse_csv(read_file(dir / "social.csv"));
  CHECK(rows[0] == std::vector<std::string>{"month", "class", "weight", "machine", "total", "pct",
                                             "machine_daily_average"});
  const auto summary = parse_csv(read_file(dir / "summary.csv"));
  std::set<std::string> stats;
  for (std::size_t i = 1; i < summary.size(); ++i) stats.insert(summary[i][0] + ":" + summary[i][1]);
  CHECK(stats.count("unreliable:pearson_submissions"));
  CHECK(stats.count("reliable:cohens_d"));
  CHECK(stats.count("reliable:mann_whitney_p"));
  REQUIRE(run_cli({"report", "--prevalence", (dir / "none.csv").string(), "--out-dir", (dir / "r").string()}) == 1);
}

TEST_CASE("fixture pipeline through the command line") {
  const auto dir = scratch("pipeline");
  const auto f = testing::make_pipeline_fixture(dir, testing::human_news_path(SYNTH_FIXTURES), 5);
  testing::FixtureServer server(f.sites_root);
  const auto run = dir / "run";
  const std::string now = "2023-04-01T00:00:00Z";
  std::string out, err;
  REQUIRE(run_cli({"crawl", "--sites", f.sites_csv.string(), "--state-dir", (run / "state").string(), "--out",
               (run / "raw").string(), "--connect-to", server.address(), "--scheme", "http", "--interval-ms", "20",
               "--now", now},
              &out, &err) == 0);
  CHECK(out.find("alpha.test,1,") != std::string::npos);
  REQUIRE(run_cli({"extract", "--in", (run / "raw").string(), "--out", (run / "articles.jsonl").string()}, &out) == 0);
  const auto articles = load_articles(run / "articles.jsonl");
  CHECK(articles.size() == f.articles);
  std::size_t admitted = 0;
  for (const auto& a : articles) admitted += a.admitted;
  CHECK(admitted == f.articles);
  REQUIRE(run_cli({"train-baseline", "--in", f.train_jsonl.string(), "--out", (run / "baseline.bin").string(),
               "--epochs", "10"},
              &out) == 0);
  REQUIRE(run_cli({"classify", "--in", (run / "articles.jsonl").string(), "--model", (run / "baseline.bin").string(),
               "--out", (run / "scores.jsonl").string(), "--now", now},
              &out) == 0);
  CHECK(detect::load_scores(run / "scores.jsonl").size() == f.articles);
  REQUIRE(run_cli({"prevalence", "--articles", (run / "articles.jsonl").string(), "--scores",
               (run / "scores.jsonl").string(), "--sites", f.sites_csv.string(), "--out",
               (run / "prevalence.csv").string()},
              &out) == 0);
  REQUIRE(run_cli({"topics", "--articles", (run / "articles.jsonl").string(), "--scores", (run / "scores.jsonl").string(),
               "--sites", f.sites_csv.string(), "--month", "2023-02", "--out", (run / "topics.csv").string(),
               "--min-support", "1"},
              &out) == 0);
  CHECK(out.rfind("month,group,rank", 0) == 0);
  REQUIRE(run_cli({"report", "--prevalence", (run / "prevalence.csv").string(), "--out-dir",
               (run / "report").string()}) == 0);
  CHECK(fs::exists(run / "report" / "prevalence_unreliable_ALL.svg"));
}
