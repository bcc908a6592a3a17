#include "doctest.h"

#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "synth/error.hpp"
#include "synth/social.hpp"
#include "synth/text.hpp"
#include "synth/url.hpp"

using namespace synth;
using namespace synth::social;

namespace {

std::string line(const std::string& id, const std::string& url, long long created, long long comments,
                 const std::string& sub = "news") {
  return R"({"id": ")" + id + R"(", "url": ")" + url + R"(", "created_utc": )" + std::to_string(created) +
         R"(, "subreddit": ")" + sub + R"(", "num_comments": )" + std::to_string(comments) + "}\n";
}

ArticleRecord article(const std::string& url, const std::string& domain) {
  ArticleRecord a;
  a.url = normalize_url(url);
  a.domain = domain;
  a.id = hex64(fnv1a64(a.url));
  return a;
}

std::vector<double> draws(std::mt19937_64& rng, std::size_t n, int levels) {
  std::vector<double> v;
  for (std::size_t i = 0; i < n; ++i) v.push_back(static_cast<double>(bounded_draw(rng, static_cast<std::uint64_t>(levels))));
  return v;
}

}  // namespace

TEST_CASE("ingesting a submission dump") {
  std::stringstream in;
  in << line("a1", "https://www.example.com/story?utm_source=x", 1643673600, 12)
     << line("a2", "https://example.com/other", 1643673700, 0) << "\n"
     << R"({"id": "a3", "url": "https://example.com/x", "created_utc": "1643673800", "subreddit": "news", "num_comments": 3})"
     << "\n"
     << line("a4", "https://news.site/a", 1643673900, 5) << line("a5", "https://news.site/b", 1643674000, 7);
  IngestStats st;
  const auto subs = ingest_dump(in, {}, &st);
  CHECK(subs.size() == 5);
  CHECK(st.lines == 5);
  CHECK(st.malformed == 0);
  CHECK(format_timestamp(subs[0].created_at) == "2022-02-01T00:00:00Z");
  CHECK(subs[0].url == normalize_url("https://www.example.com/story"));
  CHECK(subs[2].created_at == timestamp_from_epoch(1643673800));

  std::stringstream missing;
  missing << line("b1", "https://a.com/1", 1643673600, 1) << R"({"id": "b2", "created_utc": 1643673600, "subreddit": "x", "num_comments": 1})"
          << "\n"
          << line("b3", "https://a.com/3", 1643673600, 1);
  const auto two = ingest_dump(missing, {}, &st);
  CHECK(two.size() == 2);
  CHECK(st.malformed == 1);

  std::stringstream bad;
  bad << line("c1", "https://a.com/1", 1643673600, 1) << "not json\n" << R"({"id": "c3"})" << "\n";
  CHECK_THROWS_AS(ingest_dump(bad), ParseError);

  // 1% of 300 lines is tolerated, one more is not.
  std::stringstream big, bigger;
  for (int i = 0; i < 297; ++i) big << line("d" + std::to_string(i), "https://a.com/" + std::to_string(i), 1643673600, 1);
  bigger << big.str() << "{}\n{}\n{}\n{}\n";
  big << "{}\n{}\n{}\n";
  CHECK(ingest_dump(big, {}, &st).size() == 297);
  CHECK(st.malformed == 3);
  CHECK_THROWS_AS(ingest_dump(bigger), ParseError);

  std::stringstream window;
  window << line("e1", "https://a.com/1", 1640995200 - 1, 1) << line("e2", "https://a.com/2", 1640995200, 1)
         << line("e3", "https://a.com/3", 1680307200, 1);  // 2023-04-01
  IngestOptions opt;
  opt.from = parse_date("2022-01-01");
  opt.to = parse_date("2023-03-31");
  CHECK(ingest_dump(window, opt, &st).size() == 1);
  CHECK(st.out_of_window == 2);
  // Negative comment counts are malformed; one such line is within the allowance.
  std::stringstream neg;
  neg << line("f1", "https://a.com/1", 1643673600, -1) << line("f2", "https://a.com/2", 1643673600, 0);
  CHECK(ingest_dump(neg, {}, &st).size() == 1);
  CHECK(st.malformed == 1);
}

TEST_CASE("joining submissions to articles") {
  const std::vector<ArticleRecord> articles = {article("https://a.com/one", "a.com"),
                                               article("https://b.com/two", "b.com")};
  std::stringstream in;
  in << line("s1", "https://a.com/one?utm_campaign=z", 1643673600, 4) << line("s2", "https://c.com/nope", 1643673600, 1)
     << line("s3", "https://b.com/two", 1643673600, 2) << line("s4", "https://a.com/one", 1643760000, 9)
     << line("s5", "https://www.b.com/two", 1643673600, 1);
  const auto pairs = join_articles(ingest_dump(in), articles);
  REQUIRE(pairs.size() == 3);
  CHECK(pairs[0].submission.id == "s1");
  CHECK(pairs[0].article_id == articles[0].id);
  CHECK(pairs[1].domain == "b.com");
  std::set<std::string> distinct;
  for (const auto& p : pairs) {
    if (p.domain == "a.com") distinct.insert(p.article_id);
  }
  CHECK(distinct.size() == 1);
}

TEST_CASE("share series by submissions and comments") {
  std::vector<SiteRecord> sites(2);
  sites[0].domain = "m.com";
  sites[0].reliability = Reliability::unreliable;
  sites[1].domain = "r.com";
  sites[1].reliability = Reliability::reliable;
  std::vector<Pair> pairs;
  std::map<std::string, Label> labels;
  for (int i = 0; i < 10; ++i) {
    Pair p;
    p.article_id = "m" + std::to_string(i);
    p.domain = "m.com";
    p.submission.created_at = timestamp_from_epoch(1643673600 + i * 3600);  // February 2022
    p.submission.num_comments = i;
    labels[p.article_id] = i < 2 ? Label::machine : Label::human;
    pairs.push_back(p);
  }
  Pair other;
  other.article_id = "r0";
  other.domain = "r.com";
  other.submission.created_at = timestamp_from_epoch(1643673600);
  labels["r0"] = Label::machine;
  pairs.push_back(other);
  Pair unlabeled = pairs[0];
  unlabeled.article_id = "none";
  pairs.push_back(unlabeled);

  const auto subs = share_series(pairs, labels, sites, Weight::submissions, Reliability::unreliable);
  REQUIRE(subs.size() == 1);
  CHECK(subs[0].month == "2022-02");
  CHECK(subs[0].share == doctest::Approx(0.2));
  CHECK(subs[0].total == 10);
  CHECK(subs[0].machine_daily_average == doctest::Approx(2.0 / 28));
  const auto comments = share_series(pairs, labels, sites, Weight::comments, Reliability::unreliable);
  // Same join: totals are the comment sums over the same ten pairs.
  CHECK(comments[0].total == 45);
  CHECK(comments[0].machine == 1);
  CHECK(to_csv(subs, Reliability::unreliable, Weight::submissions).find("2022-02,unreliable,submissions,2,10,20.0000,") !=
        std::string::npos);
  // All-zero comment months are omitted.
  for (auto& p : pairs) p.submission.num_comments = 0;
  CHECK(share_series(pairs, labels, sites, Weight::comments, Reliability::unreliable).empty());
}

TEST_CASE("pearson") {
  const std::vector<double> x = {1, 2, 3, 4, 5};
  std::vector<double> y, z;
  for (const double v : x) {
    y.push_back(2 * v + 1);
    z.push_back(-v);
  }
  CHECK(pearson(x, y).rho == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(pearson(x, z).rho == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(pearson(x, {3, 3, 3, 3, 3}).undefined);
  CHECK_THROWS_AS(pearson({1, 2}, {1, 2}), Error);
  CHECK_THROWS_AS(pearson({1, 2, 3}, {1, 2}), Error);

  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> a, b;
    for (int i = 0; i < 50; ++i) {
      a.push_back(normal_draw(rng));
      b.push_back(0.3 * a.back() + normal_draw(rng));
    }
    // One-pass sums formula.
    double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
    for (int i = 0; i < 50; ++i) {
      sa += a[i];
      sb += b[i];
      saa += a[i] * a[i];
      sbb += b[i] * b[i];
      sab += a[i] * b[i];
    }
    const double direct = (50 * sab - sa * sb) / std::sqrt((50 * saa - sa * sa) * (50 * sbb - sb * sb));
    const double rho = pearson(a, b).rho;
    CHECK(std::abs(rho - direct) < 1e-12);
    // Affine invariance up to the sign of the slope.
    std::vector<double> scaled;
    for (const double v : a) scaled.push_back(-3.5 * v + 11);
    CHECK(std::abs(pearson(scaled, b).rho + rho) < 1e-12);
  }
}

TEST_CASE("cohen's d controlled by domain") {
  // One domain: human {1,2,3}, machine {5,7}; domain mean 3.6.
  std::vector<DomainValue> v = {{"a", false, 1}, {"a", false, 2}, {"a", false, 3}, {"a", true, 5}, {"a", true, 7}};
  const auto r = cohens_d_by_domain(v);
  CHECK(r.centered_difference == doctest::Approx(-4.0).epsilon(1e-12));
  CHECK(r.raw_difference == doctest::Approx(-4.0).epsilon(1e-12));
  CHECK(std::abs(r.d - (-4.0 / std::sqrt(4.0 / 3.0))) < 1e-12);
  CHECK(r.domains == 1);

  // Domains without both labels are dropped; a per-domain shift changes nothing.
  v.push_back({"solo", false, 100});
  v.push_back({"b", false, 10});
  v.push_back({"b", true, 30});
  v.push_back({"b", true, 20});
  const auto two = cohens_d_by_domain(v);
  CHECK(two.domains == 2);
  CHECK(two.n_human == 4);
  auto shifted = v;
  for (auto& x : shifted) {
    if (x.domain == "b") x.value += 1000;
  }
  CHECK(std::abs(cohens_d_by_domain(shifted).d - two.d) < 1e-12);

  // Zero variance after centering.
  const auto flat = cohens_d_by_domain({{"a", false, 0}, {"a", false, 0}, {"a", true, 1}, {"a", true, 1}});
  CHECK(flat.zero_variance);
  CHECK(std::isnan(flat.d));
  CHECK(flat.centered_difference == doctest::Approx(-1.0));
  CHECK_THROWS_AS(cohens_d_by_domain({{"a", false, 1}, {"b", true, 2}}), Error);

  // Randomized fixtures against a direct two-group formula on centered values.
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<DomainValue> vals;
    std::map<std::string, std::pair<double, int>> sums;
    for (int i = 0; i < 60; ++i) {
      const std::string d = "d" + std::to_string(bounded_draw(rng, 5));
      const bool m = bounded_draw(rng, 2);
      const double c = static_cast<double>(bounded_draw(rng, 40)) + (m ? 3 : 0);
      vals.push_back({d, m, c});
      sums[d].first += c;
      sums[d].second += 1;
    }
    std::vector<double> h, m;
    std::map<std::string, std::set<bool>> seen;
    for (const auto& x : vals) seen[x.domain].insert(x.machine);
    for (const auto& x : vals) {
      if (seen[x.domain].size() < 2) continue;
      (x.machine ? m : h).push_back(x.value - sums[x.domain].first / sums[x.domain].second);
    }
    const auto mean = [](const std::vector<double>& s) {
      double t = 0;
      for (const double q : s) t += q;
      return t / static_cast<double>(s.size());
    };
    const auto var = [&](const std::vector<double>& s) {
      const double mu = mean(s);
      double t = 0;
      for (const double q : s) t += (q - mu) * (q - mu);
      return t / static_cast<double>(s.size() - 1);
    };
    const double sp = std::sqrt(((h.size() - 1) * var(h) + (m.size() - 1) * var(m)) / (h.size() + m.size() - 2));
    CHECK(std::abs(cohens_d_by_domain(vals).d - (mean(h) - mean(m)) / sp) < 1e-12);
  }
}

TEST_CASE("mann-whitney") {
  const auto r = mann_whitney({1, 2}, {3, 4});
  CHECK(r.u_a == 0);
  CHECK(r.u_b == 4);
  CHECK(r.exact);
  CHECK(r.p == doctest::Approx(2.0 / 6));
  CHECK(mann_whitney({1, 2, 3}, {1, 2, 3}).p == 1.0);
  CHECK(mann_whitney_normal_p({5, 5}, {5, 5}) == 1.0);
  // Ties take midranks: pooled {1,2,2,3} ranks 1, 2.5, 2.5, 4.
  const auto t = mann_whitney({1, 2}, {2, 3});
  CHECK(t.u_a == 0.5);
  CHECK(t.u_b == 3.5);
  CHECK_THROWS_AS(mann_whitney({}, {1}), Error);

  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 500; ++trial) {
    const auto a = draws(rng, 1 + bounded_draw(rng, 12), 8);
    const auto b = draws(rng, 1 + bounded_draw(rng, 12), 8);
    const auto m = mann_whitney(a, b);
    CHECK(m.u_a + m.u_b == static_cast<double>(a.size() * b.size()));
    CHECK(m.p >= 0);
    CHECK(m.p <= 1);
    CHECK(m.exact == (a.size() + b.size() <= 16));
  }
  // Four against four: normal and exact agree closely for these sizes.
  double worst = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto a = draws(rng, 8, 1000);
    const auto b = draws(rng, 8, 1000);
    worst = std::max(worst, std::abs(mann_whitney_exact_p(a, b) - mann_whitney_normal_p(a, b)));
  }
  MESSAGE("largest exact/normal p gap at 8 vs 8: " << worst);
  CHECK(worst < 0.02);
}

TEST_CASE("log-scale change") {
  const auto same = log_scale_change({1, 4, 9}, {9, 1, 4});
  CHECK(same.pct == doctest::Approx(0.0));
  const auto c = log_scale_change({1, 3}, {3, 9});
  const double a = (std::log(2.0) + std::log(4.0)) / 2, b = (std::log(4.0) + std::log(10.0)) / 2;
  CHECK(std::abs(c.pct - 100 * (b - a) / a) < 1e-12);
  CHECK(log_scale_change({0, 0}, {1}).undefined);
  CHECK_THROWS_AS(log_scale_change({-1}, {1}), Error);
}
