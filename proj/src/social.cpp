#include "synth/social.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <unordered_map>

#include "json.hpp"
#include "synth/error.hpp"
#include "synth/url.hpp"

namespace synth::social {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr std::size_t kExactLimit = 16;

std::optional<Submission> parse_submission(const std::string& line) {
  const auto j = nlohmann::json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return std::nullopt;
  const auto str = [&](const char* key) -> std::optional<std::string> {
    if (!j.contains(key) || !j.at(key).is_string()) return std::nullopt;
    return j.at(key).get<std::string>();
  };
  const auto id = str("id");
  const auto url = str("url");
  const auto sub = str("subreddit");
  if (!id || id->empty() || !url || !sub || !j.contains("created_utc") || !j.contains("num_comments")) {
    return std::nullopt;
  }
  std::optional<long long> created;
  const auto& c = j.at("created_utc");
  if (c.is_number()) {
    created = static_cast<long long>(c.get<double>());
  } else if (c.is_string()) {
    try {
      std::size_t pos = 0;
      const auto s = c.get<std::string>();
      created = static_cast<long long>(std::stod(s, &pos));
      if (pos != s.size()) created.reset();
    } catch (const std::exception&) {
    }
  }
  const auto& nc = j.at("num_comments");
  if (!created || !nc.is_number_integer() || nc.get<long long>() < 0) return std::nullopt;
  Submission s;
  s.id = *id;
  s.url = normalize_url(*url);
  if (s.url.empty()) return std::nullopt;
  s.created_at = timestamp_from_epoch(*created);
  s.subreddit = *sub;
  s.num_comments = nc.get<long long>();
  return s;
}

}  // namespace

std::vector<Submission> ingest_dump(std::istream& in, const IngestOptions& options, IngestStats* stats) {
  IngestStats st;
  std::vector<Submission> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ++st.lines;
    auto s = parse_submission(line);
    if (!s) {
      ++st.malformed;
      continue;
    }
    const auto day = date_of(s->created_at);
    if ((options.from && day < *options.from) || (options.to && day > *options.to)) {
      ++st.out_of_window;
      continue;
    }
    out.push_back(std::move(*s));
  }
  st.records = out.size();
  if (stats) *stats = st;
  const auto allowance =
      std::max<double>(1.0, std::floor(options.max_malformed_fraction * static_cast<double>(st.lines)));
  if (static_cast<double>(st.malformed) > allowance) {
    throw ParseError(std::to_string(st.malformed) + " of " + std::to_string(st.lines) +
                         " lines are malformed; is this a submission dump?",
                     0);
  }
  return out;
}

std::vector<Submission> ingest_dump_file(const std::filesystem::path& path, const IngestOptions& options,
                                         IngestStats* stats) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return ingest_dump(in, options, stats);
}

std::vector<Pair> join_articles(const std::vector<Submission>& submissions,
                                const std::vector<ArticleRecord>& articles) {
  std::unordered_map<std::string, const ArticleRecord*> by_url;
  for (const auto& a : articles) by_url.emplace(normalize_url(a.url), &a);
  std::vector<Pair> out;
  for (const auto& s : submissions) {
    const auto it = by_url.find(s.url);
    if (it == by_url.end()) continue;
    out.push_back({s, it->second->id, canonical_domain(it->second->domain)});
  }
  return out;
}

std::map<std::string, Label> labels_for(const std::vector<detect::DetectionScore>& scores,
                                        const std::string& model_id) {
  std::string model = model_id;
  if (model.empty()) {
    std::set<std::string> models;
    for (const auto& s : scores) models.insert(s.model_id);
    if (models.size() > 1) throw UsageError("scores come from several models; pick one");
    if (!models.empty()) model = *models.begin();
  }
  std::map<std::string, Label> out;
  for (const auto& s : scores) {
    if (s.model_id == model) out[s.article_id] = s.label;
  }
  return out;
}

std::string_view to_string(Weight w) { return w == Weight::submissions ? "submissions" : "comments"; }

std::vector<SharePoint> share_series(const std::vector<Pair>& pairs, const std::map<std::string, Label>& labels,
                                     const std::vector<SiteRecord>& sites, Weight weight, Reliability cls) {
  std::map<std::string, Reliability> site_class;
  for (const auto& s : sites) site_class[s.domain] = s.reliability;
  std::map<std::string, SharePoint> by_month;
  for (const auto& p : pairs) {
    const auto label = labels.find(p.article_id);
    const auto site = site_class.find(p.domain);
    if (label == labels.end() || site == site_class.end() || site->second != cls) continue;
    const auto month = month_key(date_of(p.submission.created_at));
    auto& pt = by_month[month];
    pt.month = month;
    const double w = weight == Weight::submissions ? 1.0 : static_cast<double>(p.submission.num_comments);
    pt.total += w;
    if (label->second == Label::machine) pt.machine += w;
  }
  std::vector<SharePoint> out;
  for (auto& [month, pt] : by_month) {
    if (pt.total == 0) continue;
    pt.share = pt.machine / pt.total;
    const auto first = *parse_month(month);
    pt.machine_daily_average = pt.machine / days_between(first, add_months(first, 1));
    out.push_back(pt);
  }
  return out;
}

Correlation pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw Error("pearson: inputs differ in length");
  if (x.size() < 3) throw Error("pearson: needs at least three points");
  const auto n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  Correlation c;
  if (sxx == 0 || syy == 0) {
    c.undefined = true;
    c.rho = kNaN;
    return c;
  }
  c.rho = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  return c;
}

CohensD cohens_d_by_domain(const std::vector<DomainValue>& values) {
  struct Acc {
    double sum = 0;
    std::size_t n = 0;
    bool human = false;
    bool machine = false;
  };
  std::map<std::string, Acc> domains;
  for (const auto& v : values) {
    auto& a = domains[v.domain];
    a.sum += v.value;
    ++a.n;
    (v.machine ? a.machine : a.human) = true;
  }
  std::vector<double> human, machine, human_raw, machine_raw;
  CohensD r;
  for (const auto& v : values) {
    const auto& a = domains.at(v.domain);
    if (!a.human || !a.machine) continue;
    const double centered = v.value - a.sum / static_cast<double>(a.n);
    (v.machine ? machine : human).push_back(centered);
    (v.machine ? machine_raw : human_raw).push_back(v.value);
  }
  for (const auto& [d, a] : domains) r.domains += a.human && a.machine;
  if (r.domains == 0) throw Error("no domain has both human and machine articles");
  r.n_human = human.size();
  r.n_machine = machine.size();
  const auto mean = [](const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  const auto ss = [](const std::vector<double>& v, double m) {
    double s = 0;
    for (const double x : v) s += (x - m) * (x - m);
    return s;
  };
  const double mh = mean(human), mm = mean(machine);
  r.centered_difference = mh - mm;
  r.raw_difference = mean(human_raw) - mean(machine_raw);
  const double dof = static_cast<double>(r.n_human + r.n_machine) - 2;
  const double pooled = dof > 0 ? std::sqrt((ss(human, mh) + ss(machine, mm)) / dof) : 0.0;
  if (!(pooled > 0)) {
    r.zero_variance = true;
    r.d = kNaN;
    return r;
  }
  r.d = r.centered_difference / pooled;
  return r;
}

CohensD cohens_d_by_domain(const std::vector<Pair>& pairs, const std::map<std::string, Label>& labels) {
  std::vector<DomainValue> values;
  for (const auto& p : pairs) {
    const auto it = labels.find(p.article_id);
    if (it == labels.end()) continue;
    values.push_back({p.domain, it->second == Label::machine, static_cast<double>(p.submission.num_comments)});
  }
  return cohens_d_by_domain(values);
}

namespace {

// Midranks of the pooled sample, a first.
std::vector<double> pooled_ranks(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> all(a);
  all.insert(all.end(), b.begin(), b.end());
  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return all[x] < all[y]; });
  std::vector<double> ranks(all.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && all[order[j + 1]] == all[order[i]]) ++j;
    const double mid = (static_cast<double>(i) + static_cast<double>(j)) / 2 + 1;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = mid;
    i = j + 1;
  }
  return ranks;
}

double u_from_ranks(const std::vector<double>& ranks, std::uint32_t mask, std::size_t n_a) {
  double sum = 0;
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    if (mask >> i & 1U) sum += ranks[i];
  }
  return sum - static_cast<double>(n_a * (n_a + 1)) / 2;
}

void check_samples(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.empty() || b.empty()) throw Error("mann-whitney: both samples must be non-empty");
}

}  // namespace

double mann_whitney_exact_p(const std::vector<double>& a, const std::vector<double>& b) {
  check_samples(a, b);
  const std::size_t n = a.size() + b.size();
  if (n > kExactLimit) throw Error("exact mann-whitney is limited to 16 observations");
  const auto ranks = pooled_ranks(a, b);
  const double center = static_cast<double>(a.size() * b.size()) / 2;
  const double observed = std::abs(u_from_ranks(ranks, (1U << a.size()) - 1, a.size()) - center);
  std::size_t extreme = 0, total = 0;
  for (std::uint32_t mask = 0; mask < (1U << n); ++mask) {
    if (static_cast<std::size_t>(std::popcount(mask)) != a.size()) continue;
    ++total;
    // Midranks are multiples of 1/2, so the comparison is exact up to rounding.
    if (std::abs(u_from_ranks(ranks, mask, a.size()) - center) >= observed - 1e-9) ++extreme;
  }
  return static_cast<double>(extreme) / static_cast<double>(total);
}

double mann_whitney_normal_p(const std::vector<double>& a, const std::vector<double>& b) {
  check_samples(a, b);
  const auto ranks = pooled_ranks(a, b);
  double ra = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ra += ranks[i];
  const auto na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double n = na + nb;
  const double u = ra - na * (na + 1) / 2;
  std::map<double, double> ties;
  for (const double r : ranks) ++ties[r];
  double tie_term = 0;
  for (const auto& [r, t] : ties) tie_term += t * t * t - t;
  const double var = na * nb / 12 * ((n + 1) - tie_term / (n * (n - 1)));
  if (!(var > 0)) return 1.0;
  const double z = std::max(0.0, std::abs(u - na * nb / 2) - 0.5) / std::sqrt(var);
  return std::min(1.0, std::erfc(z / std::sqrt(2.0)));
}

MannWhitney mann_whitney(const std::vector<double>& a, const std::vector<double>& b) {
  check_samples(a, b);
  const auto ranks = pooled_ranks(a, b);
  MannWhitney r;
  double ra = 0, rb = 0;
  for (std::size_t i = 0; i < ranks.size(); ++i) (i < a.size() ? ra : rb) += ranks[i];
  const auto na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  r.u_a = ra - na * (na + 1) / 2;
  r.u_b = rb - nb * (nb + 1) / 2;
  r.exact = a.size() + b.size() <= kExactLimit;
  r.p = r.exact ? mann_whitney_exact_p(a, b) : mann_whitney_normal_p(a, b);
  return r;
}

LogChange log_scale_change(const std::vector<double>& period_a, const std::vector<double>& period_b) {
  const auto mean_log = [](const std::vector<double>& v) {
    if (v.empty()) throw Error("log-scale change needs counts in both periods");
    double s = 0;
    for (const double c : v) {
      if (c < 0) throw Error("counts must be non-negative");
      s += std::log1p(c);
    }
    return s / static_cast<double>(v.size());
  };
  const double ma = mean_log(period_a), mb = mean_log(period_b);
  LogChange r;
  if (ma == 0) {
    r.undefined = true;
    r.pct = kNaN;
    return r;
  }
  r.pct = 100 * (mb - ma) / ma;
  return r;
}

std::string to_csv(const std::vector<SharePoint>& points, Reliability cls, Weight weight, bool header) {
  std::string out = header ? "month,class,weight,machine,total,pct,machine_daily_average\n" : "";
  for (const auto& p : points) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s,%s,%s,%.0f,%.0f,%.4f,%.4f\n", p.month.c_str(),
                  std::string(synth::to_string(cls)).c_str(), std::string(to_string(weight)).c_str(), p.machine,
                  p.total, 100 * p.share, p.machine_daily_average);
    out += buf;
  }
  return out;
}

}  // namespace synth::social
