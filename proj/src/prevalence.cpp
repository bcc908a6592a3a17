#include "synth/prevalence.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <tuple>
#include <unordered_map>

#include "synth/error.hpp"

namespace synth::prevalence {

std::string_view to_string(Aggregation a) { return a == Aggregation::micro ? "micro" : "macro"; }

std::string group_name(const Group& g) {
  return std::string(g.reliability ? synth::to_string(*g.reliability) : "ALL") + "/" +
         std::string(g.bucket ? synth::to_string(*g.bucket) : "ALL");
}

namespace {

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace

std::optional<PrevalencePoint> micro_rate(std::size_t n_synthetic, std::size_t n_articles) {
  if (n_articles == 0) return std::nullopt;
  if (n_synthetic > n_articles) throw Error("more synthetic articles than articles");
  PrevalencePoint p;
  p.aggregation = Aggregation::micro;
  p.n_articles = n_articles;
  p.n_synthetic = n_synthetic;
  p.rate = static_cast<double>(n_synthetic) / static_cast<double>(n_articles);
  const double half = kZ95 * std::sqrt(p.rate * (1 - p.rate) / static_cast<double>(n_articles));
  p.ci_low = clamp01(p.rate - half);
  p.ci_high = clamp01(p.rate + half);
  return p;
}

std::optional<PrevalencePoint> macro_rate(const std::vector<SiteCount>& sites) {
  PrevalencePoint p;
  p.aggregation = Aggregation::macro;
  std::vector<double> rates;
  for (const auto& s : sites) {
    if (s.n_articles == 0) continue;
    if (s.n_synthetic > s.n_articles) throw Error("more synthetic articles than articles at " + s.domain);
    rates.push_back(static_cast<double>(s.n_synthetic) / static_cast<double>(s.n_articles));
    p.n_articles += s.n_articles;
    p.n_synthetic += s.n_synthetic;
  }
  if (rates.empty()) return std::nullopt;
  const auto k = static_cast<double>(rates.size());
  p.n_sites = rates.size();
  double sum = 0;
  for (double r : rates) sum += r;
  p.rate = sum / k;
  if (rates.size() == 1) {
    p.ci_degenerate = true;
    p.ci_low = p.ci_high = p.rate;
    return p;
  }
  double ss = 0;
  for (double r : rates) ss += (r - p.rate) * (r - p.rate);
  const double half = kZ95 * std::sqrt(ss / (k - 1)) / std::sqrt(k);
  p.ci_low = clamp01(p.rate - half);
  p.ci_high = clamp01(p.rate + half);
  return p;
}

Joined join(const std::vector<ArticleRecord>& articles, const std::vector<detect::DetectionScore>& scores,
            const std::vector<SiteRecord>& sites, const std::string& model_id) {
  Joined j;
  j.model_id = model_id;
  if (j.model_id.empty()) {
    std::set<std::string> models;
    for (const auto& s : scores) models.insert(s.model_id);
    if (models.size() > 1) {
      std::string list;
      for (const auto& m : models) list += (list.empty() ? "" : ", ") + m;
      throw UsageError("scores come from several models (" + list + "); pick one");
    }
    if (!models.empty()) j.model_id = *models.begin();
  }
  std::unordered_map<std::string, bool> machine;
  for (const auto& s : scores) {
    if (s.model_id == j.model_id) machine[s.article_id] = s.label == Label::machine;
  }
  for (const auto& s : sites) j.sites[s.domain] = s;

  j.stats.articles = articles.size();
  for (const auto& a : articles) {
    if (!a.admitted) {
      ++j.stats.not_admitted;
      continue;
    }
    if (!a.published_at) {
      ++j.stats.undated;
      continue;
    }
    const auto it = machine.find(a.id);
    if (it == machine.end()) {
      ++j.stats.unscored;
      continue;
    }
    const auto domain = canonical_domain(a.domain);
    if (!j.sites.count(domain)) {
      ++j.stats.unknown_site;
      continue;
    }
    j.observations.push_back({a.id, domain, *a.published_at, it->second});
  }
  j.stats.joined = j.observations.size();
  std::sort(j.observations.begin(), j.observations.end(), [](const Observation& x, const Observation& y) {
    return std::tie(x.date, x.domain, x.article_id) < std::tie(y.date, y.domain, y.article_id);
  });
  return j;
}

bool in_group(const SiteRecord& site, const Group& g) {
  return (!g.reliability || site.reliability == *g.reliability) && (!g.bucket || site.bucket == *g.bucket);
}

std::vector<Group> standard_groups() {
  const CruxBucket buckets[] = {CruxBucket::B10K, CruxBucket::B100K, CruxBucket::B1M, CruxBucket::B10M,
                                CruxBucket::B10Mplus};
  std::vector<Group> out = {{}};
  for (const auto r : {Reliability::reliable, Reliability::unreliable}) out.push_back({r, std::nullopt});
  for (const auto r : {Reliability::reliable, Reliability::unreliable}) {
    for (const auto b : buckets) out.push_back({r, b});
  }
  return out;
}

namespace {

using SiteMap = std::map<std::string, SiteCount>;

// One pass: per-period, per-site counts.
template <typename Key, typename KeyFn>
std::map<Key, SiteMap> bucket_by(const Joined& joined, KeyFn key_of) {
  std::map<Key, SiteMap> out;
  for (const auto& o : joined.observations) {
    auto& c = out[key_of(o)][o.domain];
    c.domain = o.domain;
    ++c.n_articles;
    c.n_synthetic += o.synthetic;
  }
  return out;
}

std::vector<SiteCount> select(const Joined& joined, const SiteMap& sites, const Group& group) {
  std::vector<SiteCount> out;
  for (const auto& [d, c] : sites) {
    if (in_group(joined.sites.at(d), group)) out.push_back(c);
  }
  return out;
}

std::optional<PrevalencePoint> aggregate(const std::vector<SiteCount>& counts, Aggregation agg) {
  if (agg == Aggregation::macro) return macro_rate(counts);
  std::size_t n = 0, syn = 0;
  for (const auto& c : counts) {
    n += c.n_articles;
    syn += c.n_synthetic;
  }
  auto p = micro_rate(syn, n);
  if (p) p->n_sites = counts.size();
  return p;
}

}  // namespace

std::vector<PrevalencePoint> monthly_prevalence(const Joined& joined, const std::vector<Group>& groups) {
  const auto by_month = bucket_by<std::string>(joined, [](const Observation& o) { return month_key(o.date); });
  std::vector<PrevalencePoint> out;
  for (const auto& [month, sites] : by_month) {
    for (const auto& g : groups) {
      const auto counts = select(joined, sites, g);
      for (const auto agg : {Aggregation::micro, Aggregation::macro}) {
        if (auto p = aggregate(counts, agg)) {
          p->period = month;
          p->group = g;
          out.push_back(std::move(*p));
        }
      }
    }
  }
  return out;
}

std::vector<DailyPoint> daily_series(const Joined& joined, const Group& group, Aggregation aggregation) {
  const auto by_day = bucket_by<Date>(joined, [](const Observation& o) { return o.date; });
  std::vector<DailyPoint> out;
  for (const auto& [day, sites] : by_day) {
    if (const auto p = aggregate(select(joined, sites, group), aggregation)) {
      out.push_back({day, p->n_articles, p->n_synthetic, p->n_sites, p->rate});
    }
  }
  return out;
}

Adoption adoption_count(const Joined& joined, Reliability cls, Date start, int window_days) {
  if (window_days < 1) throw Error("window must be at least one day");
  const auto end = add_days(start, window_days);
  Adoption a;
  a.window_start = start;
  a.window_days = window_days;
  for (const auto& [d, s] : joined.sites) a.class_size += s.reliability == cls;
  std::set<std::string> adopters;
  for (const auto& o : joined.observations) {
    if (o.synthetic && o.date >= start && o.date < end && joined.sites.at(o.domain).reliability == cls) {
      adopters.insert(o.domain);
    }
  }
  a.count = adopters.size();
  a.share = a.class_size ? static_cast<double>(a.count) / static_cast<double>(a.class_size) : 0.0;
  return a;
}

std::vector<Adoption> adoption_series(const Joined& joined, Reliability cls, Date from, Date to, int step_days,
                                      int window_days) {
  if (step_days < 1) throw Error("step must be at least one day");
  std::vector<Adoption> out;
  for (auto d = from; d < to; d = add_days(d, step_days)) out.push_back(adoption_count(joined, cls, d, window_days));
  return out;
}

std::vector<TopSite> top_sites(const Joined& joined, const std::string& month, std::optional<Reliability> cls,
                               std::size_t k, std::size_t min_articles) {
  const Group g{cls, std::nullopt};
  SiteMap in_month;
  for (const auto& o : joined.observations) {
    if (month_key(o.date) != month) continue;
    auto& c = in_month[o.domain];
    c.domain = o.domain;
    ++c.n_articles;
    c.n_synthetic += o.synthetic;
  }
  const auto counts = select(joined, in_month, g);
  std::vector<TopSite> rows;
  for (const auto& c : counts) {
    if (c.n_articles < min_articles) continue;
    rows.push_back({c.domain, static_cast<double>(c.n_synthetic) / static_cast<double>(c.n_articles), c.n_articles,
                    c.n_synthetic, joined.sites.at(c.domain).bucket});
  }
  std::sort(rows.begin(), rows.end(), [](const TopSite& a, const TopSite& b) {
    if (a.rate != b.rate) return a.rate > b.rate;
    if (a.n_articles != b.n_articles) return a.n_articles > b.n_articles;
    return a.domain < b.domain;
  });
  if (rows.size() > k) rows.resize(k);
  return rows;
}

Change change_summary(double from_pct, double to_pct) {
  Change c;
  c.absolute_pp = to_pct - from_pct;
  if (from_pct != 0.0) c.relative_pct = 100.0 * c.absolute_pp / from_pct;
  return c;
}

namespace {

std::string pct4(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", 100.0 * fraction);
  return buf;
}

}  // namespace

std::string to_csv(const std::vector<PrevalencePoint>& points) {
  std::string out = "period,group,aggregation,n_articles,n_synthetic,n_sites,pct,ci_low,ci_high,flags\n";
  for (const auto& p : points) {
    out += p.period + ',' + group_name(p.group) + ',' + std::string(to_string(p.aggregation)) + ',' +
           std::to_string(p.n_articles) + ',' + std::to_string(p.n_synthetic) + ',' + std::to_string(p.n_sites) + ',' +
           pct4(p.rate) + ',' + pct4(p.ci_low) + ',' + pct4(p.ci_high) + ',' +
           (p.ci_degenerate ? "ci_degenerate" : "") + '\n';
  }
  return out;
}

std::string adoption_csv(const std::vector<Adoption>& series, Reliability cls) {
  std::string out = "window_start,window_days,class,count,class_size,share_pct\n";
  for (const auto& a : series) {
    out += format_date(a.window_start) + ',' + std::to_string(a.window_days) + ',' +
           std::string(synth::to_string(cls)) + ',' + std::to_string(a.count) + ',' + std::to_string(a.class_size) +
           ',' + pct4(a.share) + '\n';
  }
  return out;
}

std::string top_sites_csv(const std::vector<TopSite>& rows) {
  std::string out = "rank,domain,pct,n_articles,n_synthetic,crux_bucket\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    out += std::to_string(i + 1) + ',' + r.domain + ',' + pct4(r.rate) + ',' + std::to_string(r.n_articles) + ',' +
           std::to_string(r.n_synthetic) + ',' + std::string(synth::to_string(r.bucket)) + '\n';
  }
  return out;
}

}  // namespace synth::prevalence
