#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "synth/corpus.hpp"
#include "synth/date.hpp"
#include "synth/detect.hpp"

namespace synth::prevalence {

inline constexpr double kZ95 = 1.96;

enum class Aggregation { micro, macro };
std::string_view to_string(Aggregation a);

// An unset field means "all".
struct Group {
  std::optional<Reliability> reliability;
  std::optional<CruxBucket> bucket;
  bool operator==(const Group&) const = default;
};
std::string group_name(const Group& g);  // e.g. "unreliable/B10K", "ALL/ALL"

// Rates are fractions in [0,1].
struct PrevalencePoint {
  std::string period;
  Group group;
  Aggregation aggregation = Aggregation::micro;
  std::size_t n_articles = 0;
  std::size_t n_synthetic = 0;
  std::size_t n_sites = 0;
  double rate = 0;
  double ci_low = 0;
  double ci_high = 0;
  bool ci_degenerate = false;  // macro over a single site
};

// rate ± 1.96 sqrt(rate (1 - rate) / n), clamped to [0,1]. Nothing for n = 0.
std::optional<PrevalencePoint> micro_rate(std::size_t n_synthetic, std::size_t n_articles);

struct SiteCount {
  std::string domain;
  std::size_t n_articles = 0;
  std::size_t n_synthetic = 0;
};

// Mean of per-site rates over sites with at least one article, with
// mean ± 1.96 s / sqrt(k) from the sample deviation s of the k site rates.
std::optional<PrevalencePoint> macro_rate(const std::vector<SiteCount>& sites);

struct Observation {
  std::string article_id;
  std::string domain;
  Date date;
  bool synthetic = false;
};

struct JoinStats {
  std::size_t articles = 0;
  std::size_t not_admitted = 0;
  std::size_t undated = 0;
  std::size_t unscored = 0;
  std::size_t unknown_site = 0;
  std::size_t joined = 0;
};

struct Joined {
  std::string model_id;
  std::vector<Observation> observations;
  std::map<std::string, SiteRecord> sites;
  JoinStats stats;
};

// Admitted, dated, scored articles of listed sites. With an empty model_id the
// scores must come from a single model.
Joined join(const std::vector<ArticleRecord>& articles, const std::vector<detect::DetectionScore>& scores,
            const std::vector<SiteRecord>& sites, const std::string& model_id = "");

bool in_group(const SiteRecord& site, const Group& g);

// ALL/ALL, each class over all strata, then each class by stratum.
std::vector<Group> standard_groups();

// Per calendar month and group, micro and macro points. Empty cells are
// omitted. Sorted by (period, group order, aggregation).
std::vector<PrevalencePoint> monthly_prevalence(const Joined& joined, const std::vector<Group>& groups);

struct DailyPoint {
  Date date;
  std::size_t n_articles = 0;
  std::size_t n_synthetic = 0;
  std::size_t n_sites = 0;
  double rate = 0;
};

// Daily rates for one group; days without articles are absent.
std::vector<DailyPoint> daily_series(const Joined& joined, const Group& group, Aggregation aggregation);

struct Adoption {
  Date window_start;
  int window_days = 30;
  std::size_t count = 0;
  std::size_t class_size = 0;
  double share = 0;
};

// Sites of the class with at least one synthetic article dated in
// [start, start + window_days), and their share of all listed sites of the
// class.
Adoption adoption_count(const Joined& joined, Reliability cls, Date start, int window_days = 30);

// Windows starting at `from`, every `step_days`, while the window start is
// before `to`.
std::vector<Adoption> adoption_series(const Joined& joined, Reliability cls, Date from, Date to, int step_days = 30,
                                      int window_days = 30);

struct TopSite {
  std::string domain;
  double rate = 0;
  std::size_t n_articles = 0;
  std::size_t n_synthetic = 0;
  CruxBucket bucket = CruxBucket::unknown;
};

// Sites of the class (or all sites) with at least `min_articles` articles in
// the month, by rate descending; ties by article count descending, then
// domain.
std::vector<TopSite> top_sites(const Joined& joined, const std::string& month, std::optional<Reliability> cls,
                               std::size_t k = 10, std::size_t min_articles = 30);

// Inputs in percent. Relative change is absent when the starting rate is 0.
struct Change {
  double absolute_pp = 0;
  std::optional<double> relative_pct;
};
Change change_summary(double from_pct, double to_pct);

// period,group,aggregation,n_articles,n_synthetic,n_sites,pct,ci_low,ci_high,flags
// with percentages to four decimals.
std::string to_csv(const std::vector<PrevalencePoint>& points);
std::string adoption_csv(const std::vector<Adoption>& series, Reliability cls);
std::string top_sites_csv(const std::vector<TopSite>& rows);

}  // namespace synth::prevalence
