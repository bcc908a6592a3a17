#pragma once

#include <istream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "synth/corpus.hpp"
#include "synth/date.hpp"
#include "synth/detect.hpp"

namespace synth::social {

struct Submission {
  std::string id;
  std::string url;  // normalized
  Timestamp created_at;
  std::string subreddit;
  long long num_comments = 0;
};

struct IngestOptions {
  // Calendar-date window on created_at, inclusive; unset ends are open.
  std::optional<Date> from;
  std::optional<Date> to;
  // Malformed lines above max(1, fraction * lines) make the dump an error.
  double max_malformed_fraction = 0.01;
};

struct IngestStats {
  std::size_t lines = 0;  // non-blank
  std::size_t records = 0;
  std::size_t malformed = 0;
  std::size_t out_of_window = 0;
};

// Pushshift-style NDJSON: id, url, created_utc (epoch seconds, number or
// numeric string), subreddit, num_comments (integer >= 0).
std::vector<Submission> ingest_dump(std::istream& in, const IngestOptions& options = {},
                                    IngestStats* stats = nullptr);
std::vector<Submission> ingest_dump_file(const std::filesystem::path& path, const IngestOptions& options = {},
                                         IngestStats* stats = nullptr);

struct Pair {
  Submission submission;
  std::string article_id;
  std::string domain;  // canonical
};

// Exact equality on normalized URLs; submissions in input order.
std::vector<Pair> join_articles(const std::vector<Submission>& submissions, const std::vector<ArticleRecord>& articles);

// article_id -> label for one model; empty model_id requires a single model.
std::map<std::string, Label> labels_for(const std::vector<detect::DetectionScore>& scores,
                                        const std::string& model_id = "");

enum class Weight { submissions, comments };
std::string_view to_string(Weight w);

struct SharePoint {
  std::string month;
  double machine = 0;  // submissions or comments on machine-labeled articles
  double total = 0;
  double share = 0;    // fraction
  double machine_daily_average = 0;
};

// Per month of posting, for pairs whose article is labeled and whose site is
// listed in the class. Months with a zero total are omitted.
std::vector<SharePoint> share_series(const std::vector<Pair>& pairs, const std::map<std::string, Label>& labels,
                                     const std::vector<SiteRecord>& sites, Weight weight, Reliability cls);

struct Correlation {
  double rho = 0;
  bool undefined = false;  // a constant input
};
// Sample Pearson correlation; needs equal lengths of at least 3.
Correlation pearson(const std::vector<double>& x, const std::vector<double>& y);

struct DomainValue {
  std::string domain;
  bool machine = false;
  double value = 0;
};

struct CohensD {
  double d = 0;
  double centered_difference = 0;  // mean human - mean machine after centering
  double raw_difference = 0;       // same on raw values
  bool zero_variance = false;      // d undefined, reported as NaN
  std::size_t domains = 0;
  std::size_t n_human = 0;
  std::size_t n_machine = 0;
};

// Within each domain that has both labels, values are centered on the domain
// mean; centered values pool into human and machine groups and d is the
// difference of group means over the pooled sample deviation.
CohensD cohens_d_by_domain(const std::vector<DomainValue>& values);
CohensD cohens_d_by_domain(const std::vector<Pair>& pairs, const std::map<std::string, Label>& labels);

struct MannWhitney {
  double u_a = 0;
  double u_b = 0;
  double p = 1;
  bool exact = false;
};

// Midranks for ties. Two-sided p by enumeration of all splits of the pooled
// sample when |a| + |b| <= 16, else normal with tie and continuity correction.
MannWhitney mann_whitney(const std::vector<double>& a, const std::vector<double>& b);
double mann_whitney_exact_p(const std::vector<double>& a, const std::vector<double>& b);
double mann_whitney_normal_p(const std::vector<double>& a, const std::vector<double>& b);

struct LogChange {
  double pct = 0;
  bool undefined = false;  // mean log(1 + c) of the first period is 0
};
// 100 (mean_b - mean_a) / mean_a over log(1 + c).
LogChange log_scale_change(const std::vector<double>& period_a, const std::vector<double>& period_b);

// month,class,weight,machine,total,pct,machine_daily_average
std::string to_csv(const std::vector<SharePoint>& points, Reliability cls, Weight weight, bool header = true);

}  // namespace synth::social
