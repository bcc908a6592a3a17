#pragma once

#include <Eigen/SparseCore>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "synth/http.hpp"
#include "synth/prevalence.hpp"

namespace synth::topics {

using Vector = Eigen::SparseVector<double>;

bool is_stopword(std::string_view token);

// Lowercased ASCII alphanumeric runs of two or more characters, stopwords
// removed.
std::vector<std::string> content_tokens(std::string_view text);

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::string id() const = 0;
  // Unit-norm vectors of one common dimension, in input order.
  virtual std::vector<Vector> embed(const std::vector<std::string>& paragraphs) const = 0;
};

// TF-IDF over hashed word unigrams and bigrams of content tokens, 2^16 dims.
// Document frequencies come from the batch itself: idf = ln((1 + N) / (1 +
// df)) + 1. A paragraph without content tokens is an error.
class HashedTfidf : public Embedder {
 public:
  static constexpr Eigen::Index kDims = Eigen::Index{1} << 16;
  explicit HashedTfidf(int jobs = 1) : jobs_(jobs) {}
  std::string id() const override { return "hashed-tfidf"; }
  std::vector<Vector> embed(const std::vector<std::string>& paragraphs) const override;

 private:
  int jobs_;
};

// POST {base}/embed {"texts": [...]} -> {"vectors": [[...], ...]}. Vectors are
// renormalized; wrong cardinality, ragged dimensions or zero vectors are
// protocol errors.
class RemoteEmbedder : public Embedder {
 public:
  RemoteEmbedder(std::string base_url, http::Options options = {}, http::RetryPolicy retry = {});
  std::string id() const override { return "remote:" + base_url_; }
  std::vector<Vector> embed(const std::vector<std::string>& paragraphs) const override;

 private:
  std::string base_url_;
  http::Options options_;
  http::RetryPolicy retry_;
};

double squared_distance(const Vector& a, const Vector& b);

// Half the median pairwise squared distance over the first `sample` points,
// or over a seeded random sample of that size when there are more.
double default_lambda(const std::vector<Vector>& points, std::size_t sample = 1000, std::uint64_t seed = 1);

struct AssignmentStep {
  int iteration = 0;
  const std::vector<Vector>* centroids = nullptr;  // as used for assignment
  const std::vector<int>* assignment = nullptr;
  const std::vector<bool>* seeded = nullptr;  // point opened its own cluster
};

struct DpMeansOptions {
  int max_iterations = 100;
  // Called after every assignment step, before centroids move.
  std::function<void(const AssignmentStep&)> on_assignment;
};

struct DpMeansResult {
  std::vector<Vector> centroids;  // unit norm
  std::vector<int> assignment;    // cluster per point
  std::vector<double> objective;  // after each iteration
  int iterations = 0;
  bool converged = false;
};

// Visits points in input order. Starts from one cluster at the normalized
// global mean; a point joins its nearest centroid when the squared distance
// is at most lambda and otherwise opens a cluster at itself. Empty clusters
// are dropped and ids compacted in order of first use. Objective is the
// within-cluster squared distance plus lambda per cluster; an increase
// between iterations throws.
DpMeansResult dp_means(const std::vector<Vector>& points, double lambda, const DpMeansOptions& options = {});

// Paragraph-level token presence over a corpus of paragraphs.
struct TokenCounts {
  std::vector<std::set<std::string>> paragraph_tokens;
  std::map<std::string, std::size_t> paragraphs_with;  // document frequency
};
TokenCounts count_tokens(const std::vector<std::string>& paragraphs, int jobs = 1);

// ln(p(w,c) / (p(w) p(c))) / -ln p(w,c); 1 when p(w,c) = 1; -1 when they
// never co-occur.
double npmi(std::size_t n_wc, std::size_t n_w, std::size_t n_c, std::size_t n);

struct Keyword {
  std::string token;
  double npmi = 0;
  std::size_t support = 0;  // paragraphs of the cluster containing the token
};
struct KeywordResult {
  std::vector<Keyword> keywords;
  bool too_small = false;  // cluster paragraphs hold fewer than min_support tokens
};

// Top k tokens of a cluster (member paragraph indices) by NPMI among tokens
// present in at least `min_support` member paragraphs; ties by support, then
// token.
KeywordResult npmi_keywords(const std::vector<std::size_t>& members, const TokenCounts& counts, std::size_t k = 3,
                            std::size_t min_support = 5);

struct TopicCluster {
  int cluster_id = 0;
  Vector centroid;
  std::vector<std::string> member_paragraph_ids;  // "<article_id>#<index>"
  std::size_t article_count = 0;
  KeywordResult keywords;
};

struct TopicOptions {
  std::optional<double> lambda;  // default_lambda when unset
  std::size_t n = 2;
  std::size_t keywords = 3;
  std::size_t min_support = 5;
  int jobs = 1;
};

struct TopicRow {
  std::string month;
  prevalence::Group group;
  std::size_t rank = 0;
  TopicCluster cluster;
};

// Synthetic-labeled articles of the group dated in `month`, split into
// paragraphs, embedded, clustered; the n clusters with most distinct
// articles (ties by paragraph count, then cluster id).
std::vector<TopicRow> top_topics(const prevalence::Joined& joined, const std::vector<ArticleRecord>& articles,
                                 const prevalence::Group& group, const std::string& month, const Embedder& embedder,
                                 const TopicOptions& options = {});

// month,group,rank,cluster_id,article_count,paragraphs,keywords,npmi,flags
std::string to_csv(const std::vector<TopicRow>& rows);

}  // namespace synth::topics
