#include "synth/topics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"
#include "synth/error.hpp"
#include "synth/text.hpp"

namespace synth::topics {

namespace {

const std::unordered_set<std::string_view>& stopwords() {
  static const std::unordered_set<std::string_view> words = {
#include "stopwords.inc"
  };
  return words;
}

// Runs fn(i) for i in [0, n) on up to `jobs` threads.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) fn(i);
  };
  const auto n_threads = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, jobs)), n);
  std::vector<std::thread> threads;
  for (std::size_t t = 1; t < n_threads; ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
}

void normalize(Vector& v) {
  const double norm = v.norm();
  if (norm > 0) v /= norm;
}

}  // namespace

bool is_stopword(std::string_view token) { return stopwords().count(token) > 0; }

std::vector<std::string> content_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  const auto flush = [&] {
    if (cur.size() >= 2 && !is_stopword(cur)) out.push_back(cur);
    cur.clear();
  };
  for (const char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur += static_cast<char>(std::tolower(c));
    } else {
      flush();
    }
  }
  flush();
  return out;
}

std::vector<Vector> HashedTfidf::embed(const std::vector<std::string>& paragraphs) const {
  const std::size_t n = paragraphs.size();
  std::vector<std::map<Eigen::Index, double>> tf(n);
  std::vector<std::string> empty;
  parallel_for(n, jobs_, [&](std::size_t i) {
    const auto tokens = content_tokens(paragraphs[i]);
    const auto add = [&](const std::string& feature) {
      ++tf[i][static_cast<Eigen::Index>(fnv1a64(feature) & static_cast<std::uint64_t>(kDims - 1))];
    };
    for (std::size_t k = 0; k < tokens.size(); ++k) {
      add(tokens[k]);
      if (k + 1 < tokens.size()) add(tokens[k] + ' ' + tokens[k + 1]);
    }
  });
  for (std::size_t i = 0; i < n; ++i) {
    if (tf[i].empty()) throw Error("paragraph " + std::to_string(i) + " has no content tokens");
  }
  std::unordered_map<Eigen::Index, std::size_t> df;
  for (const auto& m : tf) {
    for (const auto& [idx, c] : m) ++df[idx];
  }
  std::vector<Vector> out(n, Vector(kDims));
  const auto docs = static_cast<double>(n);
  parallel_for(n, jobs_, [&](std::size_t i) {
    auto& v = out[i];
    v.reserve(static_cast<Eigen::Index>(tf[i].size()));
    for (const auto& [idx, c] : tf[i]) {
      v.insert(idx) = c * (std::log((1 + docs) / (1 + static_cast<double>(df.at(idx)))) + 1);
    }
    normalize(v);
  });
  return out;
}

RemoteEmbedder::RemoteEmbedder(std::string base_url, http::Options options, http::RetryPolicy retry)
    : base_url_(std::move(base_url)), options_(std::move(options)), retry_(retry) {}

std::vector<Vector> RemoteEmbedder::embed(const std::vector<std::string>& paragraphs) const {
  constexpr std::size_t kBatch = 64;
  const auto url = base_url_ + "/embed";
  std::vector<Vector> out;
  std::optional<std::size_t> dims;
  for (std::size_t start = 0; start < paragraphs.size(); start += kBatch) {
    const std::vector<std::string> batch(paragraphs.begin() + static_cast<std::ptrdiff_t>(start),
                                         paragraphs.begin() + static_cast<std::ptrdiff_t>(
                                                                  std::min(paragraphs.size(), start + kBatch)));
    const auto reply = http::post_json(url, {{"texts", batch}}, options_, retry_);
    if (!reply.is_object() || !reply.contains("vectors") || !reply.at("vectors").is_array()) {
      throw ProtocolError("reply from " + url + " lacks a \"vectors\" array");
    }
    const auto& arr = reply.at("vectors");
    if (arr.size() != batch.size()) {
      throw ProtocolError("reply from " + url + " has " + std::to_string(arr.size()) + " vectors for " +
                          std::to_string(batch.size()) + " texts");
    }
    for (const auto& row : arr) {
      if (!row.is_array() || row.empty()) throw ProtocolError("empty or non-array vector from " + url);
      if (!dims) dims = row.size();
      if (row.size() != *dims) {
        throw ProtocolError("vector of dimension " + std::to_string(row.size()) + " after dimension " +
                            std::to_string(*dims) + " from " + url);
      }
      Vector v(static_cast<Eigen::Index>(*dims));
      for (std::size_t k = 0; k < row.size(); ++k) {
        if (!row[k].is_number()) throw ProtocolError("non-numeric vector entry from " + url);
        const double x = row[k].get<double>();
        if (x != 0.0) v.insert(static_cast<Eigen::Index>(k)) = x;
      }
      if (!(v.norm() > 0)) throw ProtocolError("zero vector from " + url);
      normalize(v);
      out.push_back(std::move(v));
    }
  }
  return out;
}

double squared_distance(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw Error("vectors of different dimension");
  return std::max(0.0, a.squaredNorm() + b.squaredNorm() - 2 * a.dot(b));
}

double default_lambda(const std::vector<Vector>& points, std::size_t sample, std::uint64_t seed) {
  std::vector<std::size_t> idx(points.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  if (idx.size() > sample) {
    std::mt19937_64 rng(seed);
    shuffle_in_place(idx, rng);
    idx.resize(sample);
    std::sort(idx.begin(), idx.end());
  }
  std::vector<double> d;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    for (std::size_t j = i + 1; j < idx.size(); ++j) d.push_back(squared_distance(points[idx[i]], points[idx[j]]));
  }
  if (d.empty()) return 1.0;
  const auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  double median = *mid;
  if (d.size() % 2 == 0) median = (median + *std::max_element(d.begin(), mid)) / 2;
  return median > 0 ? 0.5 * median : 1.0;
}

DpMeansResult dp_means(const std::vector<Vector>& points, double lambda, const DpMeansOptions& options) {
  if (!(lambda > 0)) throw Error("lambda must be positive");
  DpMeansResult r;
  if (points.empty()) {
    r.converged = true;
    return r;
  }
  const auto dims = points[0].size();
  for (const auto& p : points) {
    if (p.size() != dims) throw Error("points of different dimension");
  }
  Vector mean(dims);
  for (const auto& p : points) mean += p;
  normalize(mean);
  r.centroids = {mean.norm() > 0 ? mean : points[0]};
  if (r.centroids[0].norm() > 0) normalize(r.centroids[0]);

  const std::size_t n = points.size();
  std::vector<int> previous;
  double previous_objective = std::numeric_limits<double>::infinity();
  for (r.iterations = 1; r.iterations <= options.max_iterations; ++r.iterations) {
    std::vector<Vector> cents = r.centroids;
    std::vector<int> z(n);
    std::vector<bool> seeded(n, false);
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      int at = -1;
      for (std::size_t c = 0; c < cents.size(); ++c) {
        const double d = squared_distance(points[i], cents[c]);
        if (d < best) {
          best = d;
          at = static_cast<int>(c);
        }
      }
      if (best <= lambda) {
        z[i] = at;
      } else {
        cents.push_back(points[i]);
        z[i] = static_cast<int>(cents.size() - 1);
        seeded[i] = true;
      }
    }
    if (options.on_assignment) options.on_assignment({r.iterations, &cents, &z, &seeded});

    // Compact ids in order of first use.
    std::vector<int> remap(cents.size(), -1);
    int k = 0;
    for (auto& c : z) {
      if (remap[static_cast<std::size_t>(c)] < 0) remap[static_cast<std::size_t>(c)] = k++;
      c = remap[static_cast<std::size_t>(c)];
    }
    std::vector<Vector> updated(static_cast<std::size_t>(k), Vector(dims));
    for (std::size_t c = 0; c < cents.size(); ++c) {
      if (remap[c] >= 0) updated[static_cast<std::size_t>(remap[c])] = cents[c];
    }
    std::vector<Vector> sums(static_cast<std::size_t>(k), Vector(dims));
    for (std::size_t i = 0; i < n; ++i) sums[static_cast<std::size_t>(z[i])] += points[i];
    for (std::size_t c = 0; c < sums.size(); ++c) {
      // A zero mean leaves every unit centroid equally good; keep the old one.
      if (sums[c].norm() > 0) {
        updated[c] = sums[c];
        normalize(updated[c]);
      }
    }
    r.centroids = std::move(updated);
    r.assignment = z;

    double objective = lambda * k;
    for (std::size_t i = 0; i < n; ++i) objective += squared_distance(points[i], r.centroids[static_cast<std::size_t>(z[i])]);
    if (objective > previous_objective + 1e-9 * (1 + std::abs(previous_objective))) {
      throw Error("dp-means objective rose from " + std::to_string(previous_objective) + " to " +
                  std::to_string(objective) + " at iteration " + std::to_string(r.iterations));
    }
    r.objective.push_back(objective);
    previous_objective = objective;
    if (z == previous) {
      r.converged = true;
      break;
    }
    previous = std::move(z);
  }
  r.iterations = std::min(r.iterations, options.max_iterations);
  return r;
}

TokenCounts count_tokens(const std::vector<std::string>& paragraphs, int jobs) {
  TokenCounts out;
  out.paragraph_tokens.resize(paragraphs.size());
  parallel_for(paragraphs.size(), jobs, [&](std::size_t i) {
    for (auto& t : content_tokens(paragraphs[i])) out.paragraph_tokens[i].insert(std::move(t));
  });
  for (const auto& s : out.paragraph_tokens) {
    for (const auto& t : s) ++out.paragraphs_with[t];
  }
  return out;
}

double npmi(std::size_t n_wc, std::size_t n_w, std::size_t n_c, std::size_t n) {
  if (n == 0 || n_wc > n_w || n_wc > n_c || n_w > n || n_c > n) throw Error("inconsistent co-occurrence counts");
  if (n_wc == 0) return -1.0;
  const auto total = static_cast<double>(n);
  const double p_wc = static_cast<double>(n_wc) / total;
  if (n_wc == n) return 1.0;
  const double p_w = static_cast<double>(n_w) / total;
  const double p_c = static_cast<double>(n_c) / total;
  return std::clamp(std::log(p_wc / (p_w * p_c)) / -std::log(p_wc), -1.0, 1.0);
}

KeywordResult npmi_keywords(const std::vector<std::size_t>& members, const TokenCounts& counts, std::size_t k,
                            std::size_t min_support) {
  KeywordResult out;
  std::size_t total = 0;
  std::map<std::string, std::size_t> support;
  for (const auto m : members) {
    const auto& tokens = counts.paragraph_tokens.at(m);
    total += tokens.size();
    for (const auto& t : tokens) ++support[t];
  }
  if (total < min_support) {
    out.too_small = true;
    return out;
  }
  const auto n = counts.paragraph_tokens.size();
  for (const auto& [token, s] : support) {
    if (s < min_support) continue;
    out.keywords.push_back({token, npmi(s, counts.paragraphs_with.at(token), members.size(), n), s});
  }
  std::sort(out.keywords.begin(), out.keywords.end(), [](const Keyword& a, const Keyword& b) {
    if (a.npmi != b.npmi) return a.npmi > b.npmi;
    if (a.support != b.support) return a.support > b.support;
    return a.token < b.token;
  });
  if (out.keywords.size() > k) out.keywords.resize(k);
  return out;
}

std::vector<TopicRow> top_topics(const prevalence::Joined& joined, const std::vector<ArticleRecord>& articles,
                                 const prevalence::Group& group, const std::string& month, const Embedder& embedder,
                                 const TopicOptions& options) {
  std::unordered_map<std::string, const ArticleRecord*> by_id;
  for (const auto& a : articles) by_id.emplace(a.id, &a);
  std::vector<std::string> paragraphs, paragraph_ids, paragraph_article;
  for (const auto& o : joined.observations) {
    if (!o.synthetic || month_key(o.date) != month || !prevalence::in_group(joined.sites.at(o.domain), group)) continue;
    const auto it = by_id.find(o.article_id);
    if (it == by_id.end()) continue;
    std::size_t index = 0;
    std::size_t start = 0;
    const auto& text = it->second->text;
    while (start <= text.size()) {
      auto end = text.find('\n', start);
      if (end == std::string::npos) end = text.size();
      auto p = collapse_whitespace(std::string_view(text).substr(start, end - start));
      if (!content_tokens(p).empty()) {
        paragraph_ids.push_back(o.article_id + "#" + std::to_string(index));
        paragraph_article.push_back(o.article_id);
        paragraphs.push_back(std::move(p));
      }
      ++index;
      start = end + 1;
    }
  }
  if (paragraphs.empty()) return {};

  const auto vectors = embedder.embed(paragraphs);
  if (vectors.size() != paragraphs.size()) throw ProtocolError("embedder returned the wrong number of vectors");
  const double lambda = options.lambda ? *options.lambda : default_lambda(vectors);
  const auto dp = dp_means(vectors, lambda);
  const auto counts = count_tokens(paragraphs, options.jobs);

  std::vector<std::vector<std::size_t>> members(dp.centroids.size());
  for (std::size_t i = 0; i < dp.assignment.size(); ++i) members[static_cast<std::size_t>(dp.assignment[i])].push_back(i);
  std::vector<TopicRow> rows;
  for (std::size_t c = 0; c < members.size(); ++c) {
    TopicRow row;
    row.month = month;
    row.group = group;
    row.cluster.cluster_id = static_cast<int>(c);
    row.cluster.centroid = dp.centroids[c];
    std::set<std::string> distinct;
    for (const auto i : members[c]) {
      row.cluster.member_paragraph_ids.push_back(paragraph_ids[i]);
      distinct.insert(paragraph_article[i]);
    }
    row.cluster.article_count = distinct.size();
    rows.push_back(std::move(row));
  }
  std::sort(rows.begin(), rows.end(), [](const TopicRow& a, const TopicRow& b) {
    if (a.cluster.article_count != b.cluster.article_count) return a.cluster.article_count > b.cluster.article_count;
    if (a.cluster.member_paragraph_ids.size() != b.cluster.member_paragraph_ids.size()) {
      return a.cluster.member_paragraph_ids.size() > b.cluster.member_paragraph_ids.size();
    }
    return a.cluster.cluster_id < b.cluster.cluster_id;
  });
  if (rows.size() > options.n) rows.resize(options.n);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    rows[r].rank = r + 1;
    rows[r].cluster.keywords = npmi_keywords(members[static_cast<std::size_t>(rows[r].cluster.cluster_id)], counts,
                                             options.keywords, options.min_support);
  }
  return rows;
}

std::string to_csv(const std::vector<TopicRow>& rows) {
  std::string out = "month,group,rank,cluster_id,article_count,paragraphs,keywords,npmi,flags\n";
  for (const auto& r : rows) {
    std::string words, scores;
    for (const auto& k : r.cluster.keywords.keywords) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.4f", k.npmi);
      words += (words.empty() ? "" : ";") + k.token;
      scores += (scores.empty() ? "" : ";") + std::string(buf);
    }
    out += r.month + ',' + prevalence::group_name(r.group) + ',' + std::to_string(r.rank) + ',' +
           std::to_string(r.cluster.cluster_id) + ',' + std::to_string(r.cluster.article_count) + ',' +
           std::to_string(r.cluster.member_paragraph_ids.size()) + ',' + words + ',' + scores + ',' +
           (r.cluster.keywords.too_small ? "too_small" : "") + '\n';
  }
  return out;
}

}  // namespace synth::topics
