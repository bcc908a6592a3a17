#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "synth/corpus.hpp"
#include "synth/date.hpp"
#include "synth/http.hpp"

namespace synth::detect {

inline constexpr double kDefaultTau = 0.5;

struct DetectionScore {
  std::string article_id;
  double score = 0.0;
  Label label = Label::human;
  std::string model_id;
  Timestamp scored_at{};
};

Label label_for(double score, double tau);

std::string score_to_json(const DetectionScore& s);
DetectionScore score_from_json(std::string_view line);
// A corrupt final line without a trailing newline is what an interrupted
// writer leaves behind; it is dropped. Any other corrupt line raises
// ParseError naming the line.
std::vector<DetectionScore> load_scores(const std::filesystem::path& path);
void store_scores(const std::vector<DetectionScore>& scores, const std::filesystem::path& path);

// Probability that a text is machine-generated. Implementations are safe to
// call from several threads once constructed.
class Detector {
 public:
  virtual ~Detector() = default;
  virtual std::string model_id() const = 0;
  virtual std::vector<double> score_batch(const std::vector<std::string>& texts) const = 0;
  double score(const std::string& text) const;
};

class ConstantScorer : public Detector {
 public:
  explicit ConstantScorer(double value, std::string id = "constant");
  std::string model_id() const override { return id_; }
  std::vector<double> score_batch(const std::vector<std::string>& texts) const override;

 private:
  double value_;
  std::string id_;
};

// POST {base}/score with {"texts": [...]}; the reply {"scores": [...]} must
// have one finite value in [0,1] per text, else ProtocolError.
class RemoteScorer : public Detector {
 public:
  RemoteScorer(std::string base_url, std::string model_id = "remote", http::Options options = {},
               http::RetryPolicy retry = {});
  std::string model_id() const override { return id_; }
  std::vector<double> score_batch(const std::vector<std::string>& texts) const override;

 private:
  std::string url_;
  std::string id_;
  http::Options options_;
  http::RetryPolicy retry_;
};

inline constexpr int kHashBits = 20;
inline constexpr std::size_t kHashDims = std::size_t{1} << kHashBits;

// Sorted (bucket, value) pairs.
using SparseVector = std::vector<std::pair<std::uint32_t, double>>;

// Signed hashed character n-grams (orders n_min..n_max over the UTF-8 bytes of
// the whitespace-collapsed, ASCII-lowercased text), term frequencies scaled to
// unit L2 norm.
SparseVector hashed_features(std::string_view text, int n_min = 3, int n_max = 5);

struct TrainOptions {
  int epochs = 30;
  double learning_rate = 2.0;
  std::uint64_t seed = 0;
  int n_min = 3;
  int n_max = 5;
  bool require_min_length = true;  // reject texts under 1000 characters
};

struct TrainReport {
  std::vector<double> epoch_losses;  // full-batch mean log loss after each epoch
  int step_halvings = 0;             // epochs redone at half the step size
  double final_loss() const { return epoch_losses.empty() ? 0.0 : epoch_losses.back(); }
};

// Logistic regression over hashed features.
class BaselineModel : public Detector {
 public:
  BaselineModel();

  std::string model_id() const override;
  std::vector<double> score_batch(const std::vector<std::string>& texts) const override;
  double score_features(const SparseVector& x) const;

  const std::vector<double>& weights() const { return weights_; }
  double bias() const { return bias_; }
  int n_min() const { return n_min_; }
  int n_max() const { return n_max_; }
  std::uint64_t seed() const { return seed_; }

  // Little-endian binary: magic, orders, seed, bias, then the non-zero
  // weights as (bucket, value) pairs.
  void save(const std::filesystem::path& path) const;
  static BaselineModel load(const std::filesystem::path& path);

  friend BaselineModel train_baseline(const std::vector<LabeledText>& dataset, const TrainOptions& options,
                                      TrainReport* report);

 private:
  void refresh_id();

  std::vector<double> weights_;
  double bias_ = 0.0;
  std::string id_;
  int n_min_ = 3;
  int n_max_ = 5;
  std::uint64_t seed_ = 0;
};

// Per-example SGD in a seeded order. After every epoch the full-batch loss is
// evaluated; an epoch that would raise it is undone and repeated at half the
// step, so the reported losses never increase. Throws on a single-class
// dataset or a text below the length floor.
BaselineModel train_baseline(const std::vector<LabeledText>& dataset, const TrainOptions& options = {},
                             TrainReport* report = nullptr);

struct ClassifyOptions {
  double tau = kDefaultTau;
  int jobs = 1;
  std::size_t batch_size = 16;
  std::optional<Timestamp> now;  // fixed scored_at, for reproducible output
};

struct ClassifyReport {
  std::size_t scored = 0;
  std::size_t resumed = 0;   // already present in the output file
  std::size_t unscored = 0;  // scorer failures
  std::size_t skipped = 0;   // not admitted
  std::vector<std::pair<std::string, std::string>> failures;  // (article id, reason)
  double seconds = 0.0;
  double throughput() const { return seconds > 0 ? static_cast<double>(scored) / seconds : 0.0; }
};

// Scores every admitted article not already scored by this detector in
// `out`. Batches are scored in parallel and appended by a single writer as
// they finish, so an interrupted run resumes where it stopped. On completion
// the file is rewritten sorted by (article_id, model_id).
ClassifyReport classify_corpus(const std::vector<ArticleRecord>& articles, const Detector& detector,
                               const std::filesystem::path& out, const ClassifyOptions& options = {});

}  // namespace synth::detect
