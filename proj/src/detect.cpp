#include "synth/detect.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <thread>

#include "json.hpp"
#include "synth/error.hpp"
#include "synth/text.hpp"

namespace synth::detect {

static_assert(std::endian::native == std::endian::little, "model files are written in host byte order");

using ojson = nlohmann::ordered_json;

Label label_for(double score, double tau) { return score >= tau ? Label::machine : Label::human; }

std::string score_to_json(const DetectionScore& s) {
  ojson j;
  j["article_id"] = s.article_id;
  j["score"] = s.score;
  j["label"] = to_string(s.label);
  j["model_id"] = s.model_id;
  j["scored_at"] = format_timestamp(s.scored_at);
  return j.dump();
}

DetectionScore score_from_json(std::string_view line) {
  const auto j = ojson::parse(line);
  DetectionScore s;
  s.article_id = j.at("article_id").get<std::string>();
  s.score = j.at("score").get<double>();
  s.label = parse_label(j.at("label").get<std::string>());
  s.model_id = j.at("model_id").get<std::string>();
  const auto at = parse_iso_timestamp(j.at("scored_at").get<std::string>());
  if (!at) throw Error("bad scored_at");
  s.scored_at = *at;
  if (!(s.score >= 0.0 && s.score <= 1.0)) throw Error("score outside [0,1]");
  return s;
}

std::vector<DetectionScore> load_scores(const std::filesystem::path& path) {
  const auto content = read_file(path);
  std::vector<DetectionScore> out;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < content.size()) {
    const auto nl = content.find('\n', pos);
    const bool terminated = nl != std::string::npos;
    const auto line = trim(std::string_view(content).substr(pos, terminated ? nl - pos : std::string::npos));
    pos = terminated ? nl + 1 : content.size();
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(score_from_json(line));
    } catch (const std::exception& e) {
      if (!terminated) break;
      throw ParseError(path.string() + ": corrupt score on line " + std::to_string(line_no) + ": " + e.what(),
                       line_no);
    }
  }
  return out;
}

void store_scores(const std::vector<DetectionScore>& scores, const std::filesystem::path& path) {
  std::string out;
  for (const auto& s : scores) out += score_to_json(s) + '\n';
  write_file(path, out);
}

double Detector::score(const std::string& text) const {
  const auto s = score_batch({text});
  if (s.size() != 1) throw ProtocolError("scorer returned " + std::to_string(s.size()) + " scores for 1 text");
  return s[0];
}

ConstantScorer::ConstantScorer(double value, std::string id) : value_(value), id_(std::move(id)) {
  if (!(value >= 0.0 && value <= 1.0)) throw Error("constant score outside [0,1]");
}

std::vector<double> ConstantScorer::score_batch(const std::vector<std::string>& texts) const {
  return std::vector<double>(texts.size(), value_);
}

RemoteScorer::RemoteScorer(std::string base_url, std::string model_id, http::Options options,
                           http::RetryPolicy retry)
    : url_(std::move(base_url) + "/score"), id_(std::move(model_id)), options_(std::move(options)), retry_(retry) {}

std::vector<double> RemoteScorer::score_batch(const std::vector<std::string>& texts) const {
  if (texts.empty()) return {};
  const auto reply = http::post_json(url_, {{"texts", texts}}, options_, retry_);
  if (!reply.is_object() || !reply.contains("scores") || !reply.at("scores").is_array()) {
    throw ProtocolError("reply from " + url_ + " lacks a \"scores\" array");
  }
  const auto& arr = reply.at("scores");
  if (arr.size() != texts.size()) {
    throw ProtocolError("reply from " + url_ + " has " + std::to_string(arr.size()) + " scores for " +
                        std::to_string(texts.size()) + " texts");
  }
  std::vector<double> out;
  out.reserve(arr.size());
  for (const auto& v : arr) {
    if (!v.is_number()) throw ProtocolError("non-numeric score from " + url_);
    const auto s = v.get<double>();
    if (!(s >= 0.0 && s <= 1.0)) throw ProtocolError("score outside [0,1] from " + url_);
    out.push_back(s);
  }
  return out;
}

namespace {

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double dot(const std::vector<double>& w, const SparseVector& x) {
  double s = 0.0;
  for (const auto& [j, v] : x) s += w[j] * v;
  return s;
}

}  // namespace

SparseVector hashed_features(std::string_view text, int n_min, int n_max) {
  if (n_min < 1 || n_max < n_min) throw Error("bad n-gram orders");
  const auto s = to_lower_ascii(collapse_whitespace(text));
  std::vector<std::pair<std::uint32_t, double>> raw;
  raw.reserve(s.size() * static_cast<std::size_t>(n_max - n_min + 1));
  for (std::size_t i = 0; i < s.size(); ++i) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (int k = 0; k < n_max && i + k < s.size(); ++k) {
      h = (h ^ static_cast<unsigned char>(s[i + k])) * 0x100000001b3ULL;
      if (k + 1 < n_min) continue;
      const auto m = mix64(h);
      raw.emplace_back(static_cast<std::uint32_t>(m & (kHashDims - 1)), (m >> 63) ? -1.0 : 1.0);
    }
  }
  std::sort(raw.begin(), raw.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  SparseVector x;
  for (const auto& [j, v] : raw) {
    if (!x.empty() && x.back().first == j) {
      x.back().second += v;
    } else {
      x.emplace_back(j, v);
    }
  }
  std::erase_if(x, [](const auto& p) { return p.second == 0.0; });
  double norm = 0.0;
  for (const auto& p : x) norm += p.second * p.second;
  norm = std::sqrt(norm);
  if (norm > 0) {
    for (auto& p : x) p.second /= norm;
  }
  return x;
}

BaselineModel::BaselineModel() : weights_(kHashDims, 0.0) { refresh_id(); }

void BaselineModel::refresh_id() {
  std::uint64_t h = fnv1a64(std::string_view(reinterpret_cast<const char*>(&bias_), sizeof bias_));
  for (std::size_t j = 0; j < weights_.size(); ++j) {
    if (weights_[j] == 0.0) continue;
    char buf[sizeof(std::uint32_t) + sizeof(double)];
    const auto idx = static_cast<std::uint32_t>(j);
    std::memcpy(buf, &idx, sizeof idx);
    std::memcpy(buf + sizeof idx, &weights_[j], sizeof(double));
    h = fnv1a64(std::string_view(buf, sizeof buf), h);
  }
  id_ = "baseline-" + hex64(h).substr(0, 8);
}

std::string BaselineModel::model_id() const { return id_; }

double BaselineModel::score_features(const SparseVector& x) const { return sigmoid(dot(weights_, x) + bias_); }

std::vector<double> BaselineModel::score_batch(const std::vector<std::string>& texts) const {
  std::vector<double> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(score_features(hashed_features(t, n_min_, n_max_)));
  return out;
}

namespace {

constexpr char kMagic[8] = {'S', 'Y', 'N', 'B', 'M', 'v', '1', '\0'};

template <typename T>
void put(std::string& out, const T& v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T take(std::string_view& in, const std::filesystem::path& path) {
  if (in.size() < sizeof(T)) throw ParseError(path.string() + ": truncated model file", 0);
  T v;
  std::memcpy(&v, in.data(), sizeof v);
  in.remove_prefix(sizeof v);
  return v;
}

}  // namespace

void BaselineModel::save(const std::filesystem::path& path) const {
  std::string out(kMagic, sizeof kMagic);
  put(out, static_cast<std::int32_t>(n_min_));
  put(out, static_cast<std::int32_t>(n_max_));
  put(out, seed_);
  put(out, bias_);
  std::uint64_t nonzero = 0;
  for (double w : weights_) nonzero += w != 0.0;
  put(out, nonzero);
  for (std::size_t j = 0; j < weights_.size(); ++j) {
    if (weights_[j] == 0.0) continue;
    put(out, static_cast<std::uint32_t>(j));
    put(out, weights_[j]);
  }
  write_file(path, out);
}

BaselineModel BaselineModel::load(const std::filesystem::path& path) {
  const auto content = read_file(path);
  std::string_view in(content);
  if (in.substr(0, sizeof kMagic) != std::string_view(kMagic, sizeof kMagic)) {
    throw ParseError(path.string() + ": not a baseline model file", 0);
  }
  in.remove_prefix(sizeof kMagic);
  BaselineModel m;
  m.n_min_ = take<std::int32_t>(in, path);
  m.n_max_ = take<std::int32_t>(in, path);
  m.seed_ = take<std::uint64_t>(in, path);
  m.bias_ = take<double>(in, path);
  const auto nonzero = take<std::uint64_t>(in, path);
  if (m.n_min_ < 1 || m.n_max_ < m.n_min_ || nonzero > kHashDims) {
    throw ParseError(path.string() + ": bad model header", 0);
  }
  for (std::uint64_t i = 0; i < nonzero; ++i) {
    const auto j = take<std::uint32_t>(in, path);
    const auto w = take<double>(in, path);
    if (j >= kHashDims || !std::isfinite(w)) throw ParseError(path.string() + ": bad weight entry", i);
    m.weights_[j] = w;
  }
  if (!in.empty() || !std::isfinite(m.bias_)) throw ParseError(path.string() + ": trailing bytes in model", 0);
  m.refresh_id();
  return m;
}

BaselineModel train_baseline(const std::vector<LabeledText>& dataset, const TrainOptions& options,
                             TrainReport* report) {
  std::size_t n_machine = 0;
  for (const auto& t : dataset) {
    n_machine += t.label == Label::machine;
    if (options.require_min_length && utf8_length(t.text) < kMinArticleChars) {
      throw Error("training text " + t.id + " is shorter than " + std::to_string(kMinArticleChars) + " characters");
    }
  }
  if (n_machine == 0 || n_machine == dataset.size()) throw Error("training data needs both labels");
  if (options.epochs < 1 || !(options.learning_rate > 0)) throw Error("bad training options");

  std::vector<SparseVector> xs;
  std::vector<double> ys;
  xs.reserve(dataset.size());
  for (const auto& t : dataset) {
    xs.push_back(hashed_features(t.text, options.n_min, options.n_max));
    ys.push_back(t.label == Label::machine ? 1.0 : 0.0);
  }

  BaselineModel m;
  m.n_min_ = options.n_min;
  m.n_max_ = options.n_max;
  m.seed_ = options.seed;
  auto& w = m.weights_;
  auto& b = m.bias_;

  const auto full_loss = [&] {
    double sum = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double z = dot(w, xs[i]) + b;
      sum += ys[i] > 0.5 ? softplus(-z) : softplus(z);
    }
    return sum / static_cast<double>(xs.size());
  };

  std::mt19937_64 rng(options.seed);
  std::vector<std::size_t> order(xs.size());
  TrainReport rep;
  double lr = options.learning_rate;
  double prev = full_loss();
  constexpr int kMaxHalvings = 30;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle_in_place(order, rng);
    const auto saved_w = w;
    const double saved_b = b;
    double loss = prev;
    for (int attempt = 0; attempt <= kMaxHalvings; ++attempt) {
      for (const auto i : order) {
        const double g = sigmoid(dot(w, xs[i]) + b) - ys[i];
        for (const auto& [j, v] : xs[i]) w[j] -= lr * g * v;
        b -= lr * g;
      }
      loss = full_loss();
      if (loss <= prev) break;
      w = saved_w;
      b = saved_b;
      loss = prev;
      lr /= 2;
      ++rep.step_halvings;
    }
    prev = loss;
    rep.epoch_losses.push_back(loss);
  }
  m.refresh_id();
  if (report) *report = std::move(rep);
  return m;
}

ClassifyReport classify_corpus(const std::vector<ArticleRecord>& articles, const Detector& detector,
                               const std::filesystem::path& out, const ClassifyOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto model = detector.model_id();
  ClassifyReport report;

  std::vector<DetectionScore> existing;
  if (std::filesystem::exists(out)) {
    existing = load_scores(out);
    store_scores(existing, out);  // drops a torn final line before appending
  } else {
    write_file(out, "");
  }
  std::set<std::string> done;
  for (const auto& s : existing) {
    if (s.model_id == model) done.insert(s.article_id);
  }

  std::vector<const ArticleRecord*> pending;
  std::set<std::string> queued;
  for (const auto& a : articles) {
    if (!a.admitted) {
      ++report.skipped;
    } else if (done.count(a.id)) {
      ++report.resumed;
    } else if (queued.insert(a.id).second) {
      pending.push_back(&a);
    }
  }

  const auto scored_at = [&] {
    return options.now ? *options.now
                       : std::chrono::time_point_cast<std::chrono::seconds>(std::chrono::system_clock::now());
  };
  const std::size_t batch = std::max<std::size_t>(1, options.batch_size);
  const std::size_t n_batches = (pending.size() + batch - 1) / batch;

  std::ofstream writer(out, std::ios::binary | std::ios::app);
  if (!writer) throw Error("cannot open " + out.string());
  std::mutex mu;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t b = next++; b < n_batches; b = next++) {
      const auto first = b * batch;
      const auto last = std::min(pending.size(), first + batch);
      std::vector<std::string> texts;
      for (auto i = first; i < last; ++i) texts.push_back(pending[i]->text);
      std::vector<std::optional<double>> scores(texts.size());
      std::vector<std::pair<std::string, std::string>> failed;
      try {
        const auto s = detector.score_batch(texts);
        if (s.size() != texts.size()) throw ProtocolError("scorer returned a short batch");
        for (std::size_t k = 0; k < s.size(); ++k) scores[k] = s[k];
      } catch (const std::exception&) {
        // Retry one by one so a single bad article does not sink its batch.
        for (std::size_t k = 0; k < texts.size(); ++k) {
          try {
            scores[k] = detector.score(texts[k]);
          } catch (const std::exception& e) {
            failed.emplace_back(pending[first + k]->id, e.what());
          }
        }
      }
      std::string lines;
      std::size_t n_ok = 0;
      for (std::size_t k = 0; k < scores.size(); ++k) {
        if (!scores[k]) continue;
        const double s = *scores[k];
        if (!(s >= 0.0 && s <= 1.0)) {
          failed.emplace_back(pending[first + k]->id, "score outside [0,1]");
          continue;
        }
        lines += score_to_json({pending[first + k]->id, s, label_for(s, options.tau), model, scored_at()}) + '\n';
        ++n_ok;
      }
      std::lock_guard lock(mu);
      writer << lines;
      writer.flush();
      report.scored += n_ok;
      report.unscored += failed.size();
      for (auto& f : failed) report.failures.push_back(std::move(f));
    }
  };
  const auto jobs = static_cast<std::size_t>(std::max(1, options.jobs));
  std::vector<std::thread> threads;
  for (std::size_t t = 1; t < std::min(jobs, n_batches); ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  writer.close();

  // Last record per (article, model) wins; output sorted for reproducibility.
  std::map<std::pair<std::string, std::string>, DetectionScore> merged;
  for (auto& s : load_scores(out)) merged[{s.article_id, s.model_id}] = std::move(s);
  std::vector<DetectionScore> final_scores;
  final_scores.reserve(merged.size());
  for (auto& [key, s] : merged) final_scores.push_back(std::move(s));
  store_scores(final_scores, out);
  std::sort(report.failures.begin(), report.failures.end());

  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace synth::detect
