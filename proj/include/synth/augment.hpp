#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "synth/corpus.hpp"
#include "synth/http.hpp"

namespace synth::augment {

inline constexpr std::size_t kSpanWords = 5;
inline constexpr int kLexDiversity = 60;

struct Span {
  std::size_t start = 0;
  std::size_t length = 0;
  bool operator==(const Span&) const = default;
};

struct MaskPlan {
  std::size_t word_count = 0;
  std::vector<Span> spans;  // sorted by start
  std::uint64_t seed = 0;
  bool exhausted = false;  // ran out of admissible starts below 25%

  std::size_t masked_words() const;
  double masked_fraction() const;
  bool operator==(const MaskPlan&) const = default;
};

// Adds uniformly drawn disjoint 5-word spans (or one span of the whole text
// when it is shorter than 5 words) until at least a quarter of the words are
// masked. Deterministic in (word_count, seed).
MaskPlan plan_masks(std::size_t word_count, std::uint64_t seed);

// A text with its plan resolved to byte ranges. Adjacent spans merge into one
// region; regions are what fillers replace.
class MaskedText {
 public:
  struct Region {
    std::size_t first_word = 0;
    std::size_t n_words = 0;
    std::size_t n_spans = 0;
    std::size_t byte_begin = 0;
    std::size_t byte_end = 0;
  };

  MaskedText(std::string text, MaskPlan plan);

  const std::string& text() const { return text_; }
  const MaskPlan& plan() const { return plan_; }
  const std::vector<Region>& regions() const { return regions_; }
  std::string_view region_text(std::size_t r) const;
  // Whitespace tokens of the unmasked stretches: before region 0, between
  // regions, and after the last one (regions().size() + 1 entries).
  std::vector<std::vector<std::string_view>> unmasked_segments() const;
  // Text with every span replaced by an "<extra_id_N>" sentinel.
  std::string sentinel_text() const;
  // Splices one replacement per region into the original bytes.
  std::string splice(const std::vector<std::string>& fills) const;

 private:
  std::string text_;
  MaskPlan plan_;
  std::vector<std::pair<std::size_t, std::size_t>> word_bytes_;
  std::vector<Region> regions_;
};

// Replacement text per region, in region order. Throws on failure.
class SpanFiller {
 public:
  virtual ~SpanFiller() = default;
  virtual std::vector<std::string> fill(const MaskedText& masked) = 0;
};

class IdentityFiller : public SpanFiller {
 public:
  std::vector<std::string> fill(const MaskedText& masked) override;
};

// Every span becomes `span_text`; adjacent spans in one region are joined by
// a space.
class ConstantFiller : public SpanFiller {
 public:
  explicit ConstantFiller(std::string span_text) : span_text_(std::move(span_text)) {}
  std::vector<std::string> fill(const MaskedText& masked) override;

 private:
  std::string span_text_;
};

// POST {base}/fill with {"text": sentinel text, "spans": [[start, length]...],
// "seed": n}; the reply {"text": ...} is the filled article. Fills are
// recovered by aligning the reply against the unmasked segments, and a reply
// that alters any unmasked word raises ProtocolError.
class RemoteFiller : public SpanFiller {
 public:
  RemoteFiller(std::string base_url, http::Options options = {}, http::RetryPolicy retry = {});
  std::vector<std::string> fill(const MaskedText& masked) override;

 private:
  std::string url_;
  http::Options options_;
  http::RetryPolicy retry_;
};

// Recovers per-region fills from a filled text. Throws ProtocolError when the
// unmasked words are not found unchanged and in order.
std::vector<std::string> align_fills(const MaskedText& masked, std::string_view filled);

// Fills the planned spans of `text` and splices the result. Filler failures
// propagate.
std::string apply_fill(const std::string& text, const MaskPlan& plan, SpanFiller& filler);

class Paraphraser {
 public:
  virtual ~Paraphraser() = default;
  virtual std::string paraphrase(const std::string& text, int lex_diversity) = 0;
};

class IdentityParaphraser : public Paraphraser {
 public:
  std::string paraphrase(const std::string& text, int) override { return text; }
};

// POST {base}/paraphrase with {"text": ..., "lex_diversity": 60}.
class RemoteParaphraser : public Paraphraser {
 public:
  RemoteParaphraser(std::string base_url, http::Options options = {}, http::RetryPolicy retry = {});
  std::string paraphrase(const std::string& text, int lex_diversity) override;

 private:
  std::string url_;
  http::Options options_;
  http::RetryPolicy retry_;
};

struct Dropped {
  std::string id;
  std::string reason;
};

struct AugmentResult {
  std::vector<LabeledText> survivors;  // fresh ids, label machine
  std::vector<Dropped> dropped;
};

struct AugmentOptions {
  std::uint64_t seed = 0;
  int concurrency = 4;        // requests in flight per service
  double subsample = 1.0;     // fraction of survivors kept
};

// Perturbs every machine text: per-text seed derived from (seed, id), fill,
// then the 1000-character rule. Output order follows input order.
AugmentResult perturb_all(const std::vector<LabeledText>& machine, SpanFiller& filler, const AugmentOptions& opts);

// Paraphrases every machine text with lex_diversity 60 and applies the
// 1000-character rule.
AugmentResult paraphrase_all(const std::vector<LabeledText>& machine, Paraphraser& paraphraser,
                             const AugmentOptions& opts);

struct DatasetVariant {
  Variant name = Variant::Baseline;
  std::set<std::string> human_ids;
  std::set<std::string> machine_ids;
};

// Machine side is the baseline's plus the survivor sets the variant calls for
// (Pert: perturbed, Para: paraphrased, PertPara: both). Throws when a
// survivor id collides with a baseline machine id.
DatasetVariant build_variant(const DatasetVariant& baseline, const std::set<std::string>& perturbed_ids,
                             const std::set<std::string>& paraphrased_ids, Variant name);

struct Prompt {
  std::string article_id;
  std::string text;
};

// First 10 whitespace tokens of each article joined by single spaces.
// Articles with fewer than 10 tokens are reported in `skipped`.
std::vector<Prompt> make_generation_prompts(const std::vector<ArticleRecord>& articles,
                                            std::vector<Dropped>* skipped = nullptr);

}  // namespace synth::augment
