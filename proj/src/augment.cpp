#include "synth/augment.hpp"

#include <algorithm>
#include <atomic>
#include <random>
#include <thread>

#include "synth/error.hpp"
#include "synth/text.hpp"

namespace synth::augment {

std::size_t MaskPlan::masked_words() const {
  std::size_t n = 0;
  for (const auto& s : spans) n += s.length;
  return n;
}

double MaskPlan::masked_fraction() const {
  return word_count == 0 ? 0.0 : static_cast<double>(masked_words()) / static_cast<double>(word_count);
}

MaskPlan plan_masks(std::size_t word_count, std::uint64_t seed) {
  MaskPlan plan;
  plan.word_count = word_count;
  plan.seed = seed;
  if (word_count == 0) return plan;
  const std::size_t len = std::min(kSpanWords, word_count);
  std::mt19937_64 rng(seed);
  std::vector<bool> covered(word_count, false);
  std::vector<std::size_t> admissible;
  // masked / word_count >= 1/4, kept in integers.
  while (plan.masked_words() * 4 < word_count) {
    admissible.clear();
    std::size_t run = 0;  // free words ending at i
    for (std::size_t i = 0; i < word_count; ++i) {
      run = covered[i] ? 0 : run + 1;
      if (run >= len) admissible.push_back(i + 1 - len);
    }
    if (admissible.empty()) {
      plan.exhausted = true;
      break;
    }
    const auto start = admissible[bounded_draw(rng, admissible.size())];
    for (std::size_t i = start; i < start + len; ++i) covered[i] = true;
    plan.spans.push_back({start, len});
  }
  std::sort(plan.spans.begin(), plan.spans.end(), [](const Span& a, const Span& b) { return a.start < b.start; });
  return plan;
}

MaskedText::MaskedText(std::string text, MaskPlan plan) : text_(std::move(text)), plan_(std::move(plan)) {
  std::size_t i = 0;
  while (i < text_.size()) {
    while (i < text_.size() && is_ascii_space(text_[i])) ++i;
    if (i >= text_.size()) break;
    const auto b = i;
    while (i < text_.size() && !is_ascii_space(text_[i])) ++i;
    word_bytes_.emplace_back(b, i);
  }
  if (word_bytes_.size() != plan_.word_count) {
    throw Error("mask plan is for " + std::to_string(plan_.word_count) + " words but text has " +
                std::to_string(word_bytes_.size()));
  }
  for (const auto& s : plan_.spans) {
    if (s.length == 0 || s.start + s.length > word_bytes_.size()) throw Error("mask span outside text");
    if (!regions_.empty()) {
      auto& last = regions_.back();
      if (s.start < last.first_word + last.n_words) throw Error("overlapping mask spans");
      if (s.start == last.first_word + last.n_words) {
        last.n_words += s.length;
        ++last.n_spans;
        last.byte_end = word_bytes_[s.start + s.length - 1].second;
        continue;
      }
    }
    regions_.push_back({s.start, s.length, 1, word_bytes_[s.start].first, word_bytes_[s.start + s.length - 1].second});
  }
}

std::string_view MaskedText::region_text(std::size_t r) const {
  const auto& reg = regions_.at(r);
  return std::string_view(text_).substr(reg.byte_begin, reg.byte_end - reg.byte_begin);
}

std::vector<std::vector<std::string_view>> MaskedText::unmasked_segments() const {
  std::vector<std::vector<std::string_view>> out(regions_.size() + 1);
  std::size_t r = 0;
  const std::string_view all(text_);
  for (std::size_t w = 0; w < word_bytes_.size(); ++w) {
    while (r < regions_.size() && w >= regions_[r].first_word + regions_[r].n_words) ++r;
    if (r < regions_.size() && w >= regions_[r].first_word) continue;
    out[r].push_back(all.substr(word_bytes_[w].first, word_bytes_[w].second - word_bytes_[w].first));
  }
  return out;
}

std::string MaskedText::sentinel_text() const {
  std::string out;
  std::size_t cursor = 0;
  std::size_t sentinel = 0;
  for (const auto& s : plan_.spans) {
    const auto b = word_bytes_[s.start].first;
    const auto e = word_bytes_[s.start + s.length - 1].second;
    out.append(text_, cursor, b - cursor);
    out += "<extra_id_" + std::to_string(sentinel++) + ">";
    cursor = e;
  }
  out.append(text_, cursor, std::string::npos);
  return out;
}

std::string MaskedText::splice(const std::vector<std::string>& fills) const {
  if (fills.size() != regions_.size()) {
    throw ProtocolError("filler returned " + std::to_string(fills.size()) + " fills for " +
                        std::to_string(regions_.size()) + " regions");
  }
  std::string out;
  std::size_t cursor = 0;
  for (std::size_t r = 0; r < regions_.size(); ++r) {
    out.append(text_, cursor, regions_[r].byte_begin - cursor);
    out += fills[r];
    cursor = regions_[r].byte_end;
  }
  out.append(text_, cursor, std::string::npos);
  return out;
}

std::vector<std::string> IdentityFiller::fill(const MaskedText& masked) {
  std::vector<std::string> out;
  for (std::size_t r = 0; r < masked.regions().size(); ++r) out.emplace_back(masked.region_text(r));
  return out;
}

std::vector<std::string> ConstantFiller::fill(const MaskedText& masked) {
  std::vector<std::string> out;
  for (const auto& reg : masked.regions()) {
    std::string s;
    for (std::size_t k = 0; k < reg.n_spans; ++k) {
      if (k) s += ' ';
      s += span_text_;
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<std::string> align_fills(const MaskedText& masked, std::string_view filled) {
  const auto tokens = split_whitespace(filled);
  const auto segments = masked.unmasked_segments();
  const auto n_regions = masked.regions().size();
  auto matches_at = [&](const std::vector<std::string_view>& seg, std::size_t pos) {
    if (pos + seg.size() > tokens.size()) return false;
    return std::equal(seg.begin(), seg.end(), tokens.begin() + static_cast<std::ptrdiff_t>(pos));
  };
  auto join = [&](std::size_t b, std::size_t e) {
    std::string s;
    for (std::size_t i = b; i < e; ++i) {
      if (i > b) s += ' ';
      s += tokens[i];
    }
    return s;
  };
  if (!matches_at(segments[0], 0)) throw ProtocolError("filled text changed the words before the first mask");
  std::size_t pos = segments[0].size();
  std::vector<std::string> fills;
  for (std::size_t r = 0; r < n_regions; ++r) {
    const auto& next = segments[r + 1];
    std::size_t found = std::string::npos;
    if (r + 1 == n_regions) {
      // The trailing segment must end the text.
      if (tokens.size() >= pos + next.size() && matches_at(next, tokens.size() - next.size())) {
        found = tokens.size() - next.size();
      }
    } else {
      for (std::size_t p = pos; p + next.size() <= tokens.size(); ++p) {
        if (matches_at(next, p)) {
          found = p;
          break;
        }
      }
    }
    if (found == std::string::npos) {
      throw ProtocolError("filled text does not keep unmasked words after region " + std::to_string(r));
    }
    fills.push_back(join(pos, found));
    pos = found + next.size();
  }
  if (pos != tokens.size()) throw ProtocolError("filled text has extra words after the last unmasked segment");
  return fills;
}

std::string apply_fill(const std::string& text, const MaskPlan& plan, SpanFiller& filler) {
  const MaskedText masked(text, plan);
  return masked.splice(filler.fill(masked));
}

namespace {

std::string idempotency_key(const nlohmann::json& body) { return hex64(fnv1a64(body.dump())); }

http::Options with_key(http::Options options, const nlohmann::json& body) {
  options.headers.emplace_back("Idempotency-Key", idempotency_key(body));
  return options;
}

std::string text_field(const nlohmann::json& reply, const std::string& url) {
  if (!reply.is_object() || !reply.contains("text") || !reply.at("text").is_string()) {
    throw ProtocolError("reply from " + url + " lacks a string \"text\" field");
  }
  return reply.at("text").get<std::string>();
}

std::uint64_t text_seed(std::uint64_t seed, const std::string& id) {
  return fnv1a64(id, fnv1a64(std::to_string(seed)));
}

template <typename Fn>
AugmentResult run_all(const std::vector<LabeledText>& machine, const AugmentOptions& opts, const char* tag,
                      Variant variant, Fn&& transform) {
  struct Slot {
    std::optional<std::string> text;
    std::string reason;
  };
  std::vector<Slot> slots(machine.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < machine.size(); i = next++) {
      try {
        auto out = transform(machine[i]);
        if (utf8_length(out) < kMinArticleChars) {
          slots[i].reason = "below " + std::to_string(kMinArticleChars) + " characters after " + tag;
        } else {
          slots[i].text = std::move(out);
        }
      } catch (const std::exception& e) {
        slots[i].reason = std::string(tag) + " failed: " + e.what();
      }
    }
  };
  const auto n = static_cast<std::size_t>(std::max(1, opts.concurrency));
  std::vector<std::thread> threads;
  for (std::size_t t = 1; t < std::min(n, machine.size()); ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();

  AugmentResult result;
  for (std::size_t i = 0; i < machine.size(); ++i) {
    const auto& src = machine[i];
    if (!slots[i].text) {
      result.dropped.push_back({src.id, slots[i].reason});
      continue;
    }
    if (opts.subsample < 1.0) {
      std::mt19937_64 rng(text_seed(opts.seed ^ 0x5eedULL, src.id + tag));
      if (unit_draw(rng) >= opts.subsample) {
        result.dropped.push_back({src.id, "subsampled out"});
        continue;
      }
    }
    LabeledText t;
    t.id = hex64(fnv1a64(src.id + "/" + tag));
    t.text = std::move(*slots[i].text);
    t.label = Label::machine;
    t.generator_id = src.generator_id;
    t.decoding_config = src.decoding_config;
    t.split = src.split;
    t.variants = {variant, Variant::PertPara};
    result.survivors.push_back(std::move(t));
  }
  return result;
}

}  // namespace

RemoteFiller::RemoteFiller(std::string base_url, http::Options options, http::RetryPolicy retry)
    : url_(std::move(base_url) + "/fill"), options_(std::move(options)), retry_(retry) {}

std::vector<std::string> RemoteFiller::fill(const MaskedText& masked) {
  nlohmann::json spans = nlohmann::json::array();
  for (const auto& s : masked.plan().spans) spans.push_back({s.start, s.length});
  const nlohmann::json body = {{"text", masked.sentinel_text()}, {"spans", spans}, {"seed", masked.plan().seed}};
  const auto reply = http::post_json(url_, body, with_key(options_, body), retry_);
  return align_fills(masked, text_field(reply, url_));
}

RemoteParaphraser::RemoteParaphraser(std::string base_url, http::Options options, http::RetryPolicy retry)
    : url_(std::move(base_url) + "/paraphrase"), options_(std::move(options)), retry_(retry) {}

std::string RemoteParaphraser::paraphrase(const std::string& text, int lex_diversity) {
  const nlohmann::json body = {{"text", text}, {"lex_diversity", lex_diversity}};
  return text_field(http::post_json(url_, body, with_key(options_, body), retry_), url_);
}

AugmentResult perturb_all(const std::vector<LabeledText>& machine, SpanFiller& filler, const AugmentOptions& opts) {
  return run_all(machine, opts, "pert", Variant::Pert, [&](const LabeledText& t) {
    if (t.label != Label::machine) throw Error("only machine texts are augmented");
    const auto plan = plan_masks(word_count(t.text), text_seed(opts.seed, t.id));
    return apply_fill(t.text, plan, filler);
  });
}

AugmentResult paraphrase_all(const std::vector<LabeledText>& machine, Paraphraser& paraphraser,
                             const AugmentOptions& opts) {
  return run_all(machine, opts, "para", Variant::Para, [&](const LabeledText& t) {
    if (t.label != Label::machine) throw Error("only machine texts are augmented");
    return paraphraser.paraphrase(t.text, kLexDiversity);
  });
}

DatasetVariant build_variant(const DatasetVariant& baseline, const std::set<std::string>& perturbed_ids,
                             const std::set<std::string>& paraphrased_ids, Variant name) {
  for (const auto* ids : {&perturbed_ids, &paraphrased_ids}) {
    for (const auto& id : *ids) {
      if (baseline.machine_ids.count(id)) throw Error("augmented id " + id + " collides with a baseline machine id");
    }
  }
  DatasetVariant out;
  out.name = name;
  out.human_ids = baseline.human_ids;
  out.machine_ids = baseline.machine_ids;
  if (name == Variant::Pert || name == Variant::PertPara) out.machine_ids.insert(perturbed_ids.begin(), perturbed_ids.end());
  if (name == Variant::Para || name == Variant::PertPara) {
    out.machine_ids.insert(paraphrased_ids.begin(), paraphrased_ids.end());
  }
  return out;
}

std::vector<Prompt> make_generation_prompts(const std::vector<ArticleRecord>& articles, std::vector<Dropped>* skipped) {
  constexpr std::size_t kPromptWords = 10;
  std::vector<Prompt> out;
  for (const auto& a : articles) {
    const auto words = split_whitespace(a.text);
    if (words.size() < kPromptWords) {
      if (skipped) skipped->push_back({a.id, "fewer than 10 words (" + std::to_string(words.size()) + ")"});
      continue;
    }
    Prompt p;
    p.article_id = a.id;
    for (std::size_t i = 0; i < kPromptWords; ++i) {
      if (i) p.text += ' ';
      p.text += words[i];
    }
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace synth::augment
