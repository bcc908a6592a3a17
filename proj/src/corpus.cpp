#include "synth/corpus.hpp"

#include <fstream>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

#include "synth/error.hpp"
#include "synth/text.hpp"
#include "synth/url.hpp"

namespace synth {

using ojson = nlohmann::ordered_json;

std::string_view to_string(Reliability r) {
  return r == Reliability::reliable ? "reliable" : "unreliable";
}

std::string_view to_string(CruxBucket b) {
  switch (b) {
    case CruxBucket::B10K: return "B10K";
    case CruxBucket::B100K: return "B100K";
    case CruxBucket::B1M: return "B1M";
    case CruxBucket::B10M: return "B10M";
    case CruxBucket::B10Mplus: return "B10Mplus";
    case CruxBucket::unknown: return "unknown";
  }
  return "unknown";
}

std::string_view to_string(Label l) { return l == Label::human ? "human" : "machine"; }
std::string_view to_string(Split s) { return s == Split::train ? "train" : "test"; }

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::Baseline: return "Baseline";
    case Variant::Pert: return "Pert";
    case Variant::Para: return "Para";
    case Variant::PertPara: return "PertPara";
  }
  return "Baseline";
}

Reliability parse_reliability(std::string_view s) {
  const auto v = to_lower_ascii(trim(s));
  if (v == "reliable" || v == "mainstream") return Reliability::reliable;
  if (v == "unreliable" || v == "misinformation") return Reliability::unreliable;
  throw Error("unknown reliability class '" + std::string(s) + "'");
}

CruxBucket parse_crux_bucket(std::string_view s) {
  for (auto b : {CruxBucket::B10K, CruxBucket::B100K, CruxBucket::B1M, CruxBucket::B10M,
                 CruxBucket::B10Mplus, CruxBucket::unknown}) {
    if (s == to_string(b)) return b;
  }
  throw Error("unknown CrUX bucket '" + std::string(s) + "'");
}

Label parse_label(std::string_view s) {
  if (s == "human") return Label::human;
  if (s == "machine") return Label::machine;
  throw Error("unknown label '" + std::string(s) + "'");
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  throw Error("unknown split '" + std::string(s) + "'");
}

Variant parse_variant(std::string_view s) {
  for (auto v : {Variant::Baseline, Variant::Pert, Variant::Para, Variant::PertPara}) {
    if (s == to_string(v)) return v;
  }
  throw Error("unknown dataset variant '" + std::string(s) + "'");
}

bool admit(std::string_view text, std::string_view language) {
  return language == "en" && utf8_length(text) >= kMinArticleChars;
}

CruxBucket stratify(std::optional<long long> bucket_value) {
  if (!bucket_value) return CruxBucket::B10Mplus;
  switch (*bucket_value) {
    case 1000:
    case 10000: return CruxBucket::B10K;
    case 100000: return CruxBucket::B100K;
    case 1000000: return CruxBucket::B1M;
    case 10000000: return CruxBucket::B10M;
    default: break;
  }
  throw Error("unrecognized CrUX rank magnitude " + std::to_string(*bucket_value));
}

std::string article_id(std::string_view canonical_url, std::string_view text) {
  std::string key(canonical_url);
  key.push_back('\x1f');
  key.append(utf8_prefix(text, 4096));
  return hex64(fnv1a64(key));
}

ArticleRecord make_article(std::string_view url, std::string_view domain,
                           std::optional<Date> published_at, Timestamp fetched_at,
                           std::string title, std::string text, std::string language) {
  ArticleRecord a;
  a.url = normalize_url(url);
  a.domain = canonical_domain(domain);
  a.published_at = published_at;
  a.fetched_at = fetched_at;
  a.title = std::move(title);
  a.text = std::move(text);
  a.language = std::move(language);
  a.char_count = utf8_length(a.text);
  a.word_count = word_count(a.text);
  a.admitted = admit(a.text, a.language);
  a.id = article_id(a.url, a.text);
  return a;
}

std::string canonical_domain(std::string_view raw) {
  auto s = to_lower_ascii(trim(raw));
  if (const auto scheme = s.find("://"); scheme != std::string::npos) s = s.substr(scheme + 3);
  s = s.substr(0, s.find_first_of("/?#"));
  if (const auto colon = s.find(':'); colon != std::string::npos) s = s.substr(0, colon);
  if (s.rfind("www.", 0) == 0) s = s.substr(4);
  if (!s.empty() && s.back() == '.') s.pop_back();
  return s;
}

namespace {

std::string dump(const ojson& j) {
  return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

template <typename T>
T get_field(const ojson& j, const char* key) {
  if (!j.contains(key)) throw Error(std::string("missing field '") + key + "'");
  return j.at(key).get<T>();
}

template <typename Record, typename Parse>
std::vector<Record> load_jsonl(const std::filesystem::path& path, Parse parse, LoadStats* stats) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<Record> records;
  std::unordered_map<std::string, std::size_t> index;
  std::string line;
  std::size_t line_no = 0;
  std::size_t duplicates = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    Record r;
    try {
      r = parse(line);
    } catch (const std::exception& e) {
      throw ParseError(path.string() + ": corrupt record on line " + std::to_string(line_no) + ": " +
                           e.what(),
                       line_no);
    }
    if (auto it = index.find(r.id); it != index.end()) {
      records[it->second] = std::move(r);
      ++duplicates;
    } else {
      index.emplace(r.id, records.size());
      records.push_back(std::move(r));
    }
  }
  if (stats) stats->duplicates = duplicates;
  return records;
}

template <typename Record, typename Serialize>
void store_jsonl(const std::vector<Record>& records, const std::filesystem::path& path,
                 Serialize serialize) {
  std::string out;
  for (const auto& r : records) {
    out += serialize(r);
    out += '\n';
  }
  write_file(path, out);
}

}  // namespace

std::string article_to_json(const ArticleRecord& a) {
  ojson j;
  j["id"] = a.id;
  j["url"] = a.url;
  j["domain"] = a.domain;
  j["published_at"] = a.published_at ? ojson(format_date(*a.published_at)) : ojson(nullptr);
  j["fetched_at"] = format_timestamp(a.fetched_at);
  j["title"] = a.title;
  j["text"] = a.text;
  j["language"] = a.language;
  j["char_count"] = a.char_count;
  j["word_count"] = a.word_count;
  j["admitted"] = a.admitted;
  return dump(j);
}

ArticleRecord article_from_json(std::string_view line) {
  const auto j = ojson::parse(line);
  if (!j.is_object()) throw Error("record is not a JSON object");
  ArticleRecord a;
  a.id = get_field<std::string>(j, "id");
  a.url = get_field<std::string>(j, "url");
  a.domain = get_field<std::string>(j, "domain");
  if (j.contains("published_at") && !j.at("published_at").is_null()) {
    const auto s = j.at("published_at").get<std::string>();
    a.published_at = parse_date(s);
    if (!a.published_at) throw Error("invalid published_at '" + s + "'");
  }
  const auto fetched = get_field<std::string>(j, "fetched_at");
  const auto ts = parse_iso_timestamp(fetched);
  if (!ts) throw Error("invalid fetched_at '" + fetched + "'");
  a.fetched_at = *ts;
  a.title = get_field<std::string>(j, "title");
  a.text = get_field<std::string>(j, "text");
  a.language = get_field<std::string>(j, "language");
  a.char_count = get_field<std::size_t>(j, "char_count");
  a.word_count = get_field<std::size_t>(j, "word_count");
  a.admitted = get_field<bool>(j, "admitted");
  return a;
}

std::string labeled_to_json(const LabeledText& t) {
  ojson j;
  j["id"] = t.id;
  j["text"] = t.text;
  j["label"] = to_string(t.label);
  j["generator_id"] = t.generator_id;
  j["decoding_config"] = t.decoding_config;
  j["split"] = to_string(t.split);
  auto variants = ojson::array();
  for (auto v : t.variants) variants.push_back(to_string(v));
  j["variants"] = variants;
  return dump(j);
}

LabeledText labeled_from_json(std::string_view line) {
  const auto j = ojson::parse(line);
  if (!j.is_object()) throw Error("record is not a JSON object");
  LabeledText t;
  t.id = get_field<std::string>(j, "id");
  t.text = get_field<std::string>(j, "text");
  t.label = parse_label(get_field<std::string>(j, "label"));
  t.generator_id = j.value("generator_id", "");
  t.decoding_config = j.value("decoding_config", "");
  t.split = parse_split(j.value("split", "train"));
  if (j.contains("variants")) {
    for (const auto& v : j.at("variants")) t.variants.insert(parse_variant(v.get<std::string>()));
  }
  return t;
}

void store_articles(const std::vector<ArticleRecord>& records, const std::filesystem::path& path) {
  store_jsonl(records, path, article_to_json);
}

std::vector<ArticleRecord> load_articles(const std::filesystem::path& path, LoadStats* stats) {
  return load_jsonl<ArticleRecord>(path, article_from_json, stats);
}

void store_labeled(const std::vector<LabeledText>& records, const std::filesystem::path& path) {
  store_jsonl(records, path, labeled_to_json);
}

std::vector<LabeledText> load_labeled(const std::filesystem::path& path, LoadStats* stats) {
  return load_jsonl<LabeledText>(path, labeled_from_json, stats);
}

std::vector<SiteRecord> load_sites(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  std::vector<SiteRecord> sites;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    if (line_no == 1) {
      if (trim(line) != "domain,reliability_class,crux_bucket_value") {
        throw ParseError(path.string() + ": expected header 'domain,reliability_class,crux_bucket_value'", 1);
      }
      continue;
    }
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, ',')) cols.push_back(std::string(trim(col)));
    if (line.back() == ',') cols.emplace_back();
    if (cols.size() != 3) {
      throw ParseError(path.string() + ": line " + std::to_string(line_no) + " needs 3 columns", line_no);
    }
    try {
      SiteRecord site;
      site.domain = canonical_domain(cols[0]);
      site.reliability = parse_reliability(cols[1]);
      if (!cols[2].empty()) site.bucket_value = std::stoll(cols[2]);
      site.bucket = stratify(site.bucket_value);
      sites.push_back(std::move(site));
    } catch (const std::exception& e) {
      throw ParseError(path.string() + ": line " + std::to_string(line_no) + ": " + e.what(), line_no);
    }
  }
  return sites;
}

void store_sites(const std::vector<SiteRecord>& sites, const std::filesystem::path& path) {
  std::string out = "domain,reliability_class,crux_bucket_value\n";
  for (const auto& s : sites) {
    out += s.domain + "," + std::string(to_string(s.reliability)) + ",";
    if (s.bucket_value) out += std::to_string(*s.bucket_value);
    out += '\n';
  }
  write_file(path, out);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error("write failed for " + path.string());
}

}  // namespace synth
