#include "synth/evalbench.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <map>
#include <optional>
#include <thread>

#include "json.hpp"
#include "synth/error.hpp"

namespace synth::evalbench {

Confusion confusion(const std::vector<Label>& labels, const std::vector<Label>& predictions) {
  if (labels.size() != predictions.size()) {
    throw Error("confusion: " + std::to_string(labels.size()) + " labels but " +
                std::to_string(predictions.size()) + " predictions");
  }
  Confusion c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool truth = labels[i] == Label::machine;
    const bool pred = predictions[i] == Label::machine;
    if (truth && pred) {
      ++c.tp;
    } else if (pred) {
      ++c.fp;
    } else if (truth) {
      ++c.fn;
    } else {
      ++c.tn;
    }
  }
  return c;
}

Prf prf(const Confusion& c) {
  Prf m;
  const auto tp = static_cast<double>(c.tp);
  if (c.tp + c.fp == 0) {
    m.precision_undefined = true;
  } else {
    m.precision = tp / static_cast<double>(c.tp + c.fp);
  }
  if (c.tp + c.fn == 0) {
    m.recall_undefined = true;
  } else {
    m.recall = tp / static_cast<double>(c.tp + c.fn);
  }
  if (m.precision + m.recall == 0.0) {
    m.f1_undefined = true;
  } else {
    m.f1 = 2 * m.precision * m.recall / (m.precision + m.recall);
  }
  return m;
}

BenchTable run_suite(const std::vector<Scorer>& scorers, const std::vector<TestSet>& testsets, double tau, int jobs) {
  for (const auto& ts : testsets) {
    const auto machine = std::count_if(ts.items.begin(), ts.items.end(),
                                       [](const LabeledText& t) { return t.label == Label::machine; });
    if (machine == 0 || static_cast<std::size_t>(machine) == ts.items.size()) {
      throw Error("test set " + ts.name + " needs both classes");
    }
  }
  BenchTable table;
  for (const auto& ts : testsets) table.testsets.push_back(ts.name);
  table.cells.resize(scorers.size() * testsets.size());

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < table.cells.size(); k = next++) {
      const auto& scorer = scorers[k / testsets.size()];
      const auto& ts = testsets[k % testsets.size()];
      auto& cell = table.cells[k];
      cell.model_id = scorer.id;
      cell.testset_id = ts.name;
      try {
        std::vector<std::string> texts;
        std::vector<Label> labels;
        for (const auto& t : ts.items) {
          texts.push_back(t.text);
          labels.push_back(t.label);
        }
        const auto scores = scorer.detector->score_batch(texts);
        if (scores.size() != texts.size()) throw ProtocolError("scorer returned a short batch");
        std::vector<Label> preds;
        for (const double s : scores) preds.push_back(detect::label_for(s, tau));
        cell.counts = confusion(labels, preds);
        cell.metrics = prf(cell.counts);
      } catch (const std::exception& e) {
        cell.absent = true;
        cell.note = e.what();
      }
    }
  };
  const auto n_threads = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, jobs)), table.cells.size());
  std::vector<std::thread> threads;
  for (std::size_t t = 1; t < n_threads; ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();

  for (std::size_t s = 0; s < scorers.size(); ++s) {
    BenchRow row;
    row.model_id = scorers[s].id;
    // Mean as first value plus mean deviation: identical F1s average exactly.
    std::optional<double> first;
    double dev = 0;
    for (std::size_t t = 0; t < testsets.size(); ++t) {
      const auto& cell = table.cells[s * testsets.size() + t];
      if (cell.absent) {
        row.partial = true;
        continue;
      }
      if (!first) first = cell.metrics.f1;
      dev += cell.metrics.f1 - *first;
      ++row.sets_scored;
    }
    if (first) row.avg_f1 = *first + dev / static_cast<double>(row.sets_scored);
    table.rows.push_back(row);
  }
  std::stable_sort(table.rows.begin(), table.rows.end(), [](const BenchRow& a, const BenchRow& b) {
    if (a.avg_f1.has_value() != b.avg_f1.has_value()) return a.avg_f1.has_value();
    if (a.avg_f1 && *a.avg_f1 != *b.avg_f1) return *a.avg_f1 > *b.avg_f1;
    return a.model_id < b.model_id;
  });
  for (std::size_t i = 0; i < table.rows.size(); ++i) table.rows[i].rank = i + 1;
  return table;
}

namespace {

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string cell_flags(const BenchCell& c) {
  std::vector<std::string> flags;
  if (c.absent) flags.push_back("absent");
  if (c.metrics.precision_undefined) flags.push_back("precision_undefined");
  if (c.metrics.recall_undefined) flags.push_back("recall_undefined");
  if (c.metrics.f1_undefined) flags.push_back("f1_undefined");
  std::string out;
  for (const auto& f : flags) out += (out.empty() ? "" : ";") + f;
  return out;
}

}  // namespace

std::string to_csv(const BenchTable& table) {
  std::string out = "model_id,testset_id,tp,fp,fn,tn,precision,recall,f1,flags\n";
  for (const auto& c : table.cells) {
    out += csv_field(c.model_id) + ',' + csv_field(c.testset_id) + ',';
    if (c.absent) {
      out += ",,,,,,,absent\n";
      continue;
    }
    out += std::to_string(c.counts.tp) + ',' + std::to_string(c.counts.fp) + ',' + std::to_string(c.counts.fn) +
           ',' + std::to_string(c.counts.tn) + ',' + fixed4(c.metrics.precision) + ',' + fixed4(c.metrics.recall) +
           ',' + fixed4(c.metrics.f1) + ',' + cell_flags(c) + '\n';
  }
  for (const auto& r : table.rows) {
    std::string flags = "rank=" + std::to_string(r.rank);
    if (r.partial) flags += ";partial";
    out += csv_field(r.model_id) + ",AVERAGE,,,,,,," + (r.avg_f1 ? fixed4(*r.avg_f1) : "") + ',' + flags + '\n';
  }
  return out;
}

std::string to_text(const BenchTable& table) {
  std::vector<std::vector<std::string>> grid;
  std::vector<std::string> header = {"rank", "model"};
  for (const auto& t : table.testsets) header.push_back(t);
  header.push_back("avg_f1");
  grid.push_back(header);
  std::map<std::pair<std::string, std::string>, const BenchCell*> by_key;
  for (const auto& c : table.cells) by_key[{c.model_id, c.testset_id}] = &c;
  for (const auto& r : table.rows) {
    std::vector<std::string> line = {std::to_string(r.rank), r.model_id};
    for (const auto& t : table.testsets) {
      const auto* c = by_key.at({r.model_id, t});
      line.push_back(c->absent ? "-" : fixed4(c->metrics.f1));
    }
    line.push_back(r.avg_f1 ? fixed4(*r.avg_f1) + (r.partial ? "*" : "") : "-");
    grid.push_back(line);
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& line : grid) {
    for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());
  }
  std::string out;
  for (const auto& line : grid) {
    std::string text;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (i) text += "  ";
      // Names left-aligned, numbers right-aligned.
      const auto pad = std::string(width[i] - line[i].size(), ' ');
      text += i == 1 ? line[i] + pad : pad + line[i];
    }
    while (!text.empty() && text.back() == ' ') text.pop_back();
    out += text + '\n';
  }
  return out;
}

Manifest load_manifest(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what(), 0);
  }
  const auto base = path.parent_path();
  const auto resolve = [&](const std::string& p) {
    const std::filesystem::path fp(p);
    return fp.is_absolute() ? fp : base / fp;
  };
  Manifest m;
  try {
    for (const auto& t : j.at("testsets")) {
      TestSetSpec s;
      s.name = t.at("name").get<std::string>();
      s.path = resolve(t.at("path").get<std::string>());
      if (t.contains("expected_total")) s.expected_total = t.at("expected_total").get<std::size_t>();
      if (t.contains("expected_machine")) s.expected_machine = t.at("expected_machine").get<std::size_t>();
      s.provenance = t.value("provenance", "");
      m.testsets.push_back(std::move(s));
    }
    for (const auto& d : j.at("models")) {
      ModelSpec s;
      s.kind = d.at("kind").get<std::string>();
      s.id = d.value("id", s.kind);
      if (s.kind == "baseline") {
        s.path = resolve(d.at("path").get<std::string>());
      } else if (s.kind == "remote") {
        s.url = d.at("url").get<std::string>();
      } else if (s.kind == "constant") {
        s.value = d.at("value").get<double>();
      } else {
        throw Error("unknown model kind '" + s.kind + "'");
      }
      m.models.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what(), 0);
  }
  return m;
}

TestSet load_testset(const TestSetSpec& spec) {
  TestSet ts;
  ts.name = spec.name;
  ts.provenance = spec.provenance;
  ts.items = load_labeled(spec.path);
  const auto machine = static_cast<std::size_t>(std::count_if(
      ts.items.begin(), ts.items.end(), [](const LabeledText& t) { return t.label == Label::machine; }));
  if (spec.expected_total && *spec.expected_total != ts.items.size()) {
    throw Error("test set " + spec.name + ": expected " + std::to_string(*spec.expected_total) + " items, found " +
                std::to_string(ts.items.size()));
  }
  if (spec.expected_machine && *spec.expected_machine != machine) {
    throw Error("test set " + spec.name + ": expected " + std::to_string(*spec.expected_machine) +
                " machine items, found " + std::to_string(machine));
  }
  return ts;
}

Scorer make_scorer(const ModelSpec& spec) {
  if (spec.kind == "baseline") {
    return {spec.id, std::make_shared<detect::BaselineModel>(detect::BaselineModel::load(spec.path))};
  }
  if (spec.kind == "remote") return {spec.id, std::make_shared<detect::RemoteScorer>(spec.url, spec.id)};
  if (spec.kind == "constant") return {spec.id, std::make_shared<detect::ConstantScorer>(spec.value, spec.id)};
  throw Error("unknown model kind '" + spec.kind + "'");
}

}  // namespace synth::evalbench
