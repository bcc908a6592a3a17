#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "synth/corpus.hpp"
#include "synth/detect.hpp"

namespace synth::evalbench {

// Positive class is machine.
struct Confusion {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  bool operator==(const Confusion&) const = default;
};

Confusion confusion(const std::vector<Label>& labels, const std::vector<Label>& predictions);

// Undefined ratios are reported as 0 with their flag set.
struct Prf {
  double precision = 0, recall = 0, f1 = 0;
  bool precision_undefined = false, recall_undefined = false, f1_undefined = false;
};

Prf prf(const Confusion& c);

struct TestSet {
  std::string name;
  std::vector<LabeledText> items;
  std::string provenance;  // where the split came from, e.g. "validation split"
};

struct Scorer {
  std::string id;
  std::shared_ptr<const detect::Detector> detector;
};

struct BenchCell {
  std::string model_id;
  std::string testset_id;
  bool absent = false;  // the scorer failed on this set
  std::string note;
  Confusion counts;
  Prf metrics;
};

struct BenchRow {
  std::string model_id;
  std::size_t rank = 0;  // 1-based
  std::optional<double> avg_f1;
  std::size_t sets_scored = 0;
  bool partial = false;  // some cells absent and left out of the average
};

struct BenchTable {
  std::vector<std::string> testsets;
  std::vector<BenchCell> cells;  // model-major, in input order
  std::vector<BenchRow> rows;    // by rank
};

// Scores every (scorer, test set) cell, `jobs` cells at a time. Models are
// ranked by average F1 over their present cells, descending; ties and models
// without any present cell go by id. Throws when a test set lacks a class.
BenchTable run_suite(const std::vector<Scorer>& scorers, const std::vector<TestSet>& testsets,
                     double tau = detect::kDefaultTau, int jobs = 1);

// One row per cell, then one "AVERAGE" row per model with its rank.
std::string to_csv(const BenchTable& table);
// F1 matrix with average and rank columns, padded for reading.
std::string to_text(const BenchTable& table);

struct TestSetSpec {
  std::string name;
  std::filesystem::path path;  // labeled JSONL
  std::optional<std::size_t> expected_total;
  std::optional<std::size_t> expected_machine;
  std::string provenance;
};

struct ModelSpec {
  std::string id;
  std::string kind;  // baseline, remote, constant
  std::filesystem::path path;
  std::string url;
  double value = 0.5;
};

struct Manifest {
  std::vector<TestSetSpec> testsets;
  std::vector<ModelSpec> models;
};

// {"testsets": [{"name", "path", "expected_total"?, "expected_machine"?,
// "provenance"?}], "models": [{"id", "kind", "path"|"url"|"value"}]}.
// Relative paths resolve against the manifest's directory.
Manifest load_manifest(const std::filesystem::path& path);

// Loads the items and checks them against the expected counts.
TestSet load_testset(const TestSetSpec& spec);
Scorer make_scorer(const ModelSpec& spec);

}  // namespace synth::evalbench
