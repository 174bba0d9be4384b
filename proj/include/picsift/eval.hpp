#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "picsift/feature_index.hpp"
#include "picsift/inference.hpp"

namespace picsift {

struct LabeledImage {
  std::string relative_path;
  std::set<std::string> labels;
};

struct DatasetManifest {
  std::filesystem::path root;
  std::vector<LabeledImage> entries;
  std::map<std::string, std::set<std::string>> prompt_map;

  /// Paths whose labels intersect the prompt's relevant categories.
  std::set<std::string> relevant_paths(const std::string& prompt) const;
};

/// Reads `labels` (path<TAB>label,label) and `prompts`
/// (prompt<TAB>category,category). Image paths are relative to `root`.
/// Throws Error(invalid_manifest) on violated invariants.
DatasetManifest load_dataset_manifest(const std::filesystem::path& labels,
                                      const std::filesystem::path& prompts,
                                      const std::filesystem::path& root);

/// Fraction of returned paths that are relevant. Error(empty_results).
double accuracy(const RankedResults& results,
                const std::set<std::string>& relevant);

struct TimingStats {
  double mean_ms = 0.0;
  double p50_ms = 0.0;
  double p95_ms = 0.0;
  std::size_t samples = 0;
};

/// Per-call wall-clock of extract_features, after `warmup` discarded passes
/// over the images. Runs on the calling thread only.
TimingStats benchmark_inference(const ModelHandle& extractor,
                                std::span<const DecodedImage> images,
                                int warmup, int repeats);

struct EvalCell {
  std::string prompt;
  std::string model_id;
  double threshold = 0.0;
  std::uint64_t seed = 0;
  std::optional<double> accuracy;  // absent: prompt not found
};

struct ModelSummary {
  std::string model_id;
  std::optional<double> mean_accuracy;
  std::optional<TimingStats> timing;
  std::optional<std::uint64_t> size_bytes;
  std::size_t missing_cells = 0;
  std::string failure;  // non-empty when the model could not be evaluated
};

struct EvalReport {
  std::vector<std::string> prompts;
  std::vector<double> thresholds;
  std::vector<std::uint64_t> seeds;
  std::size_t k = 10;
  std::vector<EvalCell> cells;
  std::vector<ModelSummary> models;

  std::size_t prompt_not_found() const;
  /// Mean over the thresholds x seeds cells of one (prompt, model) pair.
  std::optional<double> mean_accuracy(const std::string& prompt,
                                      const std::string& model_id) const;
};

struct EvalModel {
  ModelHandle extractor;
  FeatureIndex index;
};

/// Runs search + accuracy for every (prompt, model, threshold, seed) and
/// aggregates per model. PromptNotFound cells are kept as missing.
EvalReport run_prompt_eval(const DatasetManifest& manifest,
                           std::span<const EvalModel> models,
                           const ModelHandle& detector,
                           const std::vector<std::string>& prompts,
                           const std::vector<double>& thresholds,
                           const std::vector<std::uint64_t>& seeds,
                           std::size_t k);

struct RenderedReport {
  std::string text;
  nlohmann::ordered_json json;
};

RenderedReport render_report(const EvalReport& report);

/// Writes report.txt and report.json into dir.
void write_report(const RenderedReport& rendered,
                  const std::filesystem::path& dir);

}  // namespace picsift
