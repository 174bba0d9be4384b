#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "picsift/catalog.hpp"
#include "picsift/feature_index.hpp"
#include "picsift/inference.hpp"

namespace picsift {

struct QuerySpec {
  std::string prompt;
  double threshold = 0.1;
  std::size_t k = 10;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> max_attempts;  // default: catalog size
  double pad_fraction = 0.0;

  /// Errors: empty_prompt, invalid_argument.
  void validate() const;
};

struct QueryCrop {
  std::string source_path;
  Box bbox;
  double detector_score = 0.0;
  DecodedImage crop;
  std::uint64_t seed = 0;
  std::size_t attempts = 0;  // images drawn, including the chosen one
};

/// The highest-scoring detection strictly above `threshold`; the first one
/// wins on equal scores.
std::optional<Detection> best_detection(std::span<const Detection> detections,
                                        double threshold);

// Uniform draws without replacement from [0, n), reproducible across
// standard libraries (no std::uniform_int_distribution).
class DrawWithoutReplacement {
 public:
  DrawWithoutReplacement(std::size_t n, std::uint64_t seed);
  bool exhausted() const { return next_ == order_.size(); }
  std::size_t next();

 private:
  std::uint64_t below(std::uint64_t bound);

  std::mt19937_64 engine_;
  std::vector<std::size_t> order_;
  std::size_t next_ = 0;
};

std::uint64_t entropy_seed();

/// Draws catalog images without replacement until the detector reports a
/// detection above the threshold, then crops it. At most
/// min(catalog size, max_attempts) images are tried.
/// Errors: empty_catalog, prompt_not_found.
QueryCrop select_query_image(const CatalogSnapshot& snapshot,
                             const ModelHandle& detector,
                             const QuerySpec& spec, std::uint64_t seed);

/// Same selection over an explicit visiting order of snapshot entries.
QueryCrop select_query_image_in_order(const CatalogSnapshot& snapshot,
                                      std::span<const std::size_t> order,
                                      const ModelHandle& detector,
                                      const QuerySpec& spec);

struct StageTimings {
  double detect_ms = 0.0;
  double extract_ms = 0.0;
  double rank_ms = 0.0;
};

struct SearchOutcome {
  RankedResults results;
  StageTimings timings;
};

/// Full text-to-image search over `root`: select a query crop, embed it, rank
/// the index. The index must match the directory's current contents and the
/// extractor's identity.
/// Errors: prompt_not_found, stale_index, model_mismatch, revision_mismatch.
SearchOutcome search(const std::filesystem::path& root, const QuerySpec& spec,
                     const ModelHandle& extractor, const ModelHandle& detector,
                     const FeatureIndex& index);

/// search() against an already scanned snapshot of `root`.
SearchOutcome search(const CatalogSnapshot& snapshot, const QuerySpec& spec,
                     const ModelHandle& extractor, const ModelHandle& detector,
                     const FeatureIndex& index);

}  // namespace picsift
