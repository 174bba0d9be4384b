#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "picsift/catalog.hpp"
#include "picsift/inference.hpp"

namespace picsift {

/// A·B / (‖A‖‖B‖) with 64-bit accumulation, clamped to [-1, 1].
/// Errors: dimension_mismatch, zero_vector.
double cosine_similarity(std::span<const float> a, std::span<const float> b);
double cosine_similarity(const FeatureVector& a, const FeatureVector& b);

// Feature matrix for one catalog under one model. Rows are kept in ascending
// relative_path order; entries that could not be decoded or embedded are
// remembered in `skipped` so staleness checks do not flag them forever.
class FeatureIndex {
 public:
  static constexpr int kSchemaVersion = 1;

  FeatureIndex() = default;
  FeatureIndex(std::string model_id, std::string model_revision,
               std::size_t feature_dim);

  const std::string& model_id() const { return model_id_; }
  const std::string& model_revision() const { return model_revision_; }
  std::size_t feature_dim() const { return feature_dim_; }
  int schema_version() const { return kSchemaVersion; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  const std::vector<CatalogEntry>& entries() const { return entries_; }
  const std::vector<CatalogEntry>& skipped() const { return skipped_; }
  std::span<const float> row(std::size_t i) const {
    return {matrix_.data() + i * feature_dim_, feature_dim_};
  }
  std::span<const float> matrix() const { return matrix_; }

  /// Appends a row; its path must sort after every existing row.
  void append(const CatalogEntry& entry, std::span<const float> values);
  void append_skipped(const CatalogEntry& entry);

  /// Rows plus skipped entries, as the catalog looked when indexed.
  CatalogSnapshot as_snapshot(const std::filesystem::path& root) const;

  friend bool operator==(const FeatureIndex&, const FeatureIndex&) = default;

 private:
  std::string model_id_;
  std::string model_revision_;
  std::size_t feature_dim_ = 0;
  std::vector<CatalogEntry> entries_;
  std::vector<float> matrix_;
  std::vector<CatalogEntry> skipped_;
};

struct IndexBuild {
  FeatureIndex index;
  std::vector<SkippedFile> skipped;  // failures from this build/update only
};

struct BuildOptions {
  unsigned threads = 0;  // 0: hardware concurrency
  std::function<void(std::size_t done, std::size_t total)> progress;
};

/// One row per decodable entry, in snapshot order. Decode and inference
/// failures skip the row and are reported.
IndexBuild build_index(const CatalogSnapshot& snapshot,
                       const ModelHandle& extractor,
                       const BuildOptions& options = {});

/// Applies `changes` to `index`; unchanged rows are copied bit-for-bit.
/// Throws Error(revision_mismatch) if the extractor is not the one the index
/// was built with.
IndexBuild update_index(const FeatureIndex& index,
                        const std::filesystem::path& root,
                        const ChangeSet& changes, const ModelHandle& extractor,
                        const BuildOptions& options = {});

/// Writes `manifest` and `features.bin` into dir (created if needed).
void save_index(const FeatureIndex& index, const std::filesystem::path& dir);

/// Errors: io_error (missing files), checksum_mismatch, schema_unsupported,
/// index_inconsistent.
FeatureIndex load_index(const std::filesystem::path& dir);

struct RankedItem {
  std::string relative_path;
  double score = 0.0;

  friend bool operator==(const RankedItem&, const RankedItem&) = default;
};

struct QueryProvenance {
  std::string source_path;
  Box bbox;
  double detector_score = 0.0;
  std::string prompt;
  std::uint64_t seed = 0;
  std::size_t attempts = 0;

  friend bool operator==(const QueryProvenance&,
                         const QueryProvenance&) = default;
};

struct RankedResults {
  std::vector<RankedItem> items;
  std::optional<QueryProvenance> provenance;

  friend bool operator==(const RankedResults&, const RankedResults&) = default;
};

/// Linear scan: the min(k, size) rows with the highest dot product against
/// the (unit-norm) query, descending, ties by ascending path.
/// Errors: dimension_mismatch, model_mismatch, invalid_argument (k == 0).
RankedResults rank(const FeatureIndex& index, const FeatureVector& query,
                   std::size_t k);

}  // namespace picsift
