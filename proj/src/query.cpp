#include "picsift/query.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

#include "picsift/error.hpp"
#include "text_util.hpp"

namespace fs = std::filesystem;

namespace picsift {

void QuerySpec::validate() const {
  if (detail::trim(prompt).empty()) throw Error(Errc::empty_prompt, "prompt is empty");
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw Error(Errc::invalid_argument, "threshold must lie in [0, 1]");
  }
  if (k == 0) throw Error(Errc::invalid_argument, "k must be positive");
  if (max_attempts && *max_attempts == 0) {
    throw Error(Errc::invalid_argument, "max_attempts must be positive");
  }
  if (!(pad_fraction >= 0.0) || !std::isfinite(pad_fraction)) {
    throw Error(Errc::invalid_argument, "pad_fraction must be non-negative");
  }
}

std::optional<Detection> best_detection(std::span<const Detection> detections,
                                        double threshold) {
  std::optional<Detection> best;
  for (const auto& d : detections) {
    if (d.score > threshold && (!best || d.score > best->score)) best = d;
  }
  return best;
}

DrawWithoutReplacement::DrawWithoutReplacement(std::size_t n, std::uint64_t seed)
    : engine_(seed), order_(n) {
  std::iota(order_.begin(), order_.end(), std::size_t{0});
}

std::uint64_t DrawWithoutReplacement::below(std::uint64_t bound) {
  // Rejection sampling keeps the draw unbiased.
  const std::uint64_t limit = (0 - bound) % bound;
  for (;;) {
    const std::uint64_t r = engine_();
    if (r >= limit) return r % bound;
  }
}

std::size_t DrawWithoutReplacement::next() {
  if (exhausted()) throw Error(Errc::invalid_argument, "no draws left");
  const auto j = next_ + static_cast<std::size_t>(below(order_.size() - next_));
  std::swap(order_[next_], order_[j]);
  return order_[next_++];
}

std::uint64_t entropy_seed() {
  std::random_device rd;
  return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

namespace {

template <class NextIndex>
QueryCrop select_with(const CatalogSnapshot& snapshot, const ModelHandle& detector,
                      const QuerySpec& spec, std::size_t available, NextIndex next_index) {
  spec.validate();
  if (snapshot.entries.empty()) throw Error(Errc::empty_catalog, "catalog has no images");
  if (!detector || detector.role() != ModelRole::detector) {
    throw Error(Errc::role_mismatch, "query selection needs a detector model");
  }
  const std::size_t budget = std::min(available, spec.max_attempts.value_or(available));
  for (std::size_t attempt = 1; attempt <= budget; ++attempt) {
    const auto& entry = snapshot.entries.at(next_index());
    DecodedImage image;
    try {
      image = load_image(snapshot.root, entry);
    } catch (const Error&) {
      continue;  // unreadable images simply never match
    }
    const auto detections = detector.detect(image, spec.prompt);
    if (const auto best = best_detection(detections, spec.threshold)) {
      QueryCrop out;
      out.source_path = entry.relative_path;
      out.bbox = best->bbox;
      out.detector_score = best->score;
      out.crop = crop(image, best->bbox, spec.pad_fraction);
      out.attempts = attempt;
      return out;
    }
  }
  throw Error(Errc::prompt_not_found, "no image matched \"" + spec.prompt + "\" above threshold " +
                                          std::to_string(spec.threshold) + " after " +
                                          std::to_string(budget) + " attempts");
}

double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since)
      .count();
}

}  // namespace

QueryCrop select_query_image(const CatalogSnapshot& snapshot, const ModelHandle& detector,
                             const QuerySpec& spec, std::uint64_t seed) {
  DrawWithoutReplacement draw(snapshot.entries.size(), seed);
  auto out = select_with(snapshot, detector, spec, snapshot.entries.size(),
                         [&] { return draw.next(); });
  out.seed = seed;
  return out;
}

QueryCrop select_query_image_in_order(const CatalogSnapshot& snapshot,
                                      std::span<const std::size_t> order,
                                      const ModelHandle& detector, const QuerySpec& spec) {
  std::size_t pos = 0;
  return select_with(snapshot, detector, spec, order.size(), [&] { return order[pos++]; });
}

SearchOutcome search(const fs::path& root, const QuerySpec& spec, const ModelHandle& extractor,
                     const ModelHandle& detector, const FeatureIndex& index) {
  return search(scan_directory(root), spec, extractor, detector, index);
}

SearchOutcome search(const CatalogSnapshot& snapshot, const QuerySpec& spec,
                     const ModelHandle& extractor, const ModelHandle& detector,
                     const FeatureIndex& index) {
  spec.validate();
  if (!extractor || extractor.role() != ModelRole::extractor) {
    throw Error(Errc::role_mismatch, "search needs an extractor model");
  }
  if (extractor.model_id() != index.model_id()) {
    throw Error(Errc::model_mismatch, "index was built by " + index.model_id() +
                                          ", extractor is " + extractor.model_id());
  }
  if (extractor.revision() != index.model_revision()) {
    throw Error(Errc::revision_mismatch,
                "model file for " + index.model_id() + " changed since the index was built");
  }
  const auto changes = diff_catalog(index.as_snapshot(snapshot.root), snapshot);
  if (!changes.empty()) {
    throw Error(Errc::stale_index, std::to_string(changes.size()) +
                                       " catalog change(s) since the index was built");
  }

  SearchOutcome out;
  const auto seed = spec.seed.value_or(entropy_seed());
  auto t0 = std::chrono::steady_clock::now();
  const auto query = select_query_image(snapshot, detector, spec, seed);
  out.timings.detect_ms = elapsed_ms(t0);

  t0 = std::chrono::steady_clock::now();
  const auto features = extractor.extract_features(query.crop);
  out.timings.extract_ms = elapsed_ms(t0);

  t0 = std::chrono::steady_clock::now();
  out.results = rank(index, features, spec.k);
  out.timings.rank_ms = elapsed_ms(t0);

  out.results.provenance = QueryProvenance{query.source_path, query.bbox, query.detector_score,
                                           spec.prompt, seed, query.attempts};
  return out;
}

}  // namespace picsift
