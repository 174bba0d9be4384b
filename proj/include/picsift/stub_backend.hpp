#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "picsift/inference.hpp"

namespace picsift {

// Deterministic 12-dimensional extractor: the mean of each channel over the
// four quadrants of the preprocessed tensor, ordered top-left, top-right,
// bottom-left, bottom-right, channel-minor. Odd sizes put the extra
// row/column in the bottom/right quadrants.
class QuadrantMeanExtractor final : public ExtractorEngine {
 public:
  int output_dim() const override { return 12; }
  std::vector<float> forward(const Tensor& input) override;
  bool thread_safe() const override { return true; }
};

// Returns detections from a fixed table keyed by (pixel fingerprint, prompt).
// Prompts match case-insensitively after trimming. Unknown images or prompts
// yield no detections.
class ScriptedDetector final : public DetectorEngine {
 public:
  ScriptedDetector() = default;

  void add(const DecodedImage& image, const std::string& prompt,
           Detection detection);

  /// Fixture lines: relative_path <TAB> prompt <TAB> x0,y0,x1,y1,score
  /// (or "full,score" for the whole image). '#' starts a comment. Images are
  /// decoded from `image_root` to compute their fingerprints.
  static std::shared_ptr<ScriptedDetector> from_fixture(
      const std::filesystem::path& fixture,
      const std::filesystem::path& image_root);

  std::vector<Detection> forward(const DecodedImage& image, const Tensor& input,
                                 const ResizeGeometry& geometry,
                                 std::string_view prompt) override;
  bool thread_safe() const override { return true; }

  std::size_t calls() const { return calls_.load(); }

 private:
  std::map<std::string, std::map<std::string, std::vector<Detection>>> table_;
  std::atomic<std::size_t> calls_{0};
};

std::string normalize_prompt(std::string_view prompt);

}  // namespace picsift
