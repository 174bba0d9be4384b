#pragma once

#include <atomic>
#include <fstream>
#include <chrono>
#include <filesystem>
#include <memory>
#include <random>
#include <string>

#include "picsift/image.hpp"
#include "picsift/inference.hpp"
#include "picsift/stub_backend.hpp"

namespace picsift::testing {

inline std::filesystem::path source_dir() { return PICSIFT_SOURCE_DIR; }
inline std::filesystem::path test_models_dir() { return source_dir() / "tests" / "data" / "models"; }
inline std::filesystem::path desk_dir() { return source_dir() / "data" / "desk"; }

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = std::filesystem::temp_directory_path() /
            ("picsift-test-" + std::to_string(stamp) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

inline void write_image(const std::filesystem::path& path, const DecodedImage& image) {
  std::filesystem::create_directories(path.parent_path());
  write_png(image, path);
}

inline void write_solid(const std::filesystem::path& root, const std::string& rel, Rgb color,
                        int w = 8, int h = 8) {
  write_image(root / rel, DecodedImage::filled(w, h, color));
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream(path, std::ios::binary) << text;
}

inline ModelHandle stub_extractor(const std::string& id = "stub-quadrant",
                                  const std::string& revision = "rev-1") {
  ModelDescriptor d;
  d.model_id = id;
  d.role = ModelRole::extractor;
  d.backend = "quadrant-mean";
  d.feature_dim = 12;
  d.revision = revision;
  d.preprocess.target_width = 16;
  d.preprocess.target_height = 16;
  return ModelHandle::from_engine(d, std::make_shared<QuadrantMeanExtractor>());
}

inline ModelHandle stub_detector(std::shared_ptr<ScriptedDetector> engine,
                                 const std::string& id = "stub-detector") {
  ModelDescriptor d;
  d.model_id = id;
  d.role = ModelRole::detector;
  d.backend = "scripted";
  d.revision = "scripted";
  d.preprocess.target_width = 8;
  d.preprocess.target_height = 8;
  return ModelHandle::from_engine(d, std::move(engine));
}

// Image whose left half and right half have different colors.
inline DecodedImage two_tone(int w, int h, Rgb left, Rgb right) {
  DecodedImage img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) img.set(x, y, x < w / 2 ? left : right);
  return img;
}

inline DecodedImage random_image(std::mt19937& rng, int w, int h) {
  DecodedImage img(w, h);
  std::uniform_int_distribution<int> d(0, 255);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(d(rng));
  return img;
}

}  // namespace picsift::testing
