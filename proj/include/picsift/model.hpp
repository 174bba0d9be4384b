#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace picsift {

enum class ModelRole { extractor, detector };
enum class ChannelOrder { rgb, bgr };
enum class ResizeMode { stretch, center_crop };

struct PreprocessSpec {
  int target_width = 224;
  int target_height = 224;
  ChannelOrder channel_order = ChannelOrder::rgb;
  double scale = 1.0 / 255.0;
  std::array<double, 3> mean{0.0, 0.0, 0.0};
  std::array<double, 3> std{1.0, 1.0, 1.0};
  ResizeMode resize_mode = ResizeMode::stretch;

  /// Throws Error(invalid_manifest) when dimensions or std are invalid.
  void validate() const;
};

// Identity and location of one model plus everything needed to feed it.
// `backend` selects the engine: "onnx", "quadrant-mean" or "scripted".
// `options` carries backend-specific keys (query table, fixture root, ...),
// with relative paths already resolved against the manifest directory.
struct ModelDescriptor {
  std::string model_id;
  ModelRole role = ModelRole::extractor;
  std::string backend = "onnx";
  std::filesystem::path file_path;
  PreprocessSpec preprocess;
  std::optional<int> feature_dim;
  std::string revision;  // filled by load_model (hash of the model file)
  std::filesystem::path manifest_path;
  std::map<std::string, std::string> options;

  void validate() const;
};

std::string to_string(ModelRole role);
std::string to_string(ChannelOrder order);
std::string to_string(ResizeMode mode);

/// Parses a key = value model manifest. Keys: model_id, role, backend, file,
/// feature_dim, preprocess.{width,height,scale,mean,std,order,resize}; any
/// other key lands in `options`.
ModelDescriptor read_model_manifest(const std::filesystem::path& manifest);

/// Every `*.model` manifest in `dir`, sorted by model_id. Duplicate ids are
/// an Error(invalid_manifest).
std::vector<ModelDescriptor> scan_model_registry(
    const std::filesystem::path& dir);

/// Content hash identifying the model's weights (and fixtures, for stubs).
std::string compute_revision(const ModelDescriptor& descriptor);

/// Byte size of the model file; Error(model_file_missing) if absent.
std::uint64_t model_size(const ModelDescriptor& descriptor);

}  // namespace picsift
