#pragma once

#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "picsift/image.hpp"
#include "picsift/model.hpp"

namespace picsift {

// Float tensor in (channel, height, width) order.
struct Tensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  float at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
};

// Maps source-image pixel coordinates into the preprocessed tensor:
// u = x * scale_x - offset_x, v = y * scale_y - offset_y.
struct ResizeGeometry {
  double scale_x = 1.0;
  double scale_y = 1.0;
  double offset_x = 0.0;
  double offset_y = 0.0;

  double to_source_x(double u) const { return (u + offset_x) / scale_x; }
  double to_source_y(double v) const { return (v + offset_y) / scale_y; }
};

ResizeGeometry resize_geometry(int source_width, int source_height,
                               const PreprocessSpec& spec);

/// Resizes (bilinear, half-pixel centers) and normalizes:
/// value = (raw * scale - mean[c]) / std[c].
Tensor preprocess(const DecodedImage& image, const PreprocessSpec& spec);

/// Crops `bbox` expanded by pad_fraction * max(box width, box height) on each
/// side, clamped to the image. Fractional edges round outward.
/// Throws Error(degenerate_box) if nothing remains after clamping.
DecodedImage crop(const DecodedImage& image, const Box& bbox,
                  double pad_fraction = 0.0);

struct Detection {
  Box bbox;
  double score = 0.0;
  int label_index = 0;
};

struct FeatureVector {
  std::string model_id;
  std::vector<float> values;
};

/// Scales `values` to unit L2 norm (64-bit accumulation). An all-zero input
/// maps to the uniform unit vector. Throws Error(inference_failure) on
/// non-finite input.
void l2_normalize(std::vector<float>& values);

// Raw model engines. Implementations need not be thread-safe unless
// thread_safe() says so; ModelHandle serializes calls otherwise.
class ExtractorEngine {
 public:
  virtual ~ExtractorEngine() = default;
  virtual int output_dim() const = 0;
  virtual std::vector<float> forward(const Tensor& input) = 0;
  virtual bool thread_safe() const { return false; }
};

class DetectorEngine {
 public:
  virtual ~DetectorEngine() = default;
  /// Boxes are returned in source-image pixels; `geometry` relates `input`
  /// to `image`.
  virtual std::vector<Detection> forward(const DecodedImage& image,
                                         const Tensor& input,
                                         const ResizeGeometry& geometry,
                                         std::string_view prompt) = 0;
  virtual bool thread_safe() const { return false; }
};

// A loaded model in one of the two roles. Cheap to copy; copies share the
// engine. Safe to call from any thread (calls may be serialized).
class ModelHandle {
 public:
  ModelHandle() = default;

  static ModelHandle from_engine(ModelDescriptor descriptor,
                                 std::shared_ptr<ExtractorEngine> engine);
  static ModelHandle from_engine(ModelDescriptor descriptor,
                                 std::shared_ptr<DetectorEngine> engine);

  const ModelDescriptor& descriptor() const { return state_->descriptor; }
  const std::string& model_id() const { return state_->descriptor.model_id; }
  const std::string& revision() const { return state_->descriptor.revision; }
  ModelRole role() const { return state_->descriptor.role; }
  int output_dim() const;
  explicit operator bool() const { return state_ != nullptr; }
  bool same_engine(const ModelHandle& other) const { return state_ == other.state_; }

  /// preprocess -> engine -> L2 normalization. Requires role extractor.
  FeatureVector extract_features(const DecodedImage& image) const;

  /// All candidate detections for one prompt, unthresholded, boxes clamped
  /// to the image and scores to [0, 1]. Requires role detector.
  std::vector<Detection> detect(const DecodedImage& image,
                                std::string_view prompt) const;

 private:
  struct State {
    ModelDescriptor descriptor;
    std::shared_ptr<ExtractorEngine> extractor;
    std::shared_ptr<DetectorEngine> detector;
    std::mutex mutex;
    bool serialize = true;
  };
  std::shared_ptr<State> state_;
};

/// Opens the model described by `descriptor`, computes its revision and
/// checks the graph signature against the declared role.
/// Errors: model_file_missing, graph_signature_mismatch, invalid_manifest.
ModelHandle load_model(const ModelDescriptor& descriptor);

}  // namespace picsift
