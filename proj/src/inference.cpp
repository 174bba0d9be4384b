#include "picsift/inference.hpp"

#include <algorithm>
#include <cmath>

#include "onnx_backend.hpp"
#include "picsift/error.hpp"
#include "picsift/stub_backend.hpp"
#include "text_util.hpp"

namespace fs = std::filesystem;

namespace picsift {

ResizeGeometry resize_geometry(int source_width, int source_height,
                               const PreprocessSpec& spec) {
  ResizeGeometry g;
  const double tw = spec.target_width;
  const double th = spec.target_height;
  if (spec.resize_mode == ResizeMode::stretch) {
    g.scale_x = tw / source_width;
    g.scale_y = th / source_height;
    return g;
  }
  // Scale the shorter side onto the target, then cut the centre.
  const double s = std::max(tw / source_width, th / source_height);
  const double rw = std::max(tw, std::round(source_width * s));
  const double rh = std::max(th, std::round(source_height * s));
  g.scale_x = rw / source_width;
  g.scale_y = rh / source_height;
  g.offset_x = std::floor((rw - tw) / 2.0);
  g.offset_y = std::floor((rh - th) / 2.0);
  return g;
}

namespace {

// Source sample positions and weights for one output axis under half-pixel
// bilinear interpolation with edge clamping.
struct AxisTaps {
  std::vector<int> lo;
  std::vector<int> hi;
  std::vector<double> frac;
};

AxisTaps axis_taps(int out_size, int src_size, double scale, double offset) {
  AxisTaps t;
  t.lo.resize(out_size);
  t.hi.resize(out_size);
  t.frac.resize(out_size);
  for (int i = 0; i < out_size; ++i) {
    double s = (i + offset + 0.5) / scale - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(src_size - 1));
    const int lo = static_cast<int>(std::floor(s));
    t.lo[i] = lo;
    t.hi[i] = std::min(lo + 1, src_size - 1);
    t.frac[i] = s - lo;
  }
  return t;
}

}  // namespace

Tensor preprocess(const DecodedImage& image, const PreprocessSpec& spec) {
  if (!image.valid()) throw Error(Errc::invalid_argument, "invalid image");
  spec.validate();
  const auto g = resize_geometry(image.width, image.height, spec);
  const int tw = spec.target_width;
  const int th = spec.target_height;
  const auto xs = axis_taps(tw, image.width, g.scale_x, g.offset_x);
  const auto ys = axis_taps(th, image.height, g.scale_y, g.offset_y);

  Tensor t;
  t.channels = 3;
  t.height = th;
  t.width = tw;
  t.data.resize(static_cast<std::size_t>(3) * th * tw);

  std::array<double, 3> mul{}, add{};
  for (int c = 0; c < 3; ++c) {
    mul[c] = spec.scale / spec.std[c];
    add[c] = -spec.mean[c] / spec.std[c];
  }
  const std::size_t plane = static_cast<std::size_t>(th) * tw;
  const auto px = [&](int x, int y, int ch) {
    return static_cast<double>(
        image.pixels[(static_cast<std::size_t>(y) * image.width + x) * 3 + ch]);
  };
  for (int v = 0; v < th; ++v) {
    const int y0 = ys.lo[v], y1 = ys.hi[v];
    const double fy = ys.frac[v];
    for (int u = 0; u < tw; ++u) {
      const int x0 = xs.lo[u], x1 = xs.hi[u];
      const double fx = xs.frac[u];
      for (int c = 0; c < 3; ++c) {
        const int src_c = spec.channel_order == ChannelOrder::rgb ? c : 2 - c;
        const double top = px(x0, y0, src_c) * (1 - fx) + px(x1, y0, src_c) * fx;
        const double bot = px(x0, y1, src_c) * (1 - fx) + px(x1, y1, src_c) * fx;
        const double raw = top * (1 - fy) + bot * fy;
        t.data[c * plane + static_cast<std::size_t>(v) * tw + u] =
            static_cast<float>(raw * mul[c] + add[c]);
      }
    }
  }
  return t;
}

DecodedImage crop(const DecodedImage& image, const Box& bbox, double pad_fraction) {
  if (!image.valid()) throw Error(Errc::invalid_argument, "invalid image");
  if (!std::isfinite(bbox.x_min) || !std::isfinite(bbox.y_min) ||
      !std::isfinite(bbox.x_max) || !std::isfinite(bbox.y_max) ||
      !std::isfinite(pad_fraction) || pad_fraction < 0) {
    throw Error(Errc::degenerate_box, "non-finite box or negative padding");
  }
  const double pad = pad_fraction * std::max(bbox.width(), bbox.height());
  const int x0 = static_cast<int>(std::clamp(std::floor(bbox.x_min - pad), 0.0, double(image.width)));
  const int y0 = static_cast<int>(std::clamp(std::floor(bbox.y_min - pad), 0.0, double(image.height)));
  const int x1 = static_cast<int>(std::clamp(std::ceil(bbox.x_max + pad), 0.0, double(image.width)));
  const int y1 = static_cast<int>(std::clamp(std::ceil(bbox.y_max + pad), 0.0, double(image.height)));
  if (x1 <= x0 || y1 <= y0) {
    throw Error(Errc::degenerate_box, "box has no area inside the image");
  }
  DecodedImage out(x1 - x0, y1 - y0);
  const std::size_t row_bytes = static_cast<std::size_t>(out.width) * 3;
  for (int y = 0; y < out.height; ++y) {
    const auto* src = &image.pixels[((static_cast<std::size_t>(y0 + y)) * image.width + x0) * 3];
    std::copy_n(src, row_bytes, &out.pixels[static_cast<std::size_t>(y) * row_bytes]);
  }
  return out;
}

void l2_normalize(std::vector<float>& values) {
  double sum = 0.0;
  for (float v : values) {
    if (!std::isfinite(v)) {
      throw Error(Errc::inference_failure, "model produced a non-finite feature");
    }
    sum += static_cast<double>(v) * v;
  }
  if (values.empty()) throw Error(Errc::inference_failure, "model produced no features");
  if (sum == 0.0) {
    const float u = static_cast<float>(1.0 / std::sqrt(static_cast<double>(values.size())));
    std::fill(values.begin(), values.end(), u);
    return;
  }
  const double inv = 1.0 / std::sqrt(sum);
  for (auto& v : values) v = static_cast<float>(v * inv);
}

ModelHandle ModelHandle::from_engine(ModelDescriptor descriptor,
                                     std::shared_ptr<ExtractorEngine> engine) {
  if (descriptor.role != ModelRole::extractor) {
    throw Error(Errc::role_mismatch, descriptor.model_id + " is not an extractor");
  }
  ModelHandle h;
  h.state_ = std::make_shared<State>();
  h.state_->serialize = !engine->thread_safe();
  h.state_->descriptor = std::move(descriptor);
  h.state_->extractor = std::move(engine);
  return h;
}

ModelHandle ModelHandle::from_engine(ModelDescriptor descriptor,
                                     std::shared_ptr<DetectorEngine> engine) {
  if (descriptor.role != ModelRole::detector) {
    throw Error(Errc::role_mismatch, descriptor.model_id + " is not a detector");
  }
  ModelHandle h;
  h.state_ = std::make_shared<State>();
  h.state_->serialize = !engine->thread_safe();
  h.state_->descriptor = std::move(descriptor);
  h.state_->detector = std::move(engine);
  return h;
}

int ModelHandle::output_dim() const {
  return state_->extractor ? state_->extractor->output_dim() : 0;
}

FeatureVector ModelHandle::extract_features(const DecodedImage& image) const {
  if (!state_ || !state_->extractor) {
    throw Error(Errc::role_mismatch, "extract_features needs an extractor model");
  }
  const auto tensor = preprocess(image, state_->descriptor.preprocess);
  FeatureVector fv;
  fv.model_id = state_->descriptor.model_id;
  try {
    std::unique_lock lock(state_->mutex, std::defer_lock);
    if (state_->serialize) lock.lock();
    fv.values = state_->extractor->forward(tensor);
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(Errc::inference_failure,
                state_->descriptor.model_id + ": " + e.what());
  }
  const auto dim = state_->descriptor.feature_dim.value_or(output_dim());
  if (static_cast<int>(fv.values.size()) != dim) {
    throw Error(Errc::inference_failure,
                state_->descriptor.model_id + ": expected " + std::to_string(dim) +
                    " features, got " + std::to_string(fv.values.size()));
  }
  l2_normalize(fv.values);
  return fv;
}

std::vector<Detection> ModelHandle::detect(const DecodedImage& image,
                                           std::string_view prompt) const {
  if (!state_ || !state_->detector) {
    throw Error(Errc::role_mismatch, "detect needs a detector model");
  }
  const auto trimmed = detail::trim(prompt);
  if (trimmed.empty()) throw Error(Errc::empty_prompt, "prompt is empty");

  const auto& spec = state_->descriptor.preprocess;
  const auto tensor = preprocess(image, spec);
  const auto geometry = resize_geometry(image.width, image.height, spec);
  std::vector<Detection> raw;
  try {
    std::unique_lock lock(state_->mutex, std::defer_lock);
    if (state_->serialize) lock.lock();
    raw = state_->detector->forward(image, tensor, geometry, trimmed);
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(Errc::inference_failure,
                state_->descriptor.model_id + ": " + e.what());
  }

  std::vector<Detection> out;
  out.reserve(raw.size());
  const double w = image.width, h = image.height;
  for (auto d : raw) {
    auto& b = d.bbox;
    if (!std::isfinite(b.x_min) || !std::isfinite(b.y_min) ||
        !std::isfinite(b.x_max) || !std::isfinite(b.y_max) || !std::isfinite(d.score)) {
      continue;
    }
    b.x_min = std::clamp(b.x_min, 0.0, w);
    b.x_max = std::clamp(b.x_max, 0.0, w);
    b.y_min = std::clamp(b.y_min, 0.0, h);
    b.y_max = std::clamp(b.y_max, 0.0, h);
    if (!(b.x_min < b.x_max) || !(b.y_min < b.y_max)) continue;
    d.score = std::clamp(d.score, 0.0, 1.0);
    out.push_back(d);
  }
  return out;
}

ModelHandle load_model(const ModelDescriptor& descriptor) {
  descriptor.validate();
  ModelDescriptor d = descriptor;
  const auto require_file = [&] {
    std::error_code ec;
    if (d.file_path.empty() || !fs::is_regular_file(d.file_path, ec)) {
      throw Error(Errc::model_file_missing,
                  d.model_id + ": model file missing: " + d.file_path.string());
    }
  };

  if (d.backend == "onnx") {
    require_file();
    d.revision = compute_revision(d);
    if (d.role == ModelRole::extractor) {
      return ModelHandle::from_engine(d, open_onnx_extractor(d));
    }
    return ModelHandle::from_engine(d, open_onnx_detector(d));
  }
  if (d.backend == "quadrant-mean") {
    if (d.role != ModelRole::extractor || d.feature_dim != 12) {
      throw Error(Errc::graph_signature_mismatch,
                  d.model_id + ": quadrant-mean is a 12-dimensional extractor");
    }
    d.revision = compute_revision(d);
    return ModelHandle::from_engine(d, std::make_shared<QuadrantMeanExtractor>());
  }
  if (d.backend == "scripted") {
    if (d.role != ModelRole::detector) {
      throw Error(Errc::graph_signature_mismatch,
                  d.model_id + ": scripted backend only provides detection");
    }
    require_file();
    d.revision = compute_revision(d);
    const auto root_opt = d.options.find("fixture_root");
    const fs::path root = root_opt != d.options.end() ? fs::path(root_opt->second)
                                                      : d.file_path.parent_path();
    return ModelHandle::from_engine(d, ScriptedDetector::from_fixture(d.file_path, root));
  }
  throw Error(Errc::invalid_manifest, d.model_id + ": unknown backend '" + d.backend + "'");
}

}  // namespace picsift
