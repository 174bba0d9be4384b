#include "picsift/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "picsift/error.hpp"
#include "picsift/hash.hpp"
#include "text_util.hpp"

namespace fs = std::filesystem;

namespace picsift {

std::string to_string(ModelRole role) {
  return role == ModelRole::extractor ? "extractor" : "detector";
}
std::string to_string(ChannelOrder order) {
  return order == ChannelOrder::rgb ? "RGB" : "BGR";
}
std::string to_string(ResizeMode mode) {
  return mode == ResizeMode::stretch ? "stretch" : "center-crop";
}

void PreprocessSpec::validate() const {
  if (target_width < 1 || target_height < 1) {
    throw Error(Errc::invalid_manifest, "preprocess target size must be >= 1");
  }
  for (double s : std) {
    if (s == 0.0 || !std::isfinite(s)) {
      throw Error(Errc::invalid_manifest, "preprocess std must be finite and nonzero");
    }
  }
  if (!std::isfinite(scale)) {
    throw Error(Errc::invalid_manifest, "preprocess scale must be finite");
  }
}

void ModelDescriptor::validate() const {
  if (model_id.empty()) throw Error(Errc::invalid_manifest, "model_id is required");
  if (role == ModelRole::extractor && (!feature_dim || *feature_dim < 1)) {
    throw Error(Errc::invalid_manifest,
                model_id + ": extractor requires a positive feature_dim");
  }
  if (role == ModelRole::detector && feature_dim) {
    throw Error(Errc::invalid_manifest,
                model_id + ": feature_dim is only valid for extractors");
  }
  preprocess.validate();
}

namespace {

std::array<double, 3> parse_triple(const std::string& value, const std::string& what) {
  const auto parts = detail::split(value, ',');
  if (parts.size() != 3) {
    throw Error(Errc::invalid_manifest, what + " needs three comma-separated values");
  }
  std::array<double, 3> out{};
  for (std::size_t i = 0; i < 3; ++i) {
    const auto v = detail::parse_double(parts[i]);
    if (!v) throw Error(Errc::invalid_manifest, what + ": not a number: " + parts[i]);
    out[i] = *v;
  }
  return out;
}

double require_double(const std::string& value, const std::string& what) {
  const auto v = detail::parse_double(value);
  if (!v) throw Error(Errc::invalid_manifest, what + ": not a number: " + value);
  return *v;
}

int require_int(const std::string& value, const std::string& what) {
  const auto v = detail::parse_int(value);
  if (!v || *v < 0 || *v > 1'000'000) {
    throw Error(Errc::invalid_manifest, what + ": not a valid integer: " + value);
  }
  return static_cast<int>(*v);
}

// Options whose values are file paths relative to the manifest.
const std::set<std::string>& path_options() {
  static const std::set<std::string> keys{"queries", "fixture_root"};
  return keys;
}

}  // namespace

ModelDescriptor read_model_manifest(const fs::path& manifest) {
  const auto text = detail::read_text_file(manifest);
  const auto base = manifest.parent_path();
  ModelDescriptor d;
  d.manifest_path = manifest;
  bool have_role = false;
  for (const auto& [key, value, line] : detail::parse_key_values(text, manifest.string())) {
    if (key == "model_id") {
      d.model_id = value;
    } else if (key == "role") {
      const auto v = detail::to_lower(value);
      if (v == "extractor") d.role = ModelRole::extractor;
      else if (v == "detector") d.role = ModelRole::detector;
      else throw Error(Errc::invalid_manifest, "unknown role '" + value + "'");
      have_role = true;
    } else if (key == "backend") {
      d.backend = detail::to_lower(value);
    } else if (key == "file") {
      d.file_path = fs::path(value).is_absolute() ? fs::path(value) : base / value;
    } else if (key == "feature_dim") {
      d.feature_dim = require_int(value, key);
    } else if (key == "preprocess.width") {
      d.preprocess.target_width = require_int(value, key);
    } else if (key == "preprocess.height") {
      d.preprocess.target_height = require_int(value, key);
    } else if (key == "preprocess.scale") {
      d.preprocess.scale = require_double(value, key);
    } else if (key == "preprocess.mean") {
      d.preprocess.mean = parse_triple(value, key);
    } else if (key == "preprocess.std") {
      d.preprocess.std = parse_triple(value, key);
    } else if (key == "preprocess.order") {
      const auto v = detail::to_lower(value);
      if (v == "rgb") d.preprocess.channel_order = ChannelOrder::rgb;
      else if (v == "bgr") d.preprocess.channel_order = ChannelOrder::bgr;
      else throw Error(Errc::invalid_manifest, "unknown channel order '" + value + "'");
    } else if (key == "preprocess.resize") {
      const auto v = detail::to_lower(value);
      if (v == "stretch") d.preprocess.resize_mode = ResizeMode::stretch;
      else if (v == "center-crop" || v == "shorter-side-then-center-crop")
        d.preprocess.resize_mode = ResizeMode::center_crop;
      else throw Error(Errc::invalid_manifest, "unknown resize mode '" + value + "'");
    } else if (path_options().contains(key)) {
      d.options[key] = (fs::path(value).is_absolute() ? fs::path(value) : base / value).string();
    } else {
      d.options[key] = value;
    }
  }
  if (!have_role) throw Error(Errc::invalid_manifest, manifest.string() + ": role is required");
  d.validate();
  return d;
}

std::vector<ModelDescriptor> scan_model_registry(const fs::path& dir) {
  std::vector<ModelDescriptor> out;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".model") {
      out.push_back(read_model_manifest(e.path()));
    }
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.model_id < b.model_id;
  });
  for (std::size_t i = 1; i < out.size(); ++i) {
    if (out[i].model_id == out[i - 1].model_id) {
      throw Error(Errc::invalid_manifest, "duplicate model_id '" + out[i].model_id + "'");
    }
  }
  return out;
}

std::string compute_revision(const ModelDescriptor& d) {
  Sha256 h;
  if (!d.file_path.empty() && fs::exists(d.file_path)) {
    h.update(sha256_file(d.file_path));
  }
  // Stub backends have no weights; their behaviour is fixed by the manifest
  // and fixture files, so those define the revision.
  if (d.backend != "onnx") {
    if (!d.manifest_path.empty() && fs::exists(d.manifest_path)) {
      h.update(sha256_file(d.manifest_path));
    }
    h.update(d.model_id);
  }
  if (const auto q = d.options.find("queries"); q != d.options.end() && fs::exists(q->second)) {
    h.update(sha256_file(q->second));
  }
  return to_hex(h.finish());
}

std::uint64_t model_size(const ModelDescriptor& d) {
  std::error_code ec;
  if (d.file_path.empty() || !fs::is_regular_file(d.file_path, ec)) {
    throw Error(Errc::model_file_missing,
                d.model_id + ": model file missing: " + d.file_path.string());
  }
  return fs::file_size(d.file_path);
}

}  // namespace picsift
