#include "picsift/stub_backend.hpp"

#include "picsift/catalog.hpp"
#include "picsift/error.hpp"
#include "text_util.hpp"

namespace picsift {

std::string normalize_prompt(std::string_view prompt) {
  return detail::to_lower(detail::trim(prompt));
}

std::vector<float> QuadrantMeanExtractor::forward(const Tensor& input) {
  const int hh = input.height / 2;
  const int hw = input.width / 2;
  const int rows[2][2] = {{0, hh}, {hh, input.height}};
  const int cols[2][2] = {{0, hw}, {hw, input.width}};
  std::vector<float> out;
  out.reserve(12);
  for (int qy = 0; qy < 2; ++qy) {
    for (int qx = 0; qx < 2; ++qx) {
      for (int c = 0; c < 3; ++c) {
        double sum = 0.0;
        std::size_t n = 0;
        for (int y = rows[qy][0]; y < rows[qy][1]; ++y) {
          for (int x = cols[qx][0]; x < cols[qx][1]; ++x) {
            sum += input.at(c, y, x);
            ++n;
          }
        }
        out.push_back(n == 0 ? 0.0f : static_cast<float>(sum / n));
      }
    }
  }
  return out;
}

void ScriptedDetector::add(const DecodedImage& image, const std::string& prompt,
                           Detection detection) {
  table_[pixel_fingerprint(image)][normalize_prompt(prompt)].push_back(detection);
}

std::shared_ptr<ScriptedDetector> ScriptedDetector::from_fixture(
    const std::filesystem::path& fixture, const std::filesystem::path& image_root) {
  auto det = std::make_shared<ScriptedDetector>();
  std::map<std::string, DecodedImage> cache;
  for (const auto& [cols, line] : detail::parse_tsv(detail::read_text_file(fixture))) {
    const auto where = fixture.string() + ":" + std::to_string(line);
    if (cols.size() != 3) throw Error(Errc::invalid_manifest, where + ": expected 3 columns");
    const auto& rel = cols[0];
    if (!is_safe_relative_path(rel)) throw Error(Errc::invalid_manifest, where + ": bad path");
    auto it = cache.find(rel);
    if (it == cache.end()) {
      it = cache.emplace(rel, decode_image_file(image_root / rel)).first;
    }
    const auto& image = it->second;
    const auto fields = detail::split(cols[2], ',');
    Detection d;
    if (fields.size() == 2 && detail::trim(fields[0]) == "full") {
      d.bbox = Box::full(image);
      const auto s = detail::parse_double(fields[1]);
      if (!s) throw Error(Errc::invalid_manifest, where + ": bad score");
      d.score = *s;
    } else if (fields.size() == 5) {
      double v[5];
      for (int i = 0; i < 5; ++i) {
        const auto x = detail::parse_double(fields[i]);
        if (!x) throw Error(Errc::invalid_manifest, where + ": bad number '" + fields[i] + "'");
        v[i] = *x;
      }
      d.bbox = {v[0], v[1], v[2], v[3]};
      d.score = v[4];
    } else {
      throw Error(Errc::invalid_manifest, where + ": expected x0,y0,x1,y1,score or full,score");
    }
    det->add(image, cols[1], d);
  }
  return det;
}

std::vector<Detection> ScriptedDetector::forward(const DecodedImage& image, const Tensor&,
                                                 const ResizeGeometry&,
                                                 std::string_view prompt) {
  ++calls_;
  const auto img = table_.find(pixel_fingerprint(image));
  if (img == table_.end()) return {};
  const auto hit = img->second.find(normalize_prompt(prompt));
  if (hit == img->second.end()) return {};
  return hit->second;
}

}  // namespace picsift
