#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace picsift {

using Rgb = std::array<std::uint8_t, 3>;

// 8-bit RGB, row-major, tightly packed.
struct DecodedImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  DecodedImage() = default;
  DecodedImage(int w, int h);

  static DecodedImage filled(int w, int h, Rgb color);

  Rgb at(int x, int y) const {
    const auto* p = &pixels[(static_cast<std::size_t>(y) * width + x) * 3];
    return {p[0], p[1], p[2]};
  }
  void set(int x, int y, Rgb color) {
    auto* p = &pixels[(static_cast<std::size_t>(y) * width + x) * 3];
    p[0] = color[0];
    p[1] = color[1];
    p[2] = color[2];
  }
  bool valid() const {
    return width >= 1 && height >= 1 &&
           pixels.size() == static_cast<std::size_t>(width) * height * 3;
  }

  friend bool operator==(const DecodedImage&, const DecodedImage&) = default;
};

// Axis-aligned box in pixel coordinates, half-open on the max side.
struct Box {
  double x_min = 0;
  double y_min = 0;
  double x_max = 0;
  double y_max = 0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }

  static Box full(const DecodedImage& image) {
    return {0.0, 0.0, static_cast<double>(image.width),
            static_cast<double>(image.height)};
  }

  friend bool operator==(const Box&, const Box&) = default;
};

/// Decodes any format the image codec understands. Grayscale is promoted to
/// RGB; alpha is composited over white. Throws Error(decode_error).
DecodedImage decode_image_file(const std::filesystem::path& path);
DecodedImage decode_image_bytes(std::span<const std::uint8_t> bytes);

/// Writes a PNG (lossless); used by tests and tooling.
void write_png(const DecodedImage& image, const std::filesystem::path& path);

/// Downscales so the longest side is at most max_side and encodes as JPEG.
std::vector<std::uint8_t> encode_thumbnail_jpeg(const DecodedImage& image,
                                                int max_side);

/// Fingerprint of the decoded pixels (dimensions included).
std::string pixel_fingerprint(const DecodedImage& image);

}  // namespace picsift
