#include "picsift/image.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "picsift/error.hpp"
#include "picsift/hash.hpp"

namespace picsift {

DecodedImage::DecodedImage(int w, int h)
    : width(w), height(h),
      pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3) {}

DecodedImage DecodedImage::filled(int w, int h, Rgb color) {
  DecodedImage img(w, h);
  for (std::size_t i = 0; i < img.pixels.size(); i += 3) {
    img.pixels[i] = color[0];
    img.pixels[i + 1] = color[1];
    img.pixels[i + 2] = color[2];
  }
  return img;
}

namespace {

// Converts whatever imdecode produced into packed 8-bit RGB.
DecodedImage from_mat(cv::Mat mat, const std::string& origin) {
  if (mat.empty()) throw Error(Errc::decode_error, "cannot decode " + origin);
  if (mat.depth() == CV_16U) {
    mat.convertTo(mat, CV_8U, 1.0 / 257.0);
  } else if (mat.depth() == CV_32F) {
    mat.convertTo(mat, CV_8U, 255.0);
  } else if (mat.depth() != CV_8U) {
    throw Error(Errc::decode_error, "unsupported pixel depth in " + origin);
  }

  DecodedImage out(mat.cols, mat.rows);
  const int channels = mat.channels();
  for (int y = 0; y < mat.rows; ++y) {
    const auto* src = mat.ptr<std::uint8_t>(y);
    auto* dst = &out.pixels[static_cast<std::size_t>(y) * mat.cols * 3];
    for (int x = 0; x < mat.cols; ++x) {
      const auto* p = src + static_cast<std::size_t>(x) * channels;
      int r, g, b, a = 255;
      switch (channels) {
        case 1: r = g = b = p[0]; break;
        case 2: r = g = b = p[0]; a = p[1]; break;
        case 3: b = p[0]; g = p[1]; r = p[2]; break;
        case 4: b = p[0]; g = p[1]; r = p[2]; a = p[3]; break;
        default:
          throw Error(Errc::decode_error, "unsupported channel count in " + origin);
      }
      if (a != 255) {
        // composite over white
        const auto over = [a](int c) { return (c * a + 255 * (255 - a) + 127) / 255; };
        r = over(r);
        g = over(g);
        b = over(b);
      }
      dst[3 * x] = static_cast<std::uint8_t>(r);
      dst[3 * x + 1] = static_cast<std::uint8_t>(g);
      dst[3 * x + 2] = static_cast<std::uint8_t>(b);
    }
  }
  return out;
}

cv::Mat to_bgr_mat(const DecodedImage& image) {
  cv::Mat mat(image.height, image.width, CV_8UC3);
  for (int y = 0; y < image.height; ++y) {
    auto* dst = mat.ptr<std::uint8_t>(y);
    for (int x = 0; x < image.width; ++x) {
      const auto c = image.at(x, y);
      dst[3 * x] = c[2];
      dst[3 * x + 1] = c[1];
      dst[3 * x + 2] = c[0];
    }
  }
  return mat;
}

}  // namespace

DecodedImage decode_image_bytes(std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) throw Error(Errc::decode_error, "empty image buffer");
  cv::Mat buf(1, static_cast<int>(bytes.size()), CV_8UC1,
              const_cast<std::uint8_t*>(bytes.data()));
  cv::Mat mat;
  try {
    mat = cv::imdecode(buf, cv::IMREAD_UNCHANGED | cv::IMREAD_IGNORE_ORIENTATION);
  } catch (const cv::Exception& e) {
    throw Error(Errc::decode_error, std::string("cannot decode image: ") + e.what());
  }
  return from_mat(std::move(mat), "image buffer");
}

DecodedImage decode_image_file(const std::filesystem::path& path) {
  cv::Mat mat;
  try {
    mat = cv::imread(path.string(), cv::IMREAD_UNCHANGED | cv::IMREAD_IGNORE_ORIENTATION);
  } catch (const cv::Exception& e) {
    throw Error(Errc::decode_error,
                "cannot decode " + path.string() + ": " + e.what());
  }
  return from_mat(std::move(mat), path.string());
}

void write_png(const DecodedImage& image, const std::filesystem::path& path) {
  if (!cv::imwrite(path.string(), to_bgr_mat(image))) {
    throw Error(Errc::io_error, "cannot write " + path.string());
  }
}

std::vector<std::uint8_t> encode_thumbnail_jpeg(const DecodedImage& image,
                                                int max_side) {
  cv::Mat mat = to_bgr_mat(image);
  const int longest = std::max(image.width, image.height);
  if (max_side >= 1 && longest > max_side) {
    const double s = static_cast<double>(max_side) / longest;
    const int w = std::max(1, static_cast<int>(std::lround(image.width * s)));
    const int h = std::max(1, static_cast<int>(std::lround(image.height * s)));
    cv::resize(mat, mat, cv::Size(w, h), 0, 0, cv::INTER_AREA);
  }
  std::vector<std::uint8_t> out;
  cv::imencode(".jpg", mat, out, {cv::IMWRITE_JPEG_QUALITY, 85});
  return out;
}

std::string pixel_fingerprint(const DecodedImage& image) {
  Sha256 h;
  h.update(std::to_string(image.width) + "x" + std::to_string(image.height) + ":");
  h.update(image.pixels);
  return to_hex(h.finish());
}

}  // namespace picsift
