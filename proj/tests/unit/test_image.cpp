#include <catch_amalgamated.hpp>

#include <fstream>
#include <opencv2/imgcodecs.hpp>

#include "picsift/error.hpp"
#include "picsift/image.hpp"
#include "test_support.hpp"

using namespace picsift;

TEST_CASE("png round trip is lossless") {
  testing::TempDir dir;
  std::mt19937 rng(5);
  const auto img = testing::random_image(rng, 13, 7);
  testing::write_image(dir / "a.png", img);
  const auto back = decode_image_file(dir / "a.png");
  CHECK(back == img);
  CHECK(back.valid());
}

TEST_CASE("grayscale promotes to rgb") {
  testing::TempDir dir;
  cv::Mat gray(2, 3, CV_8UC1, cv::Scalar(77));
  cv::imwrite((dir / "g.png").string(), gray);
  const auto img = decode_image_file(dir / "g.png");
  REQUIRE(img.width == 3);
  REQUIRE(img.height == 2);
  CHECK(img.at(2, 1) == Rgb{77, 77, 77});
}

TEST_CASE("alpha composites over white") {
  testing::TempDir dir;
  // BGRA: pure red, half transparent; and fully transparent.
  cv::Mat rgba(1, 2, CV_8UC4);
  rgba.at<cv::Vec4b>(0, 0) = cv::Vec4b(0, 0, 255, 128);
  rgba.at<cv::Vec4b>(0, 1) = cv::Vec4b(0, 0, 0, 0);
  cv::imwrite((dir / "a.png").string(), rgba);
  const auto img = decode_image_file(dir / "a.png");
  const auto blend = [](int c, int a) { return (c * a + 255 * (255 - a) + 127) / 255; };
  CHECK(img.at(0, 0) == Rgb{static_cast<std::uint8_t>(blend(255, 128)),
                            static_cast<std::uint8_t>(blend(0, 128)),
                            static_cast<std::uint8_t>(blend(0, 128))});
  CHECK(img.at(1, 0) == Rgb{255, 255, 255});
}

TEST_CASE("corrupt and empty files fail to decode") {
  testing::TempDir dir;
  testing::write_text(dir / "bad.jpg", "definitely not a jpeg");
  testing::write_text(dir / "empty.png", "");
  for (const auto* name : {"bad.jpg", "empty.png", "missing.png"}) {
    try {
      decode_image_file(dir / name);
      FAIL("decoded " << name);
    } catch (const Error& e) {
      CHECK(e.code() == Errc::decode_error);
    }
  }
}

TEST_CASE("decode from bytes equals decode from file") {
  testing::TempDir dir;
  const auto img = testing::two_tone(6, 4, {10, 20, 30}, {200, 100, 0});
  testing::write_image(dir / "t.png", img);
  std::ifstream in(dir / "t.png", std::ios::binary);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), {});
  CHECK(decode_image_bytes(bytes) == img);
}

TEST_CASE("thumbnail longest side is bounded") {
  const auto img = DecodedImage::filled(300, 120, {1, 2, 3});
  const auto jpeg = encode_thumbnail_jpeg(img, 100);
  const auto thumb = decode_image_bytes(jpeg);
  CHECK(thumb.width == 100);
  CHECK(thumb.height == 40);
  const auto small = decode_image_bytes(encode_thumbnail_jpeg(DecodedImage::filled(20, 10, {0, 0, 0}), 100));
  CHECK(small.width == 20);
}

TEST_CASE("fingerprint depends on pixels and dimensions") {
  const auto a = DecodedImage::filled(4, 2, {9, 9, 9});
  const auto b = DecodedImage::filled(2, 4, {9, 9, 9});
  auto c = a;
  c.set(3, 1, {9, 9, 8});
  CHECK(pixel_fingerprint(a) == pixel_fingerprint(DecodedImage::filled(4, 2, {9, 9, 9})));
  CHECK(pixel_fingerprint(a) != pixel_fingerprint(b));
  CHECK(pixel_fingerprint(a) != pixel_fingerprint(c));
}
