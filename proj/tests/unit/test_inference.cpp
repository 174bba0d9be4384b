#include <catch_amalgamated.hpp>

#include <cmath>
#include <opencv2/imgproc.hpp>
#include <thread>

#include "picsift/error.hpp"
#include "picsift/inference.hpp"
#include "picsift/stub_backend.hpp"
#include "test_support.hpp"

using namespace picsift;
using Catch::Matchers::WithinAbs;
namespace fs = std::filesystem;

namespace {

// Scalar reference: bilinear with half-pixel centres, coordinates clamped to
// the source, computed one output value at a time.
double sample(const DecodedImage& img, double x, double y, int ch) {
  x = std::min(std::max(x, 0.0), img.width - 1.0);
  y = std::min(std::max(y, 0.0), img.height - 1.0);
  const int xa = static_cast<int>(x), ya = static_cast<int>(y);
  const int xb = std::min(xa + 1, img.width - 1), yb = std::min(ya + 1, img.height - 1);
  const double fx = x - xa, fy = y - ya;
  const auto v = [&](int px, int py) { return static_cast<double>(img.at(px, py)[ch]); };
  return (1 - fy) * ((1 - fx) * v(xa, ya) + fx * v(xb, ya)) +
         fy * ((1 - fx) * v(xa, yb) + fx * v(xb, yb));
}

double reference_value(const DecodedImage& img, const PreprocessSpec& spec, int c, int v, int u) {
  double sx, sy, ox = 0, oy = 0;
  if (spec.resize_mode == ResizeMode::stretch) {
    sx = static_cast<double>(spec.target_width) / img.width;
    sy = static_cast<double>(spec.target_height) / img.height;
  } else {
    const double s = std::max(static_cast<double>(spec.target_width) / img.width,
                              static_cast<double>(spec.target_height) / img.height);
    const double rw = std::round(img.width * s), rh = std::round(img.height * s);
    sx = rw / img.width;
    sy = rh / img.height;
    ox = std::floor((rw - spec.target_width) / 2);
    oy = std::floor((rh - spec.target_height) / 2);
  }
  const int src_c = spec.channel_order == ChannelOrder::rgb ? c : 2 - c;
  const double raw = sample(img, (u + ox + 0.5) / sx - 0.5, (v + oy + 0.5) / sy - 0.5, src_c);
  return (raw * spec.scale - spec.mean[c]) / spec.std[c];
}

std::vector<float> hand_quadrants(const DecodedImage& img) {
  // Image sides are even here; quadrant q covers [qx*w/2, (qx+1)*w/2).
  std::vector<float> out;
  for (int q = 0; q < 4; ++q) {
    const int qx = q % 2, qy = q / 2;
    for (int c = 0; c < 3; ++c) {
      double sum = 0;
      int n = 0;
      for (int y = qy * img.height / 2; y < (qy + 1) * img.height / 2; ++y)
        for (int x = qx * img.width / 2; x < (qx + 1) * img.width / 2; ++x, ++n)
          sum += img.at(x, y)[c] / 255.0;
      out.push_back(static_cast<float>(sum / n));
    }
  }
  return out;
}

double norm(const std::vector<float>& v) {
  double s = 0;
  for (float x : v) s += static_cast<double>(x) * x;
  return std::sqrt(s);
}

ModelHandle load(const std::string& manifest) {
  return load_model(read_model_manifest(testing::test_models_dir() / manifest));
}

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return Errc::io_error;
}

}  // namespace

TEST_CASE("preprocess constant images") {
  PreprocessSpec spec;
  const auto zeros = preprocess(DecodedImage::filled(5, 3, {0, 0, 0}), spec);
  const auto ones = preprocess(DecodedImage::filled(5, 3, {255, 255, 255}), spec);
  CHECK(zeros.channels == 3);
  CHECK(zeros.height == 224);
  CHECK(zeros.width == 224);
  for (float v : zeros.data) REQUIRE(v == 0.0f);
  for (float v : ones.data) REQUIRE_THAT(v, WithinAbs(1.0, 1e-6));
}

TEST_CASE("preprocess shape contract") {
  PreprocessSpec spec;
  const auto t = preprocess(DecodedImage::filled(448, 448, {3, 4, 5}), spec);
  CHECK(t.channels == 3);
  CHECK(t.height == 224);
  CHECK(t.width == 224);
  CHECK(t.data.size() == 3u * 224 * 224);
}

TEST_CASE("preprocess matches the scalar reference on small images") {
  std::mt19937 rng(42);
  for (int trial = 0; trial < 300; ++trial) {
    const int w = 1 + static_cast<int>(rng() % 8), h = 1 + static_cast<int>(rng() % 8);
    const auto img = testing::random_image(rng, w, h);
    PreprocessSpec spec;
    spec.target_width = 1 + static_cast<int>(rng() % 8);
    spec.target_height = 1 + static_cast<int>(rng() % 8);
    spec.resize_mode = rng() % 2 ? ResizeMode::stretch : ResizeMode::center_crop;
    spec.channel_order = rng() % 2 ? ChannelOrder::rgb : ChannelOrder::bgr;
    spec.mean = {0.485, 0.456, 0.406};
    spec.std = {0.229, 0.224, 0.225};
    const auto t = preprocess(img, spec);
    REQUIRE(t.channels == 3);
    REQUIRE(t.height == spec.target_height);
    REQUIRE(t.width == spec.target_width);
    for (int c = 0; c < 3; ++c)
      for (int v = 0; v < t.height; ++v)
        for (int u = 0; u < t.width; ++u)
          REQUIRE_THAT(t.at(c, v, u), WithinAbs(reference_value(img, spec, c, v, u), 1e-6));
  }
}

TEST_CASE("stretch preprocessing agrees with OpenCV float bilinear resize") {
  std::mt19937 rng(3);
  const auto img = testing::random_image(rng, 37, 23);
  PreprocessSpec spec;
  spec.target_width = 50;
  spec.target_height = 11;
  const auto t = preprocess(img, spec);
  cv::Mat src(img.height, img.width, CV_8UC3, const_cast<std::uint8_t*>(img.pixels.data()));
  cv::Mat f, dst;
  src.convertTo(f, CV_32FC3, 1.0 / 255.0);
  cv::resize(f, dst, cv::Size(50, 11), 0, 0, cv::INTER_LINEAR);
  for (int v = 0; v < 11; ++v)
    for (int u = 0; u < 50; ++u)
      for (int c = 0; c < 3; ++c)
        REQUIRE_THAT(t.at(c, v, u), WithinAbs(dst.at<cv::Vec3f>(v, u)[c], 1e-5));
}

TEST_CASE("center crop geometry maps tensor corners into the source") {
  PreprocessSpec spec;
  spec.resize_mode = ResizeMode::center_crop;
  // Short side already 224: no scaling, the window is x in [112, 336).
  const auto g = resize_geometry(448, 224, spec);
  CHECK(g.scale_x == 1.0);
  CHECK(g.offset_x == 112);
  CHECK(g.offset_y == 0);
  CHECK(g.to_source_x(0) == 112);
  CHECK(g.to_source_x(224) == 336);
  // 896x448 halves first, then takes the same window.
  const auto h = resize_geometry(896, 448, spec);
  CHECK(h.scale_x == 0.5);
  CHECK(h.to_source_x(0) == 224);
  CHECK(h.to_source_x(224) == 672);
  const auto s = resize_geometry(100, 50, PreprocessSpec{});
  CHECK_THAT(s.to_source_x(224), WithinAbs(100, 1e-9));
  CHECK_THAT(s.to_source_y(224), WithinAbs(50, 1e-9));
}

TEST_CASE("crop examples") {
  DecodedImage img(4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) img.set(x, y, {static_cast<std::uint8_t>(x), static_cast<std::uint8_t>(y), 7});

  CHECK(crop(img, Box::full(img), 0.0) == img);

  const auto tl = crop(img, {0, 0, 2, 2}, 0.0);
  CHECK(tl.width == 2);
  CHECK(tl.height == 2);
  CHECK(tl.at(1, 1) == img.at(1, 1));

  // pad = 0.5 * max(2, 2) = 1 each side: (-1,-1,3,3) clamped to (0,0,3,3).
  const auto padded = crop(img, {0, 0, 2, 2}, 0.5);
  CHECK(padded.width == 3);
  CHECK(padded.height == 3);
  CHECK(padded.at(2, 2) == img.at(2, 2));

  const auto frac = crop(img, {0.5, 1.2, 2.1, 2.9}, 0.0);
  CHECK(frac.width == 3);
  CHECK(frac.height == 2);
  CHECK(frac.at(0, 0) == img.at(0, 1));
}

TEST_CASE("degenerate crops are rejected") {
  const auto img = DecodedImage::filled(4, 4, {0, 0, 0});
  CHECK(code_of([&] { crop(img, {5, 5, 9, 9}); }) == Errc::degenerate_box);
  CHECK(code_of([&] { crop(img, {2, 2, 2, 3}); }) == Errc::degenerate_box);
  CHECK(code_of([&] { crop(img, {0, 0, NAN, 1}); }) == Errc::degenerate_box);
}

TEST_CASE("full-box crop is pixel identical for random images") {
  std::mt19937 rng(8);
  for (int i = 0; i < 50; ++i) {
    const auto img = testing::random_image(rng, 1 + rng() % 40, 1 + rng() % 40);
    REQUIRE(crop(img, Box::full(img), 0.0) == img);
  }
}

TEST_CASE("l2 normalization") {
  std::vector<float> v{3, 4};
  l2_normalize(v);
  CHECK_THAT(v[0], WithinAbs(0.6, 1e-7));
  CHECK_THAT(v[1], WithinAbs(0.8, 1e-7));
  std::vector<float> z(4, 0.0f);
  l2_normalize(z);
  for (float x : z) CHECK_THAT(x, WithinAbs(0.5, 1e-7));
  std::vector<float> bad{1, NAN};
  CHECK_THROWS_AS(l2_normalize(bad), Error);
}

TEST_CASE("stub quadrant extractor equals hand-computed means") {
  // 8x8 image with four distinct quadrants plus a gradient to make means non-trivial.
  DecodedImage img(8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x)
      img.set(x, y, {static_cast<std::uint8_t>(x < 4 ? 200 : 10), static_cast<std::uint8_t>(y < 4 ? 30 * x : 5),
                     static_cast<std::uint8_t>(x * 8 + y)});
  ModelDescriptor d;
  d.model_id = "q";
  d.role = ModelRole::extractor;
  d.feature_dim = 12;
  d.preprocess.target_width = 8;
  d.preprocess.target_height = 8;
  const auto h = ModelHandle::from_engine(d, std::make_shared<QuadrantMeanExtractor>());
  auto expected = hand_quadrants(img);
  l2_normalize(expected);
  const auto got = h.extract_features(img);
  REQUIRE(got.values.size() == 12);
  for (int i = 0; i < 12; ++i) CHECK_THAT(got.values[i], WithinAbs(expected[i], 1e-6));
  CHECK(got.model_id == "q");
}

TEST_CASE("stub quadrant extractor puts the odd row and column bottom right") {
  Tensor t;
  t.channels = 3;
  t.height = 3;
  t.width = 3;
  t.data.assign(27, 0.0f);
  t.data[0] = 1.0f;                // (c0, y0, x0): only pixel of the top-left quadrant
  t.data[2 * 9 + 8] = 4.0f;        // (c2, y2, x2): one of four bottom-right pixels
  QuadrantMeanExtractor e;
  const auto v = e.forward(t);
  CHECK(v[0] == 1.0f);
  CHECK(v[11] == 1.0f);
}

TEST_CASE("toy ONNX extractor reproduces quadrant means") {
  const auto h = load("toy_quadrant.model");
  CHECK(h.role() == ModelRole::extractor);
  CHECK(h.output_dim() == 12);
  CHECK(h.revision().size() == 64);
  std::mt19937 rng(77);
  for (int i = 0; i < 20; ++i) {
    const auto img = testing::random_image(rng, 8, 8);
    auto expected = hand_quadrants(img);
    l2_normalize(expected);
    const auto got = h.extract_features(img);
    REQUIRE(got.values.size() == 12);
    for (int k = 0; k < 12; ++k) REQUIRE_THAT(got.values[k], WithinAbs(expected[k], 1e-5));
  }
}

TEST_CASE("extracted features are unit norm and deterministic") {
  const auto onnx = load("toy_quadrant.model");
  const auto stub = testing::stub_extractor();
  std::mt19937 rng(9);
  for (int i = 0; i < 30; ++i) {
    const auto img = testing::random_image(rng, 1 + rng() % 30, 1 + rng() % 30);
    for (const auto* h : {&onnx, &stub}) {
      const auto a = h->extract_features(img);
      REQUIRE_THAT(norm(a.values), WithinAbs(1.0, 1e-5));
      REQUIRE(a.values == h->extract_features(img).values);
    }
  }
  const auto black = onnx.extract_features(DecodedImage::filled(8, 8, {0, 0, 0}));
  CHECK_THAT(norm(black.values), WithinAbs(1.0, 1e-5));
}

TEST_CASE("toy ONNX detector finds the red patch") {
  const auto h = load("toy_detector.model");
  CHECK(h.role() == ModelRole::detector);
  // 64x64 black image with a red 16x16 block at patch cell (1, 2).
  auto img = DecodedImage::filled(64, 64, {0, 0, 0});
  for (int y = 32; y < 48; ++y)
    for (int x = 16; x < 32; ++x) img.set(x, y, {255, 0, 0});
  const auto dets = h.detect(img, "red");
  REQUIRE(dets.size() == 16);
  const auto best_it = std::max_element(dets.begin(), dets.end(),
                                        [](const auto& a, const auto& b) { return a.score < b.score; });
  const auto& best = *best_it;
  CHECK(best_it - dets.begin() == 2 * 4 + 1);
  const double sig6 = 1.0 / (1.0 + std::exp(-6.0));
  CHECK_THAT(best.score, WithinAbs(sig6, 1e-5));
  CHECK_THAT(best.bbox.x_min, WithinAbs(16, 1e-4));
  CHECK_THAT(best.bbox.y_min, WithinAbs(32, 1e-4));
  CHECK_THAT(best.bbox.x_max, WithinAbs(32, 1e-4));
  CHECK_THAT(best.bbox.y_max, WithinAbs(48, 1e-4));
  for (auto it = dets.begin(); it != dets.end(); ++it) {
    if (it == best_it) continue;
    const auto& d = *it;
    CHECK_THAT(d.score, WithinAbs(1.0 - sig6, 1e-5));
  }
  // Prompts are matched case-insensitively after trimming.
  CHECK(h.detect(img, "  RED ").size() == 16);
}

TEST_CASE("detections stay inside the image with scores in [0, 1]") {
  const auto h = load("toy_detector.model");
  std::mt19937 rng(21);
  for (int i = 0; i < 40; ++i) {
    const auto img = testing::random_image(rng, 1 + rng() % 90, 1 + rng() % 90);
    for (const auto* p : {"red", "blue", "bright"}) {
      for (const auto& d : h.detect(img, p)) {
        REQUIRE(d.bbox.x_min >= 0);
        REQUIRE(d.bbox.y_min >= 0);
        REQUIRE(d.bbox.x_max <= img.width);
        REQUIRE(d.bbox.y_max <= img.height);
        REQUIRE(d.bbox.x_min < d.bbox.x_max);
        REQUIRE(d.bbox.y_min < d.bbox.y_max);
        REQUIRE(d.score >= 0.0);
        REQUIRE(d.score <= 1.0);
      }
    }
  }
}

TEST_CASE("detector input validation") {
  const auto h = load("toy_detector.model");
  const auto img = DecodedImage::filled(8, 8, {1, 2, 3});
  CHECK(code_of([&] { h.detect(img, "   "); }) == Errc::empty_prompt);
  CHECK(code_of([&] { h.detect(img, "giraffe"); }) == Errc::inference_failure);
  CHECK(code_of([&] { h.extract_features(img); }) == Errc::role_mismatch);
  CHECK(code_of([&] { load("toy_quadrant.model").detect(img, "red"); }) == Errc::role_mismatch);
}

TEST_CASE("scripted detector passes its table through") {
  auto engine = std::make_shared<ScriptedDetector>();
  const auto img = DecodedImage::filled(64, 64, {5, 5, 5});
  engine->add(img, "Cat", {{10, 10, 50, 50}, 0.7, 0});
  const auto h = testing::stub_detector(engine);
  const auto dets = h.detect(img, "cat");
  REQUIRE(dets.size() == 1);
  CHECK(dets[0].bbox == Box{10, 10, 50, 50});
  CHECK(dets[0].score == 0.7);
  CHECK(h.detect(img, "dog").empty());
  CHECK(h.detect(DecodedImage::filled(64, 64, {6, 6, 6}), "cat").empty());
  CHECK(engine->calls() == 3);
}

TEST_CASE("scripted detector fixture files") {
  testing::TempDir dir;
  testing::write_solid(dir.path(), "imgs/a.png", {1, 2, 3}, 20, 10);
  testing::write_text(dir / "fx.tsv", "# comment\nimgs/a.png\tcat\tfull,0.9\nimgs/a.png\tcat\t1,2,30,8,0.4\n");
  const auto engine = ScriptedDetector::from_fixture(dir / "fx.tsv", dir.path());
  const auto h = testing::stub_detector(engine);
  const auto dets = h.detect(DecodedImage::filled(20, 10, {1, 2, 3}), "cat");
  REQUIRE(dets.size() == 2);
  CHECK(dets[0].bbox == Box{0, 0, 20, 10});
  CHECK(dets[1].bbox == Box{1, 2, 20, 8});  // clamped to the image
  testing::write_text(dir / "bad.tsv", "imgs/a.png\tcat\t1,2,3\n");
  CHECK_THROWS_AS(ScriptedDetector::from_fixture(dir / "bad.tsv", dir.path()), Error);
}

TEST_CASE("load_model errors") {
  testing::TempDir dir;
  auto d = read_model_manifest(testing::test_models_dir() / "toy_quadrant.model");
  d.file_path = dir / "missing.onnx";
  CHECK(code_of([&] { load_model(d); }) == Errc::model_file_missing);

  // detector graph declared as an extractor
  d = read_model_manifest(testing::test_models_dir() / "toy_detector.model");
  d.role = ModelRole::extractor;
  d.feature_dim = 12;
  CHECK(code_of([&] { load_model(d); }) == Errc::graph_signature_mismatch);

  // extractor graph with the wrong declared dimension
  d = read_model_manifest(testing::test_models_dir() / "toy_quadrant.model");
  d.feature_dim = 13;
  CHECK(code_of([&] { load_model(d); }) == Errc::graph_signature_mismatch);

  // extractor graph declared as a detector
  d = read_model_manifest(testing::test_models_dir() / "toy_quadrant.model");
  d.role = ModelRole::detector;
  d.feature_dim.reset();
  d.options["queries"] = (testing::test_models_dir() / "toy_queries.tsv").string();
  CHECK(code_of([&] { load_model(d); }) == Errc::graph_signature_mismatch);

  testing::write_text(dir / "junk.onnx", "not a graph");
  d = read_model_manifest(testing::test_models_dir() / "toy_quadrant.model");
  d.file_path = dir / "junk.onnx";
  CHECK(code_of([&] { load_model(d); }) == Errc::graph_signature_mismatch);
}

TEST_CASE("concurrent extraction through one handle") {
  const auto h = load("toy_quadrant.model");
  std::mt19937 rng(1);
  std::vector<DecodedImage> imgs;
  for (int i = 0; i < 8; ++i) imgs.push_back(testing::random_image(rng, 12, 12));
  std::vector<std::vector<float>> serial;
  for (const auto& img : imgs) serial.push_back(h.extract_features(img).values);
  std::vector<std::vector<float>> parallel(imgs.size());
  {
    std::vector<std::jthread> threads;
    for (std::size_t i = 0; i < imgs.size(); ++i)
      threads.emplace_back([&, i] { parallel[i] = h.extract_features(imgs[i]).values; });
  }
  CHECK(parallel == serial);
}
