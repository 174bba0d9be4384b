#include <catch_amalgamated.hpp>

#include <fstream>

#include "picsift/error.hpp"
#include "picsift/model.hpp"
#include "test_support.hpp"

using namespace picsift;
namespace fs = std::filesystem;

namespace {

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

TEST_CASE("manifest parsing resolves paths against the manifest") {
  testing::TempDir dir;
  testing::write_text(dir / "m/r50.model",
                      "model_id = resnet50\nrole = extractor\nfile = weights/r50.onnx\n"
                      "feature_dim = 2048\npreprocess.width = 224\npreprocess.height = 200\n"
                      "preprocess.mean = 0.485, 0.456, 0.406\npreprocess.std = 0.229,0.224,0.225\n"
                      "preprocess.order = BGR\npreprocess.resize = shorter-side-then-center-crop\n"
                      "queries = q.tsv\ncustom = 7\n");
  const auto d = read_model_manifest(dir / "m/r50.model");
  CHECK(d.model_id == "resnet50");
  CHECK(d.role == ModelRole::extractor);
  CHECK(d.backend == "onnx");
  CHECK(d.file_path == dir / "m/weights/r50.onnx");
  CHECK(d.feature_dim == 2048);
  CHECK(d.preprocess.target_width == 224);
  CHECK(d.preprocess.target_height == 200);
  CHECK(d.preprocess.mean[1] == 0.456);
  CHECK(d.preprocess.std[2] == 0.225);
  CHECK(d.preprocess.channel_order == ChannelOrder::bgr);
  CHECK(d.preprocess.resize_mode == ResizeMode::center_crop);
  CHECK(d.options.at("queries") == (dir / "m/q.tsv").string());
  CHECK(d.options.at("custom") == "7");
}

TEST_CASE("invalid manifests are rejected") {
  testing::TempDir dir;
  const auto check = [&](const std::string& text) {
    testing::write_text(dir / "x.model", text);
    CHECK(code_of([&] { read_model_manifest(dir / "x.model"); }) == Errc::invalid_manifest);
  };
  check("role = extractor\nfeature_dim = 3\n");                             // no id
  check("model_id = a\nfeature_dim = 3\n");                                 // no role
  check("model_id = a\nrole = extractor\n");                                // no feature_dim
  check("model_id = a\nrole = detector\nfeature_dim = 4\n");                // dim on detector
  check("model_id = a\nrole = oracle\n");                                   // bad role
  check("model_id = a\nrole = detector\npreprocess.std = 1,0,1\n");         // zero std
  check("model_id = a\nrole = detector\npreprocess.width = 0\n");           // zero width
  check("model_id = a\nrole = detector\npreprocess.mean = 1,2\n");          // short triple
  check("model_id = a\nrole = detector\npreprocess.resize = squash\n");     // bad mode
  check("model_id = a\nrole = detector\nthis line has no equals\n");
}

TEST_CASE("registry scan sorts by id and rejects duplicates") {
  testing::TempDir dir;
  testing::write_text(dir / "b.model", "model_id = zeta\nrole = detector\n");
  testing::write_text(dir / "a.model", "model_id = alpha\nrole = extractor\nfeature_dim = 2\n");
  testing::write_text(dir / "notes.txt", "ignored");
  const auto all = scan_model_registry(dir.path());
  REQUIRE(all.size() == 2);
  CHECK(all[0].model_id == "alpha");
  CHECK(all[1].model_id == "zeta");
  CHECK(scan_model_registry(dir / "missing").empty());

  testing::write_text(dir / "c.model", "model_id = alpha\nrole = detector\n");
  CHECK(code_of([&] { scan_model_registry(dir.path()); }) == Errc::invalid_manifest);
}

TEST_CASE("model_size reports file bytes") {
  testing::TempDir dir;
  ModelDescriptor d;
  d.model_id = "m";
  d.file_path = dir / "m.onnx";
  CHECK(code_of([&] { model_size(d); }) == Errc::model_file_missing);

  testing::write_text(d.file_path, "");
  CHECK(model_size(d) == 0);

  {
    std::ofstream out(d.file_path, std::ios::binary);
    out.seekp(14 * 1024 * 1024 - 1);
    out.put('\0');
  }
  CHECK(model_size(d) == 14ull * 1024 * 1024);
  CHECK(static_cast<double>(model_size(d)) / (1024.0 * 1024.0) == 14.0);
}

TEST_CASE("revision tracks the model file content") {
  testing::TempDir dir;
  ModelDescriptor d;
  d.model_id = "m";
  d.file_path = dir / "m.onnx";
  testing::write_text(d.file_path, "weights v1");
  const auto r1 = compute_revision(d);
  CHECK(compute_revision(d) == r1);
  testing::write_text(d.file_path, "weights v2");
  CHECK(compute_revision(d) != r1);
  CHECK(r1.size() == 64);
}

TEST_CASE("shipped test manifests parse") {
  for (const auto* name : {"toy_quadrant.model", "toy_detector.model"}) {
    const auto d = read_model_manifest(testing::test_models_dir() / name);
    CHECK(fs::exists(d.file_path));
  }
  for (const auto& d : scan_model_registry(testing::desk_dir() / "models")) {
    CHECK(d.backend != "onnx");
  }
}
