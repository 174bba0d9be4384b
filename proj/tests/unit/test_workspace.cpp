#include <catch_amalgamated.hpp>

#include <map>
#include <thread>

#include "picsift/error.hpp"
#include "picsift/workspace.hpp"
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

EnvLookup env_of(std::map<std::string, std::string> vars) {
  return [vars = std::move(vars)](const std::string& name) -> std::optional<std::string> {
    const auto it = vars.find(name);
    if (it == vars.end()) return std::nullopt;
    return it->second;
  };
}

}  // namespace

TEST_CASE("config defaults") {
  const auto cfg = load_app_config(std::nullopt, env_of({{"HOME", "/home/u"}}));
  CHECK(cfg.catalog_root == fs::path("/home/u/Pictures"));
  CHECK(cfg.index_cache_dir == fs::path("/home/u/.cache/picsift"));
  CHECK(cfg.model_registry_dir == fs::path("models"));
  CHECK(cfg.default_k == 10);
  CHECK(cfg.default_threshold == 0.1);
  CHECK(cfg.bind_address == "127.0.0.1:8765");

  const auto xdg = load_app_config(
      std::nullopt, env_of({{"HOME", "/home/u"}, {"XDG_PICTURES_DIR", "/pics"}, {"XDG_CACHE_HOME", "/c"}}));
  CHECK(xdg.catalog_root == fs::path("/pics"));
  CHECK(xdg.index_cache_dir == fs::path("/c/picsift"));
}

TEST_CASE("config file overrides defaults and environment overrides the file") {
  testing::TempDir dir;
  testing::write_text(dir / "conf/picsift.conf",
                      "# settings\n"
                      "catalog_root = photos\n"
                      "model_registry_dir = /opt/models\n"
                      "default_model = vgg16\n"
                      "default_k = 5\n"
                      "default_threshold = 0.25\n");
  const auto file = dir / "conf/picsift.conf";
  const auto cfg = load_app_config(file, env_of({{"HOME", "/h"}}));
  CHECK(cfg.catalog_root == dir / "conf" / "photos");
  CHECK(cfg.model_registry_dir == fs::path("/opt/models"));
  CHECK(cfg.default_model == "vgg16");
  CHECK(cfg.default_k == 5);
  CHECK(cfg.default_threshold == 0.25);

  const auto env = load_app_config(file, env_of({{"HOME", "/h"},
                                                 {"PICSIFT_DEFAULT_K", "3"},
                                                 {"PICSIFT_CATALOG_ROOT", "rel"},
                                                 {"PICSIFT_BIND_ADDRESS", "0.0.0.0:9000"},
                                                 {"PICSIFT_DETECTOR_MODEL", "stub-detector"}}));
  CHECK(env.default_k == 3);
  CHECK(env.catalog_root == fs::path("rel"));
  CHECK(env.bind_address == "0.0.0.0:9000");
  CHECK(env.detector_model == "stub-detector");
  CHECK(env.default_model == "vgg16");
}

TEST_CASE("invalid configuration is rejected") {
  testing::TempDir dir;
  const auto with = [&](const std::string& text) {
    testing::write_text(dir / "c.conf", text);
    return code_of([&] { load_app_config(dir / "c.conf", env_of({})); });
  };
  CHECK(with("colour = blue\n") == Errc::invalid_argument);
  CHECK(with("default_k = 0\n") == Errc::invalid_argument);
  CHECK(with("default_k = many\n") == Errc::invalid_argument);
  CHECK(with("default_threshold = 1.5\n") == Errc::invalid_argument);
  CHECK(with("bind_address = localhost\n") == Errc::invalid_argument);
  CHECK(with("bind_address = localhost:70000\n") == Errc::invalid_argument);
  CHECK(with("default_model =\n") == Errc::invalid_argument);
  CHECK(code_of([] { load_app_config(std::nullopt, env_of({{"PICSIFT_DEFAULT_THRESHOLD", "-1"}})); }) ==
        Errc::invalid_argument);
  CHECK(code_of([&] { load_app_config(dir / "missing.conf", env_of({})); }) == Errc::io_error);
}

TEST_CASE("registry lists manifests and loads handles once") {
  ModelRegistry reg(testing::desk_dir() / "models");
  REQUIRE(reg.descriptors().size() == 2);
  CHECK(reg.descriptors()[0].model_id == "stub-detector");
  CHECK(reg.descriptors()[1].model_id == "stub-quadrant");
  CHECK(reg.descriptor("stub-quadrant").role == ModelRole::extractor);
  CHECK(code_of([&] { reg.descriptor("nope"); }) == Errc::unknown_model);
  CHECK(code_of([&] { reg.handle("nope"); }) == Errc::unknown_model);

  std::vector<ModelHandle> handles(8);
  {
    std::vector<std::jthread> ts;
    for (int i = 0; i < 8; ++i) ts.emplace_back([&, i] { handles[i] = reg.handle("stub-quadrant"); });
  }
  for (const auto& h : handles) CHECK(h.same_engine(handles[0]));
  CHECK(reg.handle("stub-detector").role() == ModelRole::detector);
}

TEST_CASE("registry of a missing directory is empty") {
  ModelRegistry reg("/nonexistent/picsift/models");
  CHECK(reg.descriptors().empty());
}

TEST_CASE("index store keys by root and model") {
  testing::TempDir dir;
  fs::create_directories(dir / "a");
  fs::create_directories(dir / "b");
  IndexStore store(dir / "cache");
  CHECK(store.index_dir(dir / "a", "m") != store.index_dir(dir / "b", "m"));
  CHECK(store.index_dir(dir / "a", "m") != store.index_dir(dir / "a", "n"));
  CHECK(store.index_dir(dir / "a", "m") == store.index_dir(dir / "b/../a", "m"));
  CHECK(store.index_dir(dir / "a", "m").parent_path().parent_path() == dir / "cache" / "indexes");
  CHECK_FALSE(store.load(dir / "a", "m"));
}

TEST_CASE("refresh builds, reuses, updates and rebuilds") {
  testing::TempDir dir;
  const auto root = dir / "pics";
  testing::write_solid(root, "a.png", {10, 20, 30});
  testing::write_solid(root, "b.png", {40, 50, 60});
  testing::write_text(root / "c.png", "broken");
  IndexStore store(dir / "cache");
  const auto ex = testing::stub_extractor();

  const auto first = refresh_index(root, ex, store, false);
  CHECK(first.rebuilt);
  CHECK_FALSE(first.reused);
  CHECK(first.index.size() == 2);
  CHECK(first.skipped.size() == 1);
  CHECK(first.added == 3);
  REQUIRE(store.load(root, "stub-quadrant"));
  CHECK(*store.load(root, "stub-quadrant") == first.index);

  const auto second = refresh_index(root, ex, store, false);
  CHECK(second.reused);
  CHECK(second.unchanged == 3);
  CHECK(second.index == first.index);

  testing::write_solid(root, "d.png", {70, 80, 90});
  testing::write_solid(root, "a.png", {11, 20, 30}, 9, 9);
  fs::remove(root / "b.png");
  const auto third = refresh_index(root, ex, store, false);
  CHECK_FALSE(third.rebuilt);
  CHECK_FALSE(third.reused);
  CHECK(third.added == 1);
  CHECK(third.removed == 1);
  CHECK(third.modified == 1);
  CHECK(third.unchanged == 1);
  CHECK(third.index == build_index(scan_directory(root), ex).index);
  CHECK(*store.load(root, "stub-quadrant") == third.index);

  const auto forced = refresh_index(root, ex, store, true);
  CHECK(forced.rebuilt);
  CHECK(forced.index == third.index);

  const auto new_rev = refresh_index(root, testing::stub_extractor("stub-quadrant", "rev-2"), store, false);
  CHECK(new_rev.rebuilt);
  CHECK(new_rev.index.model_revision() == "rev-2");
}

TEST_CASE("refresh rebuilds over a corrupt stored index") {
  testing::TempDir dir;
  const auto root = dir / "pics";
  testing::write_solid(root, "a.png", {10, 20, 30});
  IndexStore store(dir / "cache");
  const auto ex = testing::stub_extractor();
  refresh_index(root, ex, store, false);
  const auto bin = store.index_dir(root, "stub-quadrant") / "features.bin";
  testing::write_text(bin, "xx");
  CHECK(code_of([&] { store.load(root, "stub-quadrant"); }) == Errc::index_inconsistent);
  const auto r = refresh_index(root, ex, store, false);
  CHECK(r.rebuilt);
  CHECK(r.index.size() == 1);
  CHECK(store.load(root, "stub-quadrant"));
}

TEST_CASE("refresh of a missing root fails") {
  testing::TempDir dir;
  IndexStore store(dir / "cache");
  CHECK(code_of([&] { refresh_index(dir / "nope", testing::stub_extractor(), store, false); }) ==
        Errc::root_not_found);
}
