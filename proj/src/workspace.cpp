#include "picsift/workspace.hpp"

#include <cctype>
#include <cstdlib>

#include "picsift/error.hpp"
#include "picsift/hash.hpp"
#include "text_util.hpp"

namespace fs = std::filesystem;

namespace picsift {

namespace {

std::optional<std::pair<std::string, int>> split_host_port(const std::string& address) {
  const auto colon = address.rfind(':');
  if (colon == std::string::npos || colon == 0) return std::nullopt;
  const auto port = detail::parse_int(std::string_view(address).substr(colon + 1));
  if (!port || *port < 0 || *port > 65535) return std::nullopt;
  return std::pair{address.substr(0, colon), static_cast<int>(*port)};
}

fs::path home_dir(const EnvLookup& env) {
  if (auto home = env("HOME"); home && !home->empty()) return *home;
  return fs::current_path();
}

}  // namespace

void AppConfig::validate() const {
  if (default_k < 1) throw Error(Errc::invalid_argument, "default_k must be at least 1");
  if (!(default_threshold >= 0.0 && default_threshold <= 1.0)) {
    throw Error(Errc::invalid_argument, "default_threshold must lie in [0, 1]");
  }
  if (!split_host_port(bind_address)) {
    throw Error(Errc::invalid_argument, "bind_address must be host:port, got '" + bind_address + "'");
  }
  if (default_model.empty()) throw Error(Errc::invalid_argument, "default_model is empty");
}

std::optional<std::string> process_env(const std::string& name) {
  if (const char* v = std::getenv(name.c_str())) return std::string(v);
  return std::nullopt;
}

fs::path default_pictures_dir(const EnvLookup& env) {
  if (auto xdg = env("XDG_PICTURES_DIR"); xdg && !xdg->empty()) return *xdg;
  return home_dir(env) / "Pictures";
}

AppConfig load_app_config(const std::optional<fs::path>& file, const EnvLookup& env) {
  AppConfig cfg;
  cfg.catalog_root = default_pictures_dir(env);
  cfg.model_registry_dir = "models";
  if (auto xdg = env("XDG_CACHE_HOME"); xdg && !xdg->empty()) {
    cfg.index_cache_dir = fs::path(*xdg) / "picsift";
  } else {
    cfg.index_cache_dir = home_dir(env) / ".cache" / "picsift";
  }

  const auto apply = [&](const std::string& key, const std::string& value,
                         const fs::path& base, const std::string& where) {
    const auto as_path = [&] {
      fs::path p(value);
      return p.is_relative() && !base.empty() ? base / p : p;
    };
    if (key == "catalog_root") {
      cfg.catalog_root = as_path();
    } else if (key == "model_registry_dir") {
      cfg.model_registry_dir = as_path();
    } else if (key == "index_cache_dir") {
      cfg.index_cache_dir = as_path();
    } else if (key == "ui_dir") {
      cfg.ui_dir = as_path();
    } else if (key == "default_model") {
      cfg.default_model = value;
    } else if (key == "detector_model") {
      cfg.detector_model = value;
    } else if (key == "default_threshold") {
      const auto v = detail::parse_double(value);
      if (!v) throw Error(Errc::invalid_argument, where + ": default_threshold is not a number");
      cfg.default_threshold = *v;
    } else if (key == "default_k") {
      const auto v = detail::parse_int(value);
      if (!v) throw Error(Errc::invalid_argument, where + ": default_k is not an integer");
      cfg.default_k = static_cast<int>(*v);
    } else if (key == "bind_address") {
      cfg.bind_address = value;
    } else {
      throw Error(Errc::invalid_argument, where + ": unknown config key '" + key + "'");
    }
  };

  if (file) {
    const auto base = file->parent_path();
    for (const auto& kv : detail::parse_key_values(detail::read_text_file(*file), file->string())) {
      apply(kv.key, kv.value, base, file->string() + ":" + std::to_string(kv.line));
    }
  }
  for (const char* key : {"catalog_root", "model_registry_dir", "index_cache_dir", "ui_dir",
                          "default_model", "detector_model", "default_threshold", "default_k",
                          "bind_address"}) {
    std::string var = "PICSIFT_" + std::string(key);
    for (auto& c : var) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (auto v = env(var)) apply(key, *v, {}, var);
  }
  cfg.validate();
  return cfg;
}

ModelRegistry::ModelRegistry(fs::path dir) : descriptors_(scan_model_registry(dir)) {
  for (const auto& d : descriptors_) slots_.emplace(d.model_id, std::make_unique<Slot>());
}

const ModelDescriptor& ModelRegistry::descriptor(const std::string& model_id) const {
  for (const auto& d : descriptors_) {
    if (d.model_id == model_id) return d;
  }
  throw Error(Errc::unknown_model, "no model registered as '" + model_id + "'");
}

ModelHandle ModelRegistry::handle(const std::string& model_id) {
  const auto& d = descriptor(model_id);
  auto& slot = *slots_.at(model_id);
  // A failed load leaves the flag unset, so a later call retries.
  std::call_once(slot.once, [&] { slot.handle = load_model(d); });
  return slot.handle;
}

IndexStore::IndexStore(fs::path cache_dir) : cache_dir_(std::move(cache_dir)) {}

fs::path IndexStore::index_dir(const fs::path& root, const std::string& model_id) const {
  std::error_code ec;
  auto canonical = fs::weakly_canonical(root, ec);
  if (ec) canonical = fs::absolute(root);
  const auto key = to_hex(sha256(canonical.generic_string())).substr(0, 16);
  return cache_dir_ / "indexes" / key / model_id;
}

std::optional<FeatureIndex> IndexStore::load(const fs::path& root,
                                             const std::string& model_id) const {
  const auto dir = index_dir(root, model_id);
  if (!fs::exists(dir / "manifest")) return std::nullopt;
  return load_index(dir);
}

void IndexStore::save(const fs::path& root, const FeatureIndex& index) const {
  save_index(index, index_dir(root, index.model_id()));
}

IndexRefresh refresh_index(const fs::path& root, const ModelHandle& extractor,
                           const IndexStore& store, bool force, const BuildOptions& options) {
  const auto snapshot = scan_directory(root);
  std::optional<FeatureIndex> stored;
  if (!force) {
    try {
      stored = store.load(snapshot.root, extractor.model_id());
    } catch (const Error&) {
      stored.reset();  // unreadable or corrupt: rebuild
    }
  }

  IndexRefresh out;
  if (!stored || stored->model_revision() != extractor.revision() ||
      stored->feature_dim() != static_cast<std::size_t>(extractor.output_dim())) {
    auto built = build_index(snapshot, extractor, options);
    out.index = std::move(built.index);
    out.skipped = std::move(built.skipped);
    out.added = snapshot.entries.size();
    out.rebuilt = true;
    store.save(snapshot.root, out.index);
    return out;
  }

  const auto changes = diff_catalog(stored->as_snapshot(snapshot.root), snapshot);
  out.added = changes.added.size();
  out.removed = changes.removed.size();
  out.modified = changes.modified.size();
  out.unchanged = snapshot.entries.size() - out.added - out.modified;
  if (changes.empty()) {
    out.index = std::move(*stored);
    out.reused = true;
    return out;
  }
  auto updated = update_index(*stored, snapshot.root, changes, extractor, options);
  out.index = std::move(updated.index);
  out.skipped = std::move(updated.skipped);
  store.save(snapshot.root, out.index);
  return out;
}

}  // namespace picsift
