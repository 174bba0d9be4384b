#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "picsift/feature_index.hpp"
#include "picsift/inference.hpp"
#include "picsift/model.hpp"

namespace picsift {

struct AppConfig {
  std::filesystem::path catalog_root;
  std::filesystem::path model_registry_dir;
  std::filesystem::path index_cache_dir;
  std::filesystem::path ui_dir;
  std::string default_model = "resnet50";
  std::string detector_model = "owlvit-base";
  double default_threshold = 0.1;
  int default_k = 10;
  std::string bind_address = "127.0.0.1:8765";

  void validate() const;
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

/// The process environment.
std::optional<std::string> process_env(const std::string& name);

/// The user's Pictures directory ($XDG_PICTURES_DIR, else $HOME/Pictures).
std::filesystem::path default_pictures_dir(const EnvLookup& env = process_env);

/// Defaults, then the key = value config file (if given), then PICSIFT_*
/// environment variables (PICSIFT_CATALOG_ROOT, PICSIFT_MODEL_REGISTRY_DIR,
/// PICSIFT_INDEX_CACHE_DIR, PICSIFT_UI_DIR, PICSIFT_DEFAULT_MODEL,
/// PICSIFT_DETECTOR_MODEL, PICSIFT_DEFAULT_THRESHOLD, PICSIFT_DEFAULT_K,
/// PICSIFT_BIND_ADDRESS).
AppConfig load_app_config(const std::optional<std::filesystem::path>& file,
                          const EnvLookup& env = process_env);

// Model manifests found in one directory. Handles are loaded on first use
// and cached; concurrent first uses load once.
class ModelRegistry {
 public:
  explicit ModelRegistry(std::filesystem::path dir);

  const std::vector<ModelDescriptor>& descriptors() const {
    return descriptors_;
  }
  /// Error(unknown_model) if the id is not registered.
  const ModelDescriptor& descriptor(const std::string& model_id) const;
  ModelHandle handle(const std::string& model_id);

 private:
  struct Slot {
    std::once_flag once;
    ModelHandle handle;
  };
  std::vector<ModelDescriptor> descriptors_;
  std::map<std::string, std::unique_ptr<Slot>> slots_;
};

// On-disk indexes, one directory per (catalog root, model id).
class IndexStore {
 public:
  explicit IndexStore(std::filesystem::path cache_dir);

  std::filesystem::path index_dir(const std::filesystem::path& root,
                                  const std::string& model_id) const;
  std::optional<FeatureIndex> load(const std::filesystem::path& root,
                                   const std::string& model_id) const;
  void save(const std::filesystem::path& root, const FeatureIndex& index) const;
  const std::filesystem::path& cache_dir() const { return cache_dir_; }

 private:
  std::filesystem::path cache_dir_;
};

struct IndexRefresh {
  FeatureIndex index;
  std::size_t added = 0;
  std::size_t removed = 0;
  std::size_t modified = 0;
  std::size_t unchanged = 0;
  std::vector<SkippedFile> skipped;
  bool rebuilt = false;  // full build (no usable index, new model, --force)
  bool reused = false;   // nothing changed, stored index used as-is
};

/// Brings the stored index for (root, extractor) up to date with the
/// directory: full build when missing, forced or built by another model
/// revision, diff-driven update otherwise. Persists the result.
IndexRefresh refresh_index(const std::filesystem::path& root,
                           const ModelHandle& extractor, const IndexStore& store,
                           bool force, const BuildOptions& options = {});

}  // namespace picsift
