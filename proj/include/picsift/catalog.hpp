#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "picsift/hash.hpp"
#include "picsift/image.hpp"

namespace picsift {

struct CatalogEntry {
  std::string relative_path;  // forward slashes, relative to the catalog root
  Digest content_hash{};
  std::uint64_t byte_size = 0;
  std::int64_t modified_time = 0;  // seconds since epoch

  friend bool operator==(const CatalogEntry&, const CatalogEntry&) = default;
};

struct SkippedFile {
  std::string relative_path;
  std::string reason;
};

struct CatalogSnapshot {
  std::filesystem::path root;         // absolute, canonical
  std::vector<CatalogEntry> entries;  // ascending by relative_path
  std::int64_t taken_at = 0;
  std::vector<SkippedFile> skipped;   // unreadable files seen during the scan

  const CatalogEntry* find(const std::string& relative_path) const;
};

struct ChangeSet {
  std::vector<CatalogEntry> added;
  std::vector<std::string> removed;
  std::vector<CatalogEntry> modified;

  bool empty() const {
    return added.empty() && removed.empty() && modified.empty();
  }
  std::size_t size() const {
    return added.size() + removed.size() + modified.size();
  }
};

const std::set<std::string>& default_extensions();

/// Recursively lists regular files under root whose lowercase extension is in
/// `extensions`. Dot-prefixed files and directories are skipped and symlinks
/// are not followed. Files that cannot be read are reported in `skipped`.
CatalogSnapshot scan_directory(
    const std::filesystem::path& root,
    const std::set<std::string>& extensions = default_extensions());

/// Decodes the entry's file. Throws Error(decode_error) for corrupt or
/// unsupported files.
DecodedImage load_image(const std::filesystem::path& root,
                        const CatalogEntry& entry);

/// Paths only in `now` are added, only in `old` removed, in both with a
/// different content hash modified. Throws Error(root_mismatch).
ChangeSet diff_catalog(const CatalogSnapshot& old, const CatalogSnapshot& now);

/// True when the relative path is safe to join onto a root: non-empty,
/// not absolute, no "." or ".." components, no backslashes or NUL.
bool is_safe_relative_path(const std::string& relative_path);

}  // namespace picsift
