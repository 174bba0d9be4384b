#include "picsift/catalog.hpp"

#include <algorithm>
#include <chrono>

#include "picsift/error.hpp"
#include "text_util.hpp"

namespace fs = std::filesystem;

namespace picsift {

const std::set<std::string>& default_extensions() {
  static const std::set<std::string> exts{"jpg", "jpeg", "png", "bmp", "webp"};
  return exts;
}

const CatalogEntry* CatalogSnapshot::find(const std::string& relative_path) const {
  const auto it = std::lower_bound(
      entries.begin(), entries.end(), relative_path,
      [](const CatalogEntry& e, const std::string& p) { return e.relative_path < p; });
  if (it == entries.end() || it->relative_path != relative_path) return nullptr;
  return &*it;
}

namespace {

std::int64_t to_epoch_seconds(fs::file_time_type t) {
  const auto sys = std::chrono::file_clock::to_sys(t);
  return std::chrono::duration_cast<std::chrono::seconds>(sys.time_since_epoch()).count();
}

bool hidden(const fs::path& p) {
  const auto name = p.filename().string();
  return !name.empty() && name.front() == '.';
}

}  // namespace

bool is_safe_relative_path(const std::string& relative_path) {
  if (relative_path.empty() || relative_path.front() == '/') return false;
  if (relative_path.find('\\') != std::string::npos ||
      relative_path.find('\0') != std::string::npos) {
    return false;
  }
  for (const auto& part : detail::split(relative_path, '/')) {
    if (part.empty() || part == "." || part == "..") return false;
  }
  return true;
}

CatalogSnapshot scan_directory(const fs::path& root,
                               const std::set<std::string>& extensions) {
  std::error_code ec;
  const auto status = fs::status(root, ec);
  if (ec || !fs::exists(status)) {
    throw Error(Errc::root_not_found, "catalog root not found: " + root.string());
  }
  if (!fs::is_directory(status)) {
    throw Error(Errc::root_not_a_directory,
                "catalog root is not a directory: " + root.string());
  }

  CatalogSnapshot snap;
  snap.root = fs::canonical(root);
  snap.taken_at = std::chrono::duration_cast<std::chrono::seconds>(
                      std::chrono::system_clock::now().time_since_epoch())
                      .count();

  fs::recursive_directory_iterator it(
      snap.root, fs::directory_options::skip_permission_denied, ec);
  if (ec) {
    throw Error(Errc::root_not_found,
                "cannot list " + root.string() + ": " + ec.message());
  }
  for (; it != fs::recursive_directory_iterator(); it.increment(ec)) {
    if (ec) break;
    const auto& path = it->path();
    const auto st = it->symlink_status(ec);
    if (ec) continue;
    if (hidden(path)) {
      if (fs::is_directory(st)) it.disable_recursion_pending();
      continue;
    }
    if (fs::is_symlink(st) || !fs::is_regular_file(st)) continue;

    auto ext = path.extension().string();
    if (!ext.empty()) ext.erase(0, 1);
    if (!extensions.contains(detail::to_lower(ext))) continue;

    const auto rel = path.lexically_relative(snap.root).generic_string();
    if (rel.find_first_of("\t\n\r") != std::string::npos) {
      snap.skipped.push_back({rel, "unsupported control character in path"});
      continue;
    }
    try {
      CatalogEntry entry;
      entry.relative_path = rel;
      entry.byte_size = fs::file_size(path);
      entry.modified_time = to_epoch_seconds(fs::last_write_time(path));
      entry.content_hash = sha256_file(path);
      snap.entries.push_back(std::move(entry));
    } catch (const std::exception& e) {
      snap.skipped.push_back({rel, e.what()});
    }
  }
  if (ec) {
    snap.skipped.push_back({"", "directory walk stopped: " + ec.message()});
  }

  std::sort(snap.entries.begin(), snap.entries.end(),
            [](const CatalogEntry& a, const CatalogEntry& b) {
              return a.relative_path < b.relative_path;
            });
  return snap;
}

DecodedImage load_image(const fs::path& root, const CatalogEntry& entry) {
  if (!is_safe_relative_path(entry.relative_path)) {
    throw Error(Errc::bad_path, "unsafe catalog path: " + entry.relative_path);
  }
  return decode_image_file(root / fs::path(entry.relative_path));
}

ChangeSet diff_catalog(const CatalogSnapshot& old, const CatalogSnapshot& now) {
  if (old.root.lexically_normal() != now.root.lexically_normal()) {
    throw Error(Errc::root_mismatch, "cannot diff snapshots of " +
                                         old.root.string() + " and " +
                                         now.root.string());
  }
  ChangeSet changes;
  auto a = old.entries.begin();
  auto b = now.entries.begin();
  while (a != old.entries.end() || b != now.entries.end()) {
    if (b == now.entries.end() ||
        (a != old.entries.end() && a->relative_path < b->relative_path)) {
      changes.removed.push_back(a->relative_path);
      ++a;
    } else if (a == old.entries.end() || b->relative_path < a->relative_path) {
      changes.added.push_back(*b);
      ++b;
    } else {
      if (a->content_hash != b->content_hash) changes.modified.push_back(*b);
      ++a;
      ++b;
    }
  }
  return changes;
}

}  // namespace picsift
