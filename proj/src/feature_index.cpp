#include "picsift/feature_index.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "picsift/error.hpp"
#include "text_util.hpp"

namespace fs = std::filesystem;

namespace picsift {

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw Error(Errc::dimension_mismatch,
                "cosine similarity of vectors with " + std::to_string(a.size()) +
                    " and " + std::to_string(b.size()) + " entries");
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0.0 || nb == 0.0) {
    throw Error(Errc::zero_vector, "cosine similarity is undefined for a zero vector");
  }
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

double cosine_similarity(const FeatureVector& a, const FeatureVector& b) {
  return cosine_similarity(std::span<const float>(a.values), std::span<const float>(b.values));
}

FeatureIndex::FeatureIndex(std::string model_id, std::string model_revision,
                           std::size_t feature_dim)
    : model_id_(std::move(model_id)),
      model_revision_(std::move(model_revision)),
      feature_dim_(feature_dim) {
  if (feature_dim_ == 0) throw Error(Errc::invalid_argument, "feature_dim must be positive");
}

void FeatureIndex::append(const CatalogEntry& entry, std::span<const float> values) {
  if (values.size() != feature_dim_) {
    throw Error(Errc::dimension_mismatch,
                "row for " + entry.relative_path + " has " + std::to_string(values.size()) +
                    " values, index expects " + std::to_string(feature_dim_));
  }
  if (!entries_.empty() && !(entries_.back().relative_path < entry.relative_path)) {
    throw Error(Errc::invalid_argument,
                "rows must be appended in ascending path order: " + entry.relative_path);
  }
  entries_.push_back(entry);
  matrix_.insert(matrix_.end(), values.begin(), values.end());
}

void FeatureIndex::append_skipped(const CatalogEntry& entry) {
  if (!skipped_.empty() && !(skipped_.back().relative_path < entry.relative_path)) {
    throw Error(Errc::invalid_argument,
                "skipped entries must be appended in ascending path order");
  }
  skipped_.push_back(entry);
}

CatalogSnapshot FeatureIndex::as_snapshot(const fs::path& root) const {
  CatalogSnapshot snap;
  snap.root = root;
  snap.entries.reserve(entries_.size() + skipped_.size());
  std::merge(entries_.begin(), entries_.end(), skipped_.begin(), skipped_.end(),
             std::back_inserter(snap.entries),
             [](const CatalogEntry& a, const CatalogEntry& b) {
               return a.relative_path < b.relative_path;
             });
  return snap;
}

namespace {

struct Extracted {
  std::vector<float> values;
  std::string error;  // non-empty on failure
};

// Decodes and embeds entries on a small worker pool; output order matches
// the input order.
std::vector<Extracted> extract_all(const fs::path& root,
                                   const std::vector<CatalogEntry>& entries,
                                   const ModelHandle& extractor,
                                   const BuildOptions& options) {
  std::vector<Extracted> out(entries.size());
  if (entries.empty()) return out;
  unsigned threads = options.threads ? options.threads : std::thread::hardware_concurrency();
  threads = std::clamp<unsigned>(threads, 1, static_cast<unsigned>(entries.size()));

  std::atomic<std::size_t> next{0};
  std::size_t done = 0;
  std::mutex progress_mutex;
  auto work = [&] {
    for (std::size_t i = next++; i < entries.size(); i = next++) {
      try {
        const auto image = load_image(root, entries[i]);
        out[i].values = extractor.extract_features(image).values;
      } catch (const std::exception& e) {
        out[i].error = e.what();
      }
      if (options.progress) {
        std::lock_guard lock(progress_mutex);
        options.progress(++done, entries.size());
      }
    }
  };
  if (threads == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work);
  }
  return out;
}

void require_extractor(const ModelHandle& extractor) {
  if (!extractor || extractor.role() != ModelRole::extractor) {
    throw Error(Errc::role_mismatch, "indexing needs an extractor model");
  }
}

}  // namespace

IndexBuild build_index(const CatalogSnapshot& snapshot, const ModelHandle& extractor,
                       const BuildOptions& options) {
  require_extractor(extractor);
  IndexBuild result;
  result.index = FeatureIndex(extractor.model_id(), extractor.revision(),
                              static_cast<std::size_t>(extractor.output_dim()));
  const auto extracted = extract_all(snapshot.root, snapshot.entries, extractor, options);
  for (std::size_t i = 0; i < snapshot.entries.size(); ++i) {
    const auto& entry = snapshot.entries[i];
    if (extracted[i].error.empty()) {
      result.index.append(entry, extracted[i].values);
    } else {
      result.index.append_skipped(entry);
      result.skipped.push_back({entry.relative_path, extracted[i].error});
    }
  }
  return result;
}

IndexBuild update_index(const FeatureIndex& index, const fs::path& root,
                        const ChangeSet& changes, const ModelHandle& extractor,
                        const BuildOptions& options) {
  require_extractor(extractor);
  if (index.model_id() != extractor.model_id()) {
    throw Error(Errc::model_mismatch, "index was built by " + index.model_id() +
                                          ", extractor is " + extractor.model_id());
  }
  if (index.model_revision() != extractor.revision()) {
    throw Error(Errc::revision_mismatch,
                "model file for " + index.model_id() + " changed; rebuild the index");
  }

  std::set<std::string> dropped(changes.removed.begin(), changes.removed.end());
  std::vector<CatalogEntry> fresh;
  for (const auto* list : {&changes.added, &changes.modified}) {
    for (const auto& e : *list) {
      dropped.insert(e.relative_path);
      fresh.push_back(e);
    }
  }
  std::sort(fresh.begin(), fresh.end(), [](const auto& a, const auto& b) {
    return a.relative_path < b.relative_path;
  });
  fresh.erase(std::unique(fresh.begin(), fresh.end(),
                          [](const auto& a, const auto& b) {
                            return a.relative_path == b.relative_path;
                          }),
              fresh.end());
  const auto extracted = extract_all(root, fresh, extractor, options);

  IndexBuild result;
  result.index = FeatureIndex(index.model_id(), index.model_revision(), index.feature_dim());

  // Merge surviving rows with freshly extracted ones, preserving path order.
  std::size_t old_i = 0, new_i = 0;
  const auto& old_entries = index.entries();
  std::vector<CatalogEntry> skipped;
  while (old_i < old_entries.size() || new_i < fresh.size()) {
    if (old_i < old_entries.size() && dropped.contains(old_entries[old_i].relative_path)) {
      ++old_i;
      continue;
    }
    const bool take_old =
        new_i == fresh.size() ||
        (old_i < old_entries.size() &&
         old_entries[old_i].relative_path < fresh[new_i].relative_path);
    if (take_old) {
      result.index.append(old_entries[old_i], index.row(old_i));
      ++old_i;
    } else {
      if (extracted[new_i].error.empty()) {
        result.index.append(fresh[new_i], extracted[new_i].values);
      } else {
        skipped.push_back(fresh[new_i]);
        result.skipped.push_back({fresh[new_i].relative_path, extracted[new_i].error});
      }
      ++new_i;
    }
  }
  for (const auto& e : index.skipped()) {
    if (!dropped.contains(e.relative_path)) skipped.push_back(e);
  }
  std::sort(skipped.begin(), skipped.end(), [](const auto& a, const auto& b) {
    return a.relative_path < b.relative_path;
  });
  for (const auto& e : skipped) result.index.append_skipped(e);
  return result;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

constexpr std::string_view kMagic = "picsift-index";

std::string matrix_bytes(std::span<const float> m) {
  std::string bytes(m.size() * sizeof(float), '\0');
  for (std::size_t i = 0; i < m.size(); ++i) {
    std::uint32_t bits = std::bit_cast<std::uint32_t>(m[i]);
    for (int b = 0; b < 4; ++b) {
      bytes[i * 4 + b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
    }
  }
  return bytes;
}

void write_entry(std::ostringstream& out, const CatalogEntry& e) {
  out << e.relative_path << '\t' << to_hex(e.content_hash) << '\t' << e.byte_size << '\t'
      << e.modified_time;
}

CatalogEntry parse_entry(const std::vector<std::string>& cols, const std::string& where) {
  CatalogEntry e;
  e.relative_path = cols[0];
  if (!is_safe_relative_path(e.relative_path)) {
    throw Error(Errc::index_inconsistent, where + ": unsafe path");
  }
  try {
    e.content_hash = digest_from_hex(cols[1]);
  } catch (const Error&) {
    throw Error(Errc::index_inconsistent, where + ": bad content hash");
  }
  const auto size = detail::parse_uint(cols[2]);
  const auto mtime = detail::parse_int(cols[3]);
  if (!size || !mtime) throw Error(Errc::index_inconsistent, where + ": bad size or mtime");
  e.byte_size = *size;
  e.modified_time = *mtime;
  return e;
}

}  // namespace

void save_index(const FeatureIndex& index, const fs::path& dir) {
  fs::create_directories(dir);
  const auto bytes = matrix_bytes(index.matrix());
  std::ostringstream man;
  man << kMagic << '\n'
      << "schema_version " << FeatureIndex::kSchemaVersion << '\n'
      << "model_id " << index.model_id() << '\n'
      << "model_revision " << index.model_revision() << '\n'
      << "feature_dim " << index.feature_dim() << '\n'
      << "row_count " << index.size() << '\n'
      << "features_sha256 " << to_hex(sha256(bytes)) << '\n'
      << "skipped_count " << index.skipped().size() << '\n'
      << "rows\n";
  for (std::size_t i = 0; i < index.size(); ++i) {
    write_entry(man, index.entries()[i]);
    man << '\t' << i << '\n';
  }
  man << "skipped\n";
  for (const auto& e : index.skipped()) {
    write_entry(man, e);
    man << '\n';
  }
  // Matrix first: a reader that races the manifest rename sees a checksum
  // mismatch rather than a silently wrong matrix.
  detail::write_file_atomic(dir / "features.bin", bytes);
  detail::write_file_atomic(dir / "manifest", man.str());
}

FeatureIndex load_index(const fs::path& dir) {
  const auto man_path = dir / "manifest";
  const auto bin_path = dir / "features.bin";
  if (!fs::exists(man_path) || !fs::exists(bin_path)) {
    throw Error(Errc::io_error, "no index in " + dir.string());
  }
  const auto text = detail::read_text_file(man_path);
  const auto lines = detail::split(text, '\n');
  std::size_t li = 0;
  const auto where = [&] { return man_path.string() + ":" + std::to_string(li + 1); };
  const auto next_line = [&]() -> const std::string& {
    if (li >= lines.size()) throw Error(Errc::index_inconsistent, where() + ": truncated manifest");
    return lines[li++];
  };
  const auto header = [&](std::string_view key) {
    const auto& line = next_line();
    if (line.rfind(std::string(key) + " ", 0) != 0) {
      throw Error(Errc::index_inconsistent, where() + ": expected '" + std::string(key) + "'");
    }
    return line.substr(key.size() + 1);
  };

  if (next_line() != kMagic) throw Error(Errc::schema_unsupported, "not an index manifest");
  const auto schema = detail::parse_int(header("schema_version"));
  if (!schema || *schema != FeatureIndex::kSchemaVersion) {
    throw Error(Errc::schema_unsupported, "unsupported index schema version");
  }
  const auto model_id = header("model_id");
  const auto revision = header("model_revision");
  const auto dim = detail::parse_uint(header("feature_dim"));
  const auto rows = detail::parse_uint(header("row_count"));
  const auto checksum = header("features_sha256");
  const auto skipped = detail::parse_uint(header("skipped_count"));
  if (!dim || *dim == 0 || !rows || !skipped) {
    throw Error(Errc::index_inconsistent, man_path.string() + ": bad counts");
  }
  if (next_line() != "rows") throw Error(Errc::index_inconsistent, where() + ": expected 'rows'");

  const auto bytes = detail::read_text_file(bin_path);
  if (bytes.size() != *rows * *dim * sizeof(float)) {
    throw Error(Errc::index_inconsistent,
                "features.bin holds " + std::to_string(bytes.size()) + " bytes, manifest implies " +
                    std::to_string(*rows) + " x " + std::to_string(*dim) + " floats");
  }
  if (to_hex(sha256(bytes)) != checksum) {
    throw Error(Errc::checksum_mismatch, "features.bin does not match its manifest checksum");
  }

  FeatureIndex index(model_id, revision, *dim);
  std::vector<float> row(*dim);
  for (std::size_t r = 0; r < *rows; ++r) {
    const auto cols = detail::split(next_line(), '\t');
    if (cols.size() != 5) throw Error(Errc::index_inconsistent, where() + ": expected 5 columns");
    const auto ordinal = detail::parse_uint(cols[4]);
    if (!ordinal || *ordinal != r) {
      throw Error(Errc::index_inconsistent, where() + ": row ordinal out of order");
    }
    const auto entry = parse_entry(cols, where());
    for (std::size_t j = 0; j < *dim; ++j) {
      std::uint32_t bits = 0;
      const std::size_t off = (r * *dim + j) * 4;
      for (int b = 0; b < 4; ++b) {
        bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[off + b])) << (8 * b);
      }
      row[j] = std::bit_cast<float>(bits);
    }
    try {
      index.append(entry, row);
    } catch (const Error& e) {
      throw Error(Errc::index_inconsistent, where() + ": " + e.what());
    }
  }
  if (next_line() != "skipped") {
    throw Error(Errc::index_inconsistent, where() + ": expected 'skipped'");
  }
  for (std::size_t s = 0; s < *skipped; ++s) {
    const auto cols = detail::split(next_line(), '\t');
    if (cols.size() != 4) throw Error(Errc::index_inconsistent, where() + ": expected 4 columns");
    try {
      index.append_skipped(parse_entry(cols, where()));
    } catch (const Error& e) {
      throw Error(Errc::index_inconsistent, where() + ": " + e.what());
    }
  }
  while (li < lines.size()) {
    if (!detail::trim(lines[li]).empty()) {
      throw Error(Errc::index_inconsistent, where() + ": trailing content");
    }
    ++li;
  }
  return index;
}

// ---------------------------------------------------------------------------
// Ranking

RankedResults rank(const FeatureIndex& index, const FeatureVector& query, std::size_t k) {
  if (k == 0) throw Error(Errc::invalid_argument, "k must be positive");
  if (query.model_id != index.model_id()) {
    throw Error(Errc::model_mismatch, "query embedded by " + query.model_id +
                                          ", index built by " + index.model_id());
  }
  if (query.values.size() != index.feature_dim()) {
    throw Error(Errc::dimension_mismatch, "query has " + std::to_string(query.values.size()) +
                                              " values, index rows have " +
                                              std::to_string(index.feature_dim()));
  }
  double qn = 0.0;
  for (float v : query.values) qn += static_cast<double>(v) * v;
  if (qn == 0.0) throw Error(Errc::zero_vector, "query vector is zero");
  qn = std::sqrt(qn);

  const std::size_t n = index.size();
  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = index.row(i);
    double dot = 0.0, rn = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) {
      dot += static_cast<double>(query.values[j]) * row[j];
      rn += static_cast<double>(row[j]) * row[j];
    }
    scores[i] = rn == 0.0 ? 0.0 : std::clamp(dot / (qn * std::sqrt(rn)), -1.0, 1.0);
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const auto& entries = index.entries();
  const auto better = [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return entries[a].relative_path < entries[b].relative_path;
  };
  const std::size_t m = std::min(k, n);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(m), order.end(),
                    better);

  RankedResults out;
  out.items.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    out.items.push_back({entries[order[i]].relative_path, scores[order[i]]});
  }
  return out;
}

}  // namespace picsift
