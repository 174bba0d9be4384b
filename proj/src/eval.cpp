#include "picsift/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "picsift/error.hpp"
#include "picsift/query.hpp"
#include "text_util.hpp"

namespace fs = std::filesystem;

namespace picsift {

std::set<std::string> DatasetManifest::relevant_paths(const std::string& prompt) const {
  const auto it = prompt_map.find(prompt);
  if (it == prompt_map.end()) {
    throw Error(Errc::invalid_argument, "prompt \"" + prompt + "\" is not in the prompt map");
  }
  std::set<std::string> out;
  for (const auto& e : entries) {
    for (const auto& label : e.labels) {
      if (it->second.contains(label)) {
        out.insert(e.relative_path);
        break;
      }
    }
  }
  return out;
}

namespace {

std::set<std::string> parse_label_list(const std::string& field) {
  std::set<std::string> out;
  for (const auto& part : detail::split(field, ',')) {
    const auto label = detail::trim(part);
    if (!label.empty()) out.emplace(label);
  }
  return out;
}

}  // namespace

DatasetManifest load_dataset_manifest(const fs::path& labels, const fs::path& prompts,
                                      const fs::path& root) {
  DatasetManifest m;
  m.root = root;
  std::set<std::string> seen;
  std::set<std::string> all_labels;
  for (const auto& [cols, line] : detail::parse_tsv(detail::read_text_file(labels))) {
    const auto where = labels.string() + ":" + std::to_string(line);
    if (cols.size() != 2) throw Error(Errc::invalid_manifest, where + ": expected path<TAB>labels");
    LabeledImage img{cols[0], parse_label_list(cols[1])};
    if (!is_safe_relative_path(img.relative_path)) {
      throw Error(Errc::invalid_manifest, where + ": unsafe path " + img.relative_path);
    }
    if (img.labels.empty()) throw Error(Errc::invalid_manifest, where + ": no labels");
    if (!seen.insert(img.relative_path).second) {
      throw Error(Errc::invalid_manifest, where + ": duplicate path " + img.relative_path);
    }
    if (!fs::is_regular_file(root / img.relative_path)) {
      throw Error(Errc::invalid_manifest, where + ": missing file " + img.relative_path);
    }
    all_labels.insert(img.labels.begin(), img.labels.end());
    m.entries.push_back(std::move(img));
  }
  for (const auto& [cols, line] : detail::parse_tsv(detail::read_text_file(prompts))) {
    const auto where = prompts.string() + ":" + std::to_string(line);
    if (cols.size() != 2) {
      throw Error(Errc::invalid_manifest, where + ": expected prompt<TAB>categories");
    }
    const auto categories = parse_label_list(cols[1]);
    const bool present = std::any_of(categories.begin(), categories.end(),
                                     [&](const auto& c) { return all_labels.contains(c); });
    if (!present) {
      throw Error(Errc::invalid_manifest,
                  where + ": prompt \"" + cols[0] + "\" maps to no category in the dataset");
    }
    if (!m.prompt_map.emplace(cols[0], categories).second) {
      throw Error(Errc::invalid_manifest, where + ": duplicate prompt " + cols[0]);
    }
  }
  std::sort(m.entries.begin(), m.entries.end(), [](const auto& a, const auto& b) {
    return a.relative_path < b.relative_path;
  });
  return m;
}

double accuracy(const RankedResults& results, const std::set<std::string>& relevant) {
  if (results.items.empty()) throw Error(Errc::empty_results, "accuracy of an empty result list");
  const auto correct = std::count_if(results.items.begin(), results.items.end(),
                                     [&](const auto& it) { return relevant.contains(it.relative_path); });
  return static_cast<double>(correct) / static_cast<double>(results.items.size());
}

namespace {

double percentile(const std::vector<double>& sorted, double p) {
  if (sorted.size() == 1) return sorted.front();
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - static_cast<double>(lo));
}

}  // namespace

TimingStats benchmark_inference(const ModelHandle& extractor,
                                std::span<const DecodedImage> images, int warmup, int repeats) {
  if (repeats < 1) throw Error(Errc::invalid_argument, "repeats must be at least 1");
  if (warmup < 0) throw Error(Errc::invalid_argument, "warmup must be non-negative");
  if (images.empty()) throw Error(Errc::invalid_argument, "no images to benchmark");
  for (int w = 0; w < warmup; ++w) {
    for (const auto& img : images) (void)extractor.extract_features(img);
  }
  std::vector<double> samples;
  samples.reserve(images.size() * static_cast<std::size_t>(repeats));
  for (int r = 0; r < repeats; ++r) {
    for (const auto& img : images) {
      const auto t0 = std::chrono::steady_clock::now();
      (void)extractor.extract_features(img);
      samples.push_back(
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
              .count());
    }
  }
  TimingStats stats;
  stats.samples = samples.size();
  stats.mean_ms = std::accumulate(samples.begin(), samples.end(), 0.0) /
                  static_cast<double>(samples.size());
  std::sort(samples.begin(), samples.end());
  stats.p50_ms = percentile(samples, 0.50);
  stats.p95_ms = percentile(samples, 0.95);
  return stats;
}

std::size_t EvalReport::prompt_not_found() const {
  return static_cast<std::size_t>(std::count_if(
      cells.begin(), cells.end(), [](const EvalCell& c) { return !c.accuracy; }));
}

std::optional<double> EvalReport::mean_accuracy(const std::string& prompt,
                                                const std::string& model_id) const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& c : cells) {
    if (c.prompt == prompt && c.model_id == model_id && c.accuracy) {
      sum += *c.accuracy;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

EvalReport run_prompt_eval(const DatasetManifest& manifest, std::span<const EvalModel> models,
                           const ModelHandle& detector, const std::vector<std::string>& prompts,
                           const std::vector<double>& thresholds,
                           const std::vector<std::uint64_t>& seeds, std::size_t k) {
  if (prompts.empty() || thresholds.empty() || seeds.empty() || models.empty()) {
    throw Error(Errc::invalid_argument, "evaluation needs prompts, thresholds, seeds and models");
  }
  EvalReport report;
  report.prompts = prompts;
  report.thresholds = thresholds;
  report.seeds = seeds;
  report.k = k;

  const auto snapshot = scan_directory(manifest.root);
  std::map<std::string, std::set<std::string>> relevant;
  for (const auto& p : prompts) relevant[p] = manifest.relevant_paths(p);

  for (const auto& m : models) {
    ModelSummary summary;
    summary.model_id = m.extractor.model_id();
    if (m.extractor.descriptor().backend == "onnx") {
      summary.size_bytes = model_size(m.extractor.descriptor());
    }
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& prompt : prompts) {
      for (double t : thresholds) {
        for (auto seed : seeds) {
          QuerySpec spec;
          spec.prompt = prompt;
          spec.threshold = t;
          spec.k = k;
          spec.seed = seed;
          EvalCell cell{prompt, summary.model_id, t, seed, std::nullopt};
          try {
            const auto outcome = search(snapshot, spec, m.extractor, detector, m.index);
            cell.accuracy = accuracy(outcome.results, relevant[prompt]);
            sum += *cell.accuracy;
            ++n;
          } catch (const Error& e) {
            if (e.code() != Errc::prompt_not_found) throw;
            ++summary.missing_cells;
          }
          report.cells.push_back(std::move(cell));
        }
      }
    }
    if (n > 0) summary.mean_accuracy = sum / static_cast<double>(n);
    report.models.push_back(std::move(summary));
  }
  // Cells are grouped prompt-major in the report regardless of model order.
  std::stable_sort(report.cells.begin(), report.cells.end(),
                   [&](const EvalCell& a, const EvalCell& b) {
                     const auto pa = std::find(prompts.begin(), prompts.end(), a.prompt);
                     const auto pb = std::find(prompts.begin(), prompts.end(), b.prompt);
                     return pa < pb;
                   });
  return report;
}

// ---------------------------------------------------------------------------
// Rendering

namespace {

const std::string kMissing = "—";

std::string fmt(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

// Display width in code points, enough for the dash used for missing cells.
std::size_t display_width(const std::string& s) {
  return static_cast<std::size_t>(
      std::count_if(s.begin(), s.end(), [](char c) { return (c & 0xC0) != 0x80; }));
}

std::string table(const std::vector<std::string>& header,
                  const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    width[c] = display_width(header[c]);
    for (const auto& r : rows) width[c] = std::max(width[c], display_width(r[c]));
  }
  std::ostringstream out;
  const auto line = [&](const std::vector<std::string>& cells) {
    std::string s;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c) s += "  ";
      s += cells[c];
      if (c + 1 < cells.size()) s.append(width[c] - display_width(cells[c]), ' ');
    }
    out << s << '\n';
  };
  line(header);
  std::vector<std::string> rule;
  for (auto w : width) rule.emplace_back(w, '-');
  line(rule);
  for (const auto& r : rows) line(r);
  return out.str();
}

nlohmann::ordered_json optional_number(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

}  // namespace

RenderedReport render_report(const EvalReport& report) {
  RenderedReport out;

  std::vector<std::vector<std::string>> prompt_rows;
  std::size_t missing_pairs = 0;
  for (const auto& prompt : report.prompts) {
    for (const auto& m : report.models) {
      if (!m.failure.empty()) continue;
      const auto acc = report.mean_accuracy(prompt, m.model_id);
      if (!acc) ++missing_pairs;
      prompt_rows.push_back({prompt, m.model_id, acc ? fmt(*acc, 3) : kMissing});
    }
  }
  std::vector<std::vector<std::string>> model_rows;
  for (const auto& m : report.models) {
    model_rows.push_back({
        m.model_id,
        m.mean_accuracy ? fmt(*m.mean_accuracy, 3) : kMissing,
        m.timing ? fmt(m.timing->mean_ms, 1) : kMissing,
        m.size_bytes ? fmt(static_cast<double>(*m.size_bytes) / (1024.0 * 1024.0), 1) : kMissing,
    });
  }

  std::ostringstream text;
  text << "Prompt results (k=" << report.k << ", " << report.thresholds.size()
       << " threshold(s) x " << report.seeds.size() << " seed(s))\n\n"
       << table({"Prompt", "Model", "Accuracy"}, prompt_rows);
  if (report.prompt_not_found() > 0 || missing_pairs > 0) {
    text << "\n" << kMissing << " prompt not found in " << report.prompt_not_found() << " of "
         << report.cells.size() << " cells; missing cells are excluded from means.\n";
  }
  text << "\nModel comparison\n\n"
       << table({"Model", "Avg accuracy", "ms CPU", "Size (MB)"}, model_rows);
  for (const auto& m : report.models) {
    if (!m.failure.empty()) text << "\n" << m.model_id << ": " << m.failure << '\n';
  }
  out.text = text.str();

  auto& j = out.json;
  j["k"] = report.k;
  j["prompts"] = report.prompts;
  j["thresholds"] = report.thresholds;
  j["seeds"] = report.seeds;
  j["prompt_not_found"] = report.prompt_not_found();
  auto cells = nlohmann::ordered_json::array();
  for (const auto& c : report.cells) {
    nlohmann::ordered_json cell;
    cell["prompt"] = c.prompt;
    cell["model"] = c.model_id;
    cell["threshold"] = c.threshold;
    cell["seed"] = c.seed;
    cell["accuracy"] = optional_number(c.accuracy);
    cells.push_back(std::move(cell));
  }
  j["cells"] = std::move(cells);
  auto models = nlohmann::ordered_json::array();
  for (const auto& m : report.models) {
    nlohmann::ordered_json mj;
    mj["model"] = m.model_id;
    mj["avg_accuracy"] = optional_number(m.mean_accuracy);
    if (m.timing) {
      mj["ms_cpu"] = {{"mean", m.timing->mean_ms},
                      {"p50", m.timing->p50_ms},
                      {"p95", m.timing->p95_ms},
                      {"samples", m.timing->samples}};
    } else {
      mj["ms_cpu"] = nullptr;
    }
    mj["size_bytes"] = m.size_bytes ? nlohmann::ordered_json(*m.size_bytes) : nullptr;
    mj["missing_cells"] = m.missing_cells;
    if (!m.failure.empty()) mj["failure"] = m.failure;
    models.push_back(std::move(mj));
  }
  j["models"] = std::move(models);
  return out;
}

void write_report(const RenderedReport& rendered, const fs::path& dir) {
  fs::create_directories(dir);
  detail::write_file_atomic(dir / "report.txt", rendered.text);
  detail::write_file_atomic(dir / "report.json", rendered.json.dump(2) + "\n");
}

}  // namespace picsift
