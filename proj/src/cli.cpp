#include "picsift/cli.hpp"

#include <algorithm>
#include <csignal>
#include <cstdio>
#include <iostream>

#include "CLI11.hpp"
#include "picsift/api.hpp"
#include "picsift/error.hpp"
#include "picsift/eval.hpp"
#include "picsift/query.hpp"
#include "picsift/server.hpp"
#include "picsift/workspace.hpp"

namespace fs = std::filesystem;

namespace picsift {

namespace {

struct CommonFlags {
  std::string config_file;
  std::string models_dir;
  std::string cache_dir;
  std::string detector;
  unsigned threads = 0;
};

AppConfig resolve_config(const CommonFlags& flags) {
  std::optional<fs::path> file;
  if (!flags.config_file.empty()) file = flags.config_file;
  auto cfg = load_app_config(file);
  if (!flags.models_dir.empty()) cfg.model_registry_dir = flags.models_dir;
  if (!flags.cache_dir.empty()) cfg.index_cache_dir = flags.cache_dir;
  if (!flags.detector.empty()) cfg.detector_model = flags.detector;
  return cfg;
}

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

void print_refresh(const IndexRefresh& r, std::ostream& out) {
  if (r.rebuilt) {
    out << "indexed " << r.index.size() << " images";
  } else if (r.reused) {
    out << "0 changed, index reused (" << r.index.size() << " images)";
  } else {
    out << (r.added + r.removed + r.modified) << " changed (added " << r.added << ", removed "
        << r.removed << ", modified " << r.modified << ", unchanged " << r.unchanged
        << "), index has " << r.index.size() << " images";
  }
  if (!r.skipped.empty()) out << ", " << r.skipped.size() << " skipped";
  out << '\n';
}

BuildOptions progress_options(unsigned threads, std::ostream& err) {
  BuildOptions opts;
  opts.threads = threads;
  opts.progress = [&err](std::size_t done, std::size_t total) {
    if (done == total || done % 25 == 0) err << "  extracting " << done << "/" << total << '\n';
  };
  return opts;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

// ---------------------------------------------------------------------------

struct IndexFlags {
  std::string dir;
  std::string model;
  bool force = false;
};

int cmd_index(const CommonFlags& common, const IndexFlags& f, std::ostream& out,
              std::ostream& err) {
  const auto cfg = resolve_config(common);
  ModelRegistry registry(cfg.model_registry_dir);
  const auto model = f.model.empty() ? cfg.default_model : f.model;
  const auto root = f.dir.empty() ? cfg.catalog_root : fs::path(f.dir);
  const auto extractor = registry.handle(model);
  const auto refresh = refresh_index(root, extractor, IndexStore(cfg.index_cache_dir), f.force,
                                     progress_options(common.threads, err));
  for (const auto& s : refresh.skipped) err << "skipped " << s.relative_path << ": " << s.reason << '\n';
  print_refresh(refresh, out);
  return kExitOk;
}

struct SearchFlags {
  std::string dir;
  std::string prompt;
  std::optional<double> threshold;
  std::optional<std::size_t> k;
  std::string model;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> max_attempts;
  double pad = 0.0;
  bool json = false;
};

int cmd_search(const CommonFlags& common, const SearchFlags& f, std::ostream& out,
               std::ostream& err) {
  const auto cfg = resolve_config(common);
  QuerySpec spec;
  spec.prompt = f.prompt;
  spec.threshold = f.threshold.value_or(cfg.default_threshold);
  spec.k = f.k.value_or(static_cast<std::size_t>(cfg.default_k));
  spec.seed = f.seed;
  spec.max_attempts = f.max_attempts;
  spec.pad_fraction = f.pad;
  spec.validate();

  ModelRegistry registry(cfg.model_registry_dir);
  const auto model = f.model.empty() ? cfg.default_model : f.model;
  const auto root = f.dir.empty() ? cfg.catalog_root : fs::path(f.dir);
  const auto extractor = registry.handle(model);
  const auto detector = registry.handle(cfg.detector_model);

  auto refresh = refresh_index(root, extractor, IndexStore(cfg.index_cache_dir), false,
                               progress_options(common.threads, err));
  if (!refresh.reused) {
    err << "index was out of date, updated: ";
    print_refresh(refresh, err);
  }
  const auto outcome = search(root, spec, extractor, detector, refresh.index);

  if (f.json) {
    out << search_response_json(outcome, model).dump(2) << '\n';
    return kExitOk;
  }
  int rank = 0;
  for (const auto& item : outcome.results.items) {
    out << ++rank << "  " << fixed(item.score, 4) << "  " << item.relative_path << '\n';
  }
  if (const auto& p = outcome.results.provenance) {
    err << "query crop from " << p->source_path << " box (" << fixed(p->bbox.x_min, 1) << ", "
        << fixed(p->bbox.y_min, 1) << ", " << fixed(p->bbox.x_max, 1) << ", "
        << fixed(p->bbox.y_max, 1) << ") detector score " << fixed(p->detector_score, 3)
        << ", seed " << p->seed << ", attempt " << p->attempts << '\n';
  }
  return kExitOk;
}

struct BenchFlags {
  std::string labels;
  std::string prompts_file;
  std::string root;
  std::string models;
  std::string prompts;
  std::string thresholds = "0.05,0.1,0.2,0.3";
  std::string seeds = "1,2,3";
  std::size_t k = 10;
  std::string out_dir = "bench-report";
  int warmup = 2;
  int repeats = 3;
};

int cmd_bench(const CommonFlags& common, const BenchFlags& f, std::ostream& out,
              std::ostream& err) {
  const auto cfg = resolve_config(common);
  const fs::path labels(f.labels);
  const fs::path prompts_file =
      f.prompts_file.empty() ? labels.parent_path() / "prompts.tsv" : fs::path(f.prompts_file);
  fs::path root = f.root.empty() ? labels.parent_path() : fs::path(f.root);
  if (f.root.empty() && fs::is_directory(root / "images")) root /= "images";
  const auto manifest = load_dataset_manifest(labels, prompts_file, root);

  std::vector<std::string> prompts = split_list(f.prompts);
  if (prompts.empty()) {
    for (const auto& [p, _] : manifest.prompt_map) prompts.push_back(p);
  }
  std::vector<double> thresholds;
  for (const auto& t : split_list(f.thresholds)) thresholds.push_back(std::stod(t));
  std::vector<std::uint64_t> seeds;
  for (const auto& s : split_list(f.seeds)) seeds.push_back(std::stoull(s));

  ModelRegistry registry(cfg.model_registry_dir);
  std::vector<std::string> model_ids = split_list(f.models);
  if (model_ids.empty()) {
    for (const auto& d : registry.descriptors()) {
      if (d.role == ModelRole::extractor) model_ids.push_back(d.model_id);
    }
  }
  const auto detector = registry.handle(cfg.detector_model);
  const IndexStore store(cfg.index_cache_dir);

  std::vector<DecodedImage> images;
  if (f.repeats > 0) {
    for (const auto& e : manifest.entries) images.push_back(decode_image_file(root / e.relative_path));
  }

  EvalReport report;
  report.prompts = prompts;
  report.thresholds = thresholds;
  report.seeds = seeds;
  report.k = f.k;
  std::size_t failures = 0;
  for (const auto& id : model_ids) {
    err << "evaluating " << id << '\n';
    try {
      EvalModel m{registry.handle(id), {}};
      m.index = refresh_index(root, m.extractor, store, false,
                              progress_options(common.threads, err)).index;
      auto one = run_prompt_eval(manifest, std::span(&m, 1), detector, prompts, thresholds,
                                 seeds, f.k);
      auto summary = one.models.front();
      if (f.repeats > 0) summary.timing = benchmark_inference(m.extractor, images, f.warmup, f.repeats);
      report.cells.insert(report.cells.end(), one.cells.begin(), one.cells.end());
      report.models.push_back(std::move(summary));
    } catch (const std::exception& e) {
      ++failures;
      ModelSummary failed;
      failed.model_id = id;
      failed.failure = e.what();
      try {
        failed.size_bytes = model_size(registry.descriptor(id));
      } catch (const Error&) {
      }
      report.models.push_back(std::move(failed));
      err << "  failed: " << e.what() << '\n';
    }
  }
  std::stable_sort(report.cells.begin(), report.cells.end(), [&](const auto& a, const auto& b) {
    return std::find(prompts.begin(), prompts.end(), a.prompt) <
           std::find(prompts.begin(), prompts.end(), b.prompt);
  });

  const auto rendered = render_report(report);
  write_report(rendered, f.out_dir);
  out << rendered.text;
  out << "\nwrote " << (fs::path(f.out_dir) / "report.txt").string() << " and report.json\n";
  return failures == model_ids.size() ? kExitFailure : kExitOk;
}

struct ServeFlags {
  std::string dir;
  std::string bind;
  std::string ui_dir;
};

Server* g_server = nullptr;

extern "C" void handle_stop_signal(int) {
  if (g_server) g_server->stop();
}

int cmd_serve(const CommonFlags& common, const ServeFlags& f, std::ostream& out, std::ostream&) {
  auto cfg = resolve_config(common);
  if (!f.dir.empty()) cfg.catalog_root = f.dir;
  if (!f.bind.empty()) cfg.bind_address = f.bind;
  if (!f.ui_dir.empty()) cfg.ui_dir = f.ui_dir;
  Server server(cfg);
  server.warm_start();
  const int port = server.bind();
  const auto host = cfg.bind_address.substr(0, cfg.bind_address.rfind(':'));
  out << "serving " << cfg.catalog_root.string() << " on http://" << host << ":" << port << '\n'
      << std::flush;
  g_server = &server;
  std::signal(SIGINT, handle_stop_signal);
  std::signal(SIGTERM, handle_stop_signal);
  server.listen();
  g_server = nullptr;
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Local text-to-image search", "picsift"};
  app.require_subcommand(1);
  app.fallthrough();

  CommonFlags common;
  app.add_option("--config", common.config_file, "key = value config file");
  app.add_option("--models-dir", common.models_dir, "Directory of *.model manifests");
  app.add_option("--cache-dir", common.cache_dir, "Index and thumbnail cache directory");
  app.add_option("--detector", common.detector, "Detector model id");
  app.add_option("--threads", common.threads, "Extraction threads (0: all cores)");

  IndexFlags index_flags;
  auto* index = app.add_subcommand("index", "Build or update the feature index of a directory");
  index->add_option("--dir", index_flags.dir, "Image directory (default: Pictures)");
  index->add_option("--model", index_flags.model, "Extractor model id");
  index->add_flag("--force", index_flags.force, "Rebuild from scratch");

  SearchFlags search_flags;
  auto* search_cmd = app.add_subcommand("search", "Search a directory with a text prompt");
  search_cmd->add_option("prompt,--prompt", search_flags.prompt, "Object to look for")->required();
  search_cmd->add_option("--dir", search_flags.dir, "Image directory (default: Pictures)");
  search_cmd->add_option("--threshold", search_flags.threshold, "Detector score threshold")
      ->check(CLI::Range(0.0, 1.0));
  search_cmd->add_option("-k,--k", search_flags.k, "Number of results")->check(CLI::PositiveNumber);
  search_cmd->add_option("--model", search_flags.model, "Extractor model id");
  search_cmd->add_option("--seed", search_flags.seed, "Seed for the query image draw");
  search_cmd->add_option("--max-attempts", search_flags.max_attempts, "Images to try at most")
      ->check(CLI::PositiveNumber);
  search_cmd->add_option("--pad", search_flags.pad, "Crop padding as a fraction of the box")
      ->check(CLI::NonNegativeNumber);
  search_cmd->add_flag("--json", search_flags.json, "Print the JSON search response");

  BenchFlags bench_flags;
  auto* bench = app.add_subcommand("bench", "Evaluate accuracy, timing and size per model");
  bench->add_option("--manifest", bench_flags.labels, "labels.tsv of the dataset")->required();
  bench->add_option("--prompt-map", bench_flags.prompts_file, "prompts.tsv (default: next to labels)");
  bench->add_option("--root", bench_flags.root, "Image root (default: images/ next to labels)");
  bench->add_option("--models", bench_flags.models, "Comma-separated model ids (default: all)");
  bench->add_option("--prompts", bench_flags.prompts, "Comma-separated prompts (default: all)");
  bench->add_option("--thresholds", bench_flags.thresholds, "Comma-separated thresholds")->capture_default_str();
  bench->add_option("--seeds", bench_flags.seeds, "Comma-separated seeds")->capture_default_str();
  bench->add_option("-k,--k", bench_flags.k, "Results per search")->capture_default_str()->check(CLI::PositiveNumber);
  bench->add_option("--out", bench_flags.out_dir, "Report directory")->capture_default_str();
  bench->add_option("--warmup", bench_flags.warmup, "Discarded timing passes")->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  bench->add_option("--repeats", bench_flags.repeats, "Timed passes (0: skip timing)")->capture_default_str()
      ->check(CLI::NonNegativeNumber);

  ServeFlags serve_flags;
  auto* serve = app.add_subcommand("serve", "Run the local HTTP service");
  serve->add_option("--dir", serve_flags.dir, "Catalog root served");
  serve->add_option("--bind", serve_flags.bind, "host:port");
  serve->add_option("--ui-dir", serve_flags.ui_dir, "Built web UI assets");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(std::move(reversed));
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (index->parsed()) return cmd_index(common, index_flags, out, err);
    if (search_cmd->parsed()) return cmd_search(common, search_flags, out, err);
    if (bench->parsed()) return cmd_bench(common, bench_flags, out, err);
    if (serve->parsed()) return cmd_serve(common, serve_flags, out, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.code() == Errc::prompt_not_found ? kExitPromptNotFound : kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace picsift
