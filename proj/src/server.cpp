#include "picsift/server.hpp"

#include <atomic>
#include <chrono>
#include <fstream>
#include <thread>

#include "httplib.h"
#include "picsift/api.hpp"
#include "picsift/error.hpp"
#include "picsift/hash.hpp"
#include "picsift/image.hpp"
#include "text_util.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace picsift {

namespace {

struct JobStatus {
  std::string state = "idle";  // idle | running | done | failed
  std::size_t done = 0;
  std::size_t total = 0;
  std::string message;
  std::optional<IndexRefresh> result;
};

ordered_json status_json(const std::string& model_id, const JobStatus& s) {
  ordered_json j;
  j["model"] = model_id;
  j["state"] = s.state;
  j["done"] = s.done;
  j["total"] = s.total;
  j["message"] = s.message;
  if (s.result) {
    j["added"] = s.result->added;
    j["removed"] = s.result->removed;
    j["modified"] = s.result->modified;
    j["unchanged"] = s.result->unchanged;
    j["skipped"] = s.result->skipped.size();
    j["rows"] = s.result->index.size();
    j["rebuilt"] = s.result->rebuilt;
  }
  return j;
}

void send_json(httplib::Response& res, int status, const ordered_json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, Errc code, const std::string& message) {
  send_json(res, http_status(code), error_json(api_error_code(code), message));
}

constexpr std::string_view kPlaceholderPage =
    "<!doctype html><title>picsift</title>"
    "<p>The web UI is not installed. Set <code>ui_dir</code> to its build "
    "directory, or use the JSON API under <code>/api</code>.</p>";

}  // namespace

struct Server::Impl {
  AppConfig config;
  fs::path root;
  ModelRegistry registry;
  IndexStore store;
  httplib::Server http;

  std::mutex mu;
  std::map<std::string, std::shared_ptr<const FeatureIndex>> indexes;
  std::map<std::string, JobStatus> jobs;
  std::vector<std::jthread> workers;

  explicit Impl(AppConfig cfg)
      : config(std::move(cfg)),
        root(fs::weakly_canonical(fs::absolute(config.catalog_root))),
        registry(config.model_registry_dir),
        store(config.index_cache_dir) {
    routes();
  }

  ~Impl() {
    http.stop();
    workers.clear();  // joins
  }

  std::shared_ptr<const FeatureIndex> current_index(const std::string& model_id) {
    {
      std::lock_guard lock(mu);
      if (auto it = indexes.find(model_id); it != indexes.end()) return it->second;
    }
    auto loaded = store.load(root, model_id);
    if (!loaded) return nullptr;
    auto ptr = std::make_shared<const FeatureIndex>(std::move(*loaded));
    std::lock_guard lock(mu);
    return indexes.try_emplace(model_id, ptr).first->second;
  }

  template <class F>
  void guarded(httplib::Response& res, F&& body) {
    try {
      body();
    } catch (const Error& e) {
      send_error(res, e.code(), e.what());
    } catch (const nlohmann::json::exception& e) {
      send_error(res, Errc::invalid_argument, e.what());
    } catch (const std::exception& e) {
      send_json(res, 500, error_json("INTERNAL", e.what()));
    }
  }

  void routes() {
    http.Get("/api/models", [this](const httplib::Request&, httplib::Response& res) {
      guarded(res, [&] { list_models(res); });
    });
    http.Post("/api/index", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { start_index(req, res); });
    });
    http.Get("/api/index/status", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto model = req.has_param("model") ? req.get_param_value("model")
                                                  : config.default_model;
        registry.descriptor(model);
        std::lock_guard lock(mu);
        send_json(res, 200, status_json(model, jobs[model]));
      });
    });
    http.Post("/api/search", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { run_search(req, res); });
    });
    http.Get("/api/image", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { serve_image(req, res); });
    });
    if (!config.ui_dir.empty() && fs::is_directory(config.ui_dir)) {
      http.set_mount_point("/", config.ui_dir.string());
    } else {
      http.Get("/", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(std::string(kPlaceholderPage), "text/html");
      });
    }
  }

  void list_models(httplib::Response& res) {
    auto models = ordered_json::array();
    for (const auto& d : registry.descriptors()) {
      ordered_json m;
      m["id"] = d.model_id;
      m["role"] = to_string(d.role);
      m["feature_dim"] = d.feature_dim ? ordered_json(*d.feature_dim) : ordered_json(nullptr);
      if (d.role == ModelRole::extractor) {
        std::shared_ptr<const FeatureIndex> idx;
        try {
          idx = current_index(d.model_id);
        } catch (const Error&) {
        }
        m["indexed"] = idx != nullptr;
        m["rows"] = idx ? idx->size() : 0;
      }
      models.push_back(std::move(m));
    }
    ordered_json body;
    body["catalog_root"] = root.string();
    body["default_model"] = config.default_model;
    body["detector_model"] = config.detector_model;
    body["default_threshold"] = config.default_threshold;
    body["default_k"] = config.default_k;
    body["models"] = std::move(models);
    send_json(res, 200, body);
  }

  void start_index(const httplib::Request& req, httplib::Response& res) {
    const auto body = req.body.empty() ? nlohmann::json::object() : nlohmann::json::parse(req.body);
    if (!body.is_object()) throw Error(Errc::invalid_argument, "request body must be an object");
    if (const auto it = body.find("dir"); it != body.end() && !it->is_null()) {
      const auto dir = fs::weakly_canonical(fs::absolute(it->get<std::string>()));
      if (dir != root) {
        throw Error(Errc::bad_path, "this service indexes only " + root.string());
      }
    }
    const auto model = body.value("model", config.default_model);
    const bool force = body.value("force", false);
    const auto extractor = registry.handle(model);
    if (extractor.role() != ModelRole::extractor) {
      throw Error(Errc::invalid_argument, model + " is not an extractor");
    }

    std::lock_guard lock(mu);
    auto& job = jobs[model];
    if (job.state == "running") {
      send_json(res, 409, error_json("JOB_RUNNING", "an index job for " + model + " is running"));
      return;
    }
    job = JobStatus{};
    job.state = "running";
    workers.emplace_back([this, model, extractor, force] { index_job(model, extractor, force); });
    send_json(res, 202, status_json(model, job));
  }

  void index_job(const std::string& model, const ModelHandle& extractor, bool force) {
    BuildOptions opts;
    opts.progress = [this, &model](std::size_t done, std::size_t total) {
      std::lock_guard lock(mu);
      jobs[model].done = done;
      jobs[model].total = total;
    };
    try {
      auto refresh = refresh_index(root, extractor, store, force, opts);
      auto ptr = std::make_shared<const FeatureIndex>(refresh.index);
      std::lock_guard lock(mu);
      indexes[model] = std::move(ptr);  // searches already running keep their snapshot
      auto& job = jobs[model];
      job.state = "done";
      job.total = refresh.index.size() + refresh.index.skipped().size();
      job.done = job.total;
      job.message = refresh.reused ? "index reused" : "index updated";
      job.result = std::move(refresh);
    } catch (const std::exception& e) {
      std::lock_guard lock(mu);
      jobs[model].state = "failed";
      jobs[model].message = e.what();
    }
  }

  void run_search(const httplib::Request& req, httplib::Response& res) {
    const auto request = parse_search_request(nlohmann::json::parse(req.body));
    QuerySpec spec;
    spec.prompt = request.prompt;
    spec.threshold = request.threshold.value_or(config.default_threshold);
    spec.k = request.k.value_or(static_cast<std::size_t>(config.default_k));
    spec.seed = request.seed;
    spec.validate();

    const auto model = request.model.value_or(config.default_model);
    const auto extractor = registry.handle(model);
    const auto detector = registry.handle(config.detector_model);
    const auto index = current_index(model);
    if (!index) {
      throw Error(Errc::stale_index, "no index for " + model + "; POST /api/index first");
    }
    const auto outcome = search(root, spec, extractor, detector, *index);
    send_json(res, 200, search_response_json(outcome, model));
  }

  void serve_image(const httplib::Request& req, httplib::Response& res) {
    const auto rel = req.get_param_value("path");
    if (!is_safe_relative_path(rel)) throw Error(Errc::bad_path, "invalid image path");
    const auto full = fs::weakly_canonical(root / rel);
    const auto [r, f] = std::mismatch(root.begin(), root.end(), full.begin(), full.end());
    if (r != root.end()) throw Error(Errc::bad_path, "path escapes the catalog root");
    if (!fs::is_regular_file(full)) {
      send_json(res, 404, error_json("NOT_FOUND", "no such image"));
      return;
    }
    int size = 256;
    if (req.has_param("size")) {
      const auto v = detail::parse_int(req.get_param_value("size"));
      if (!v || *v < 1) throw Error(Errc::invalid_argument, "size must be a positive integer");
      size = static_cast<int>(std::min<long long>(*v, 2048));
    }

    const auto mtime = fs::last_write_time(full).time_since_epoch().count();
    const auto key = to_hex(sha256(full.string() + "|" + std::to_string(mtime) + "|" +
                                   std::to_string(fs::file_size(full)) + "|" +
                                   std::to_string(size)));
    const auto cached = store.cache_dir() / "thumbs" / (key.substr(0, 32) + ".jpg");
    std::string bytes;
    if (fs::exists(cached)) {
      bytes = detail::read_text_file(cached);
    } else {
      const auto jpeg = encode_thumbnail_jpeg(decode_image_file(full), size);
      bytes.assign(jpeg.begin(), jpeg.end());
      fs::create_directories(cached.parent_path());
      detail::write_file_atomic(cached, bytes);
    }
    res.set_content(bytes, "image/jpeg");
  }
};

Server::Server(AppConfig config) {
  config.validate();
  impl_ = std::make_unique<Impl>(std::move(config));
}

Server::~Server() = default;

int Server::bind() {
  const auto& address = impl_->config.bind_address;
  const auto colon = address.rfind(':');
  const auto host = address.substr(0, colon);
  const int port = static_cast<int>(*detail::parse_int(address.substr(colon + 1)));
  if (port == 0) {
    const int bound = impl_->http.bind_to_any_port(host);
    if (bound < 0) throw Error(Errc::io_error, "cannot bind " + host);
    return bound;
  }
  if (!impl_->http.bind_to_port(host, port)) {
    throw Error(Errc::io_error, "cannot bind " + address);
  }
  return port;
}

void Server::listen() { impl_->http.listen_after_bind(); }

void Server::stop() { impl_->http.stop(); }

void Server::warm_start() {
  for (const auto& d : impl_->registry.descriptors()) {
    if (d.role != ModelRole::extractor) continue;
    try {
      impl_->current_index(d.model_id);
    } catch (const Error&) {
      // unreadable index: the next index job rebuilds it
    }
  }
}

}  // namespace picsift
