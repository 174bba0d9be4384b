#pragma once

#include <memory>
#include <string>

#include "picsift/workspace.hpp"

namespace picsift {

// Local HTTP service:
//   GET  /api/models
//   POST /api/index        {"dir"?, "model"?}   -> 202 {"job": ...}
//   GET  /api/index/status [?model=]
//   POST /api/search       SearchRequest -> SearchResponse
//   GET  /api/image?path=&size=
//   GET  /                 static UI assets from ui_dir
class Server {
 public:
  explicit Server(AppConfig config);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds host:port from the config (port 0 picks a free one) and returns
  /// the bound port. Error(io_error) if the address is taken.
  int bind();
  /// Serves until stop(); call after bind().
  void listen();
  void stop();

  /// Loads persisted indexes for every registered extractor, if present.
  void warm_start();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace picsift
