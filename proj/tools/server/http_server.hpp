#pragma once

#include <memory>
#include <string>

#include "segtriage/image_io.hpp"
#include "segtriage/triage_store.hpp"

namespace segtriage {

/// HTTP/JSON front end over a TriageStore.
///
///   POST /v1/bundles                        body: UBND bytes
///   GET  /v1/queue?limit=N
///   GET  /v1/items/{id}
///   GET  /v1/items/{id}/overlay.png?kind=entropy|segmentation
///   POST /v1/items/{id}/decision            {"action", "label_base64"?, "decided_by"?}
///   POST /v1/model/fit                      {"alpha"?}
///   GET  /v1/model
///   GET  /v1/metrics
///
/// Errors are JSON objects {code, message, details}.
class TriageHttpServer {
 public:
  TriageHttpServer(TriageStore& store, Palette palette);
  ~TriageHttpServer();

  TriageHttpServer(const TriageHttpServer&) = delete;
  TriageHttpServer& operator=(const TriageHttpServer&) = delete;

  /// Binds the listening socket; port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves until stop(). Requires a prior bind().
  bool listen();
  void stop();
  bool running() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace segtriage
