#pragma once

#include <memory>
#include <string>

#include "faithtag/service.hpp"

namespace faithtag::service {

/// JSON over HTTP for the annotation UI.
///   GET  /api/tasks/next?annotator=ID
///   GET  /api/tasks/{id}
///   POST /api/tasks/{id}/tags   {"tags": [...], "revision": n}
///   GET  /api/export            JSONL
///   GET  /api/stats
///   GET  /api/guidelines
/// Errors are {"error": kind, "message": text}; 404 unknown task or no open
/// tasks, 409 stale revision or unclaimed task, 422 invalid tags (with a
/// "problems" list), 400 malformed requests.
class HttpApi {
 public:
  explicit HttpApi(AnnotationService& service);
  ~HttpApi();

  HttpApi(const HttpApi&) = delete;
  HttpApi& operator=(const HttpApi&) = delete;

  /// Binds without serving; port 0 picks a free port. Returns the port or -1.
  int bind(const std::string& host, int port);
  /// Blocks until stop().
  bool serve();
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace faithtag::service
