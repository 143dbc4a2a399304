#pragma once

#include <memory>
#include <string>

#include "memeguard/annotation/store.h"

namespace memeguard::annotation {

struct ServerOptions {
  // Bearer token for /api/admin/*. Empty disables the admin endpoints.
  // Defaults to $MEMEGUARD_ADMIN_TOKEN when constructed via FromEnv().
  std::string admin_token;
  int threads = 8;

  static ServerOptions FromEnv();
};

// JSON-over-HTTP front of an AnnotationStore.
//
//   GET  /api/tasks/next?annotator=ID
//   POST /api/annotations            {annotator, sample, stage, label}
//   POST /api/ratings                {annotator, sample, completeness, fluency, grammar}
//   GET  /api/progress?annotator=ID
//   GET  /api/samples/{id}/media
//   POST /api/admin/annotators       {id, handle, daily_cap, active}
//   POST /api/admin/batches          {stage, assignments: [{sample, annotators}]}
//   POST /api/admin/finalize?stage=I|II
//   GET  /api/admin/agreement?stage=I|II
//   GET  /api/admin/ratings
//   GET  /api/admin/records?stage=I|II
//
// Errors are {"error": message} with 400 (validation), 401 (admin token),
// 404 (unknown annotator or sample), 409 (duplicate, cap, blocked
// finalization) or 500.
class AnnotationServer {
 public:
  AnnotationServer(AnnotationStore& store, ServerOptions options);
  ~AnnotationServer();

  // Binds to `port` (0 picks a free one) and returns the bound port, or -1.
  int Bind(const std::string& host, int port);
  // Serves until Stop(). Call after Bind().
  bool Listen();
  void Stop();
  bool running() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace memeguard::annotation
