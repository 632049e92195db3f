// Copyright 2026 The PERM Curriculum Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <string>

#include "perm/service/session_service.hpp"

namespace perm::service {

struct ApiResponse {
  int status = 200;
  store::Json body;
};

// Transport-independent request handlers for the HTTP API.
ApiResponse handle_health(const SessionService& svc);
ApiResponse handle_create(SessionService& svc, const std::string& body);
ApiResponse handle_submit(SessionService& svc, const std::string& id, const std::string& body,
                          const std::string& idempotency_key);
ApiResponse handle_history(const SessionService& svc, const std::string& id);

// HTTP binding of SessionService:
//   GET  /healthz
//   POST /sessions
//   POST /sessions/{id}/results   (Idempotency-Key header)
//   GET  /sessions/{id}/history
class HttpServer {
 public:
  explicit HttpServer(SessionService& svc);
  ~HttpServer();

  // Port 0 picks a free port. Returns the bound port; throws IoError.
  int bind(const std::string& host, int port);
  // Blocks until stop().
  void run();
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace perm::service
