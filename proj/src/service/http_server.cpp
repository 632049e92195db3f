// Copyright 2026 The PERM Curriculum Authors
// SPDX-License-Identifier: Apache-2.0

#include "perm/service/http_server.hpp"

#include <cstdlib>

#include <httplib.h>

namespace perm::service {

namespace {

ApiResponse error(int status, const std::string& message) {
  return {status, store::Json{{"error", message}}};
}

template <typename F>
ApiResponse guarded(F&& f) {
  try {
    return f();
  } catch (const ServiceError& e) {
    return error(e.status(), e.what());
  } catch (const InvalidArgument& e) {
    return error(400, e.what());
  } catch (const std::exception& e) {
    return error(500, e.what());
  }
}

store::Json parse_body(const std::string& body) {
  if (body.empty()) return store::Json::object();
  try {
    auto j = store::Json::parse(body);
    if (!j.is_object()) throw ServiceError(400, "request body must be a JSON object");
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw ServiceError(400, std::string("malformed JSON body: ") + e.what());
  }
}

// Numbers, or the strings "NaN"/"Infinity" that JSON cannot carry as
// numbers, so non-finite scores reach validation.
double reward_value(const store::Json& v) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    char* end = nullptr;
    const double d = std::strtod(s.c_str(), &end);
    if (end != s.c_str() && *end == '\0') return d;
  }
  throw ServiceError(400, "raw_reward must be a number");
}

}  // namespace

ApiResponse handle_health(const SessionService& svc) {
  return {200, store::Json{{"status", "ok"}, {"ready", svc.ready()}, {"api_version", kApiVersion}}};
}

ApiResponse handle_create(SessionService& svc, const std::string& body) {
  return guarded([&] {
    const auto j = parse_body(body);
    std::string label;
    if (auto it = j.find("label"); it != j.end()) {
      if (!it->is_string()) throw ServiceError(400, "label must be a string");
      label = it->get<std::string>();
    }
    return ApiResponse{201, svc.create_session(label)};
  });
}

ApiResponse handle_submit(SessionService& svc, const std::string& id, const std::string& body,
                          const std::string& idempotency_key) {
  return guarded([&] {
    const auto j = parse_body(body);
    SubmitRequest req;
    req.idempotency_key = idempotency_key;
    auto it = j.find("raw_reward");
    if (it == j.end()) throw ServiceError(400, "missing field 'raw_reward'");
    req.raw_reward = reward_value(*it);
    if (auto len = j.find("episode_length"); len != j.end()) {
      if (!len->is_number_integer()) throw ServiceError(400, "episode_length must be an integer");
      req.episode_length = len->get<std::int64_t>();
    }
    if (auto lvl = j.find("level_index"); lvl != j.end() && !lvl->is_null()) {
      if (!lvl->is_number_unsigned()) {
        throw ServiceError(400, "level_index must be a non-negative integer");
      }
      req.level_index = lvl->get<std::size_t>();
    }
    return ApiResponse{200, svc.submit_result(id, req)};
  });
}

ApiResponse handle_history(const SessionService& svc, const std::string& id) {
  return guarded([&] { return ApiResponse{200, svc.history(id)}; });
}

struct HttpServer::Impl {
  SessionService& svc;
  httplib::Server server;
  explicit Impl(SessionService& s) : svc(s) {}
};

namespace {

void reply(httplib::Response& res, const ApiResponse& r) {
  res.status = r.status;
  res.set_content(r.body.dump(), "application/json");
}

}  // namespace

HttpServer::HttpServer(SessionService& svc) : impl_(std::make_unique<Impl>(svc)) {
  auto& s = impl_->server;
  auto& service = impl_->svc;
  s.Get("/healthz", [&service](const httplib::Request&, httplib::Response& res) {
    reply(res, handle_health(service));
  });
  s.Post("/sessions", [&service](const httplib::Request& req, httplib::Response& res) {
    reply(res, handle_create(service, req.body));
  });
  s.Post(R"(/sessions/([^/]+)/results)",
         [&service](const httplib::Request& req, httplib::Response& res) {
           reply(res, handle_submit(service, req.matches[1], req.body,
                                    req.get_header_value("Idempotency-Key")));
         });
  s.Get(R"(/sessions/([^/]+)/history)",
        [&service](const httplib::Request& req, httplib::Response& res) {
          reply(res, handle_history(service, req.matches[1]));
        });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  auto& s = impl_->server;
  if (port == 0) {
    const int p = s.bind_to_any_port(host);
    if (p < 0) throw IoError("cannot bind " + host + " to any port");
    return p;
  }
  if (!s.bind_to_port(host, port)) {
    throw IoError("cannot bind " + host + ":" + std::to_string(port) + " (port in use?)");
  }
  return port;
}

void HttpServer::run() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_->server.is_running()) impl_->server.stop();
}

void HttpServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace perm::service
