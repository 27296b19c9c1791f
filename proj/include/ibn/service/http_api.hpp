#pragma once

#include <string>

#include <httplib.h>
#include <json.hpp>

#include "ibn/errors.hpp"
#include "ibn/service/intent_service.hpp"

namespace ibn::service {

namespace detail {

inline void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

inline void send_error(httplib::Response& res, int status, const std::string& code,
                       const std::string& message) {
  send_json(res, status, {{"code", code}, {"message", message}});
}

inline json parse_body(const httplib::Request& req) {
  if (req.body.empty())
    return json::object();
  try {
    json j = json::parse(req.body);
    if (!j.is_object())
      throw ValidationError("request body must be a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("malformed JSON: ") + e.what());
  }
}

/// Maps library errors onto HTTP statuses and {code, message} bodies.
template <class F>
httplib::Server::Handler guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const NotFoundError& e) {
      send_error(res, 404, "not_found", e.what());
    } catch (const StateError& e) {
      send_error(res, 409, "conflict", e.what());
    } catch (const ValidationError& e) {
      send_error(res, 400, "invalid_request", e.what());
    } catch (const ShapeError& e) {
      send_error(res, 400, "invalid_request", e.what());
    } catch (const json::exception& e) {
      send_error(res, 400, "invalid_request", e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "internal", e.what());
    }
  };
}

} // namespace detail

/// Registers the JSON API routes on `server`. The service must outlive it.
inline void install_routes(httplib::Server& server, IntentService& svc) {
  using detail::guarded;
  using detail::parse_body;
  using detail::send_json;

  // Small JSON replies otherwise stall on delayed ACKs.
  server.set_tcp_nodelay(true);

  server.Post("/api/intents", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
                const json body = parse_body(req);
                if (!body.contains("text") || !body.at("text").is_string())
                  throw ValidationError("body needs a string field 'text'");
                send_json(res, 201, to_json(svc.submit(body.at("text").get<std::string>())));
              }));

  server.Get("/api/intents", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
               std::optional<IntentState> filter;
               if (req.has_param("state"))
                 filter = state_from_string(req.get_param_value("state"));
               json list = json::array();
               for (const auto& r : svc.list(filter))
                 list.push_back(to_json(r));
               send_json(res, 200, {{"intents", list}});
             }));

  server.Get(R"(/api/intents/([^/]+))",
             guarded([&svc](const httplib::Request& req, httplib::Response& res) {
               send_json(res, 200, to_json(svc.get(req.matches[1])));
             }));

  server.Post(R"(/api/intents/([^/]+)/corrections)",
              guarded([&svc](const httplib::Request& req, httplib::Response& res) {
                const json body = parse_body(req);
                if (!body.contains("spans") || !body.at("spans").is_array())
                  throw ValidationError("body needs an array field 'spans'");
                std::vector<Span> spans;
                for (const auto& s : body.at("spans"))
                  spans.push_back(span_from(s));
                const std::string author = body.value("author", std::string("operator"));
                send_json(res, 200, to_json(svc.correct(req.matches[1], std::move(spans), author)));
              }));

  server.Post(R"(/api/intents/([^/]+)/activate)",
              guarded([&svc](const httplib::Request& req, httplib::Response& res) {
                send_json(res, 200, to_json(svc.activate(req.matches[1])));
              }));

  server.Post("/api/model/retrain",
              guarded([&svc](const httplib::Request& req, httplib::Response& res) {
                const json body = parse_body(req);
                if (body.value("wait", false)) {
                  const ModelVersion v = svc.retrain();
                  send_json(res, 201, {{"version", v.id}, {"metrics", v.metrics}});
                  return;
                }
                if (svc.refinement_dataset().empty())
                  throw StateError("refinement dataset is empty; submit a correction first");
                if (!svc.start_retrain())
                  throw StateError("a retrain is already running");
                send_json(res, 202, {{"status", "started"}});
              }));

  server.Get("/api/model/versions", guarded([&svc](const httplib::Request&, httplib::Response& res) {
               send_json(res, 200, svc.versions_json());
             }));

  server.Get("/api/metrics", guarded([&svc](const httplib::Request&, httplib::Response& res) {
               send_json(res, 200, svc.metrics_summary());
             }));

  server.Get("/api/health", guarded([&svc](const httplib::Request&, httplib::Response& res) {
               send_json(res, 200, {{"status", "ok"}, {"active_version", svc.active_model()->version}});
             }));

  server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty())
      detail::send_error(res, res.status, res.status == 404 ? "not_found" : "error",
                         httplib::status_message(res.status));
  });
}

} // namespace ibn::service
