#include "http_server.hpp"

#include <charconv>

#include "httplib.h"
#include "json.hpp"

namespace segtriage {

namespace {

using nlohmann::json;

void send_json(httplib::Response& res, int status, const std::string& body) {
  res.status = status;
  res.set_content(body, "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message,
                const json& details = nullptr) {
  send_json(res, status, json{{"code", code}, {"message", message}, {"details", details}}.dump());
}

// Runs a handler, mapping exceptions onto the JSON error envelope.
template <typename F>
httplib::Server::Handler guarded(F&& f) {
  return [f = std::forward<F>(f)](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const ServiceError& e) {
      send_error(res, http_status(e.code()), to_string(e.code()), e.what(), json::parse(e.details_json()));
    } catch (const json::exception& e) {
      send_error(res, 400, "bad_request", std::string("malformed JSON body: ") + e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "internal", e.what());
    }
  };
}

std::string items_json(const std::vector<QueueItem>& items, const std::vector<std::string>& names) {
  json arr = json::array();
  for (const auto& item : items) arr.push_back(json::parse(item_to_json(item, names)));
  return json{{"items", arr}, {"count", items.size()}}.dump();
}

}  // namespace

struct TriageHttpServer::Impl {
  TriageStore& store;
  Palette palette;
  httplib::Server server;

  Impl(TriageStore& s, Palette p) : store(s), palette(std::move(p)) { routes(); }

  void routes() {
    server.Post("/v1/bundles", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto* data = reinterpret_cast<const std::uint8_t*>(req.body.data());
      const auto item = store.ingest({data, req.body.size()});
      send_json(res, 201, item_to_json(item, store.class_names()));
    }));

    server.Get("/v1/queue", guarded([this](const httplib::Request& req, httplib::Response& res) {
      std::optional<std::size_t> limit;
      if (req.has_param("limit")) {
        const auto text = req.get_param_value("limit");
        std::size_t v = 0;
        const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
        if (ec != std::errc() || ptr != text.data() + text.size()) {
          throw ServiceError(ServiceErrorCode::bad_request, "limit must be a non-negative integer");
        }
        limit = v;
      }
      send_json(res, 200, items_json(store.queue(limit), store.class_names()));
    }));

    server.Get(R"(/v1/items/([^/]+)/overlay\.png)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto kind = overlay_from_string(req.has_param("kind") ? req.get_param_value("kind") : "entropy");
      const auto png = store.render_overlay(req.matches[1], kind, palette);
      res.status = 200;
      res.set_content(std::string(png.begin(), png.end()), "image/png");
    }));

    server.Get(R"(/v1/items/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      send_json(res, 200, item_to_json(store.item(req.matches[1]), store.class_names()));
    }));

    server.Post(R"(/v1/items/([^/]+)/decision)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const json body = json::parse(req.body);
      if (!body.is_object() || !body.contains("action")) {
        throw ServiceError(ServiceErrorCode::bad_request, "decision body needs an 'action' field");
      }
      const auto action = action_from_string(body.at("action").get<std::string>());
      std::optional<std::vector<std::uint8_t>> label;
      if (body.contains("label_base64") && !body.at("label_base64").is_null()) {
        label = base64_decode(body.at("label_base64").get<std::string>());
      }
      std::optional<std::string> who;
      if (body.contains("decided_by") && !body.at("decided_by").is_null()) who = body.at("decided_by").get<std::string>();
      const auto item = store.decide(req.matches[1], action, std::move(label), std::move(who));
      send_json(res, 200, item_to_json(item, store.class_names()));
    }));

    server.Post("/v1/model/fit", guarded([this](const httplib::Request& req, httplib::Response& res) {
      double alpha = 0.05;
      if (!req.body.empty()) {
        const json body = json::parse(req.body);
        if (body.contains("alpha")) alpha = body.at("alpha").get<double>();
      }
      send_json(res, 200, model_summary_json(store.fit_model(alpha)));
    }));

    server.Get("/v1/model", guarded([this](const httplib::Request&, httplib::Response& res) {
      const auto model = store.model();
      if (!model) throw ServiceError(ServiceErrorCode::not_found, "no model has been fitted yet");
      send_json(res, 200, model_summary_json(*model));
    }));

    server.Get("/v1/metrics", guarded([this](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, metrics_to_json(store.metrics()));
    }));
  }
};

TriageHttpServer::TriageHttpServer(TriageStore& store, Palette palette)
    : impl_(std::make_unique<Impl>(store, std::move(palette))) {}

TriageHttpServer::~TriageHttpServer() { stop(); }

int TriageHttpServer::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  return impl_->server.bind_to_port(host, port) ? port : -1;
}

bool TriageHttpServer::listen() { return impl_->server.listen_after_bind(); }

void TriageHttpServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

bool TriageHttpServer::running() const { return impl_->server.is_running(); }

}  // namespace segtriage
