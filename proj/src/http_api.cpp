#include "faithtag/http_api.hpp"

#include "httplib.h"
#include "json.hpp"

namespace faithtag::service {

using json = nlohmann::json;

namespace {

json task_json(const AnnotationTask& t) {
  json turns = json::array();
  for (const auto& turn : t.example.dialogue.turns) turns.push_back(json::array({turn.speaker, turn.utterance}));
  json tags = json::array();
  for (Tag tag : t.example.summary.tags) tags.push_back(std::string(tag_code(tag)));
  return {{"task_id", t.task_id},
          {"status", std::string(status_name(t.status))},
          {"claimant", t.claimant ? json(*t.claimant) : json(nullptr)},
          {"revision", t.revision},
          {"dialogue_id", t.example.dialogue.id},
          {"turns", std::move(turns)},
          {"summary_tokens", t.example.summary.tokens},
          {"tags", std::move(tags)},
          {"gold_summary", t.example.gold_summary ? json(*t.example.gold_summary) : json(nullptr)}};
}

json stats_json(const ServiceStats& s) {
  json tags = json::object();
  for (const auto& [tag, c] : s.tags) tags[std::string(tag_code(tag))] = {{"count", c.count}, {"fraction", c.fraction}};
  return {{"open", s.open}, {"claimed", s.claimed}, {"done", s.done}, {"total", s.open + s.claimed + s.done},
          {"tags", std::move(tags)}};
}

json guidelines_json() {
  json cats = json::array();
  for (const auto& g : guidelines()) {
    json entry = {{"tag", std::string(tag_code(g.tag))}, {"name", g.name}, {"definition", g.definition}};
    if (g.reference_example) entry["reference_example"] = *g.reference_example;
    if (g.model_example) entry["model_example"] = *g.model_example;
    cats.push_back(std::move(entry));
  }
  return {{"categories", std::move(cats)}};
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& kind, const std::string& message) {
  send_json(res, status, {{"error", kind}, {"message", message}});
}

template <typename F>
void guarded(httplib::Response& res, F&& body) {
  try {
    body();
  } catch (const InvalidTags& e) {
    json problems = json::array();
    for (const auto& p : e.problems()) problems.push_back({{"position", p.position}, {"reason", p.reason}});
    send_json(res, 422, {{"error", e.kind()}, {"message", e.what()}, {"problems", std::move(problems)}});
  } catch (const StaleRevision& e) {
    send_error(res, 409, e.kind(), e.what());
  } catch (const TaskNotClaimed& e) {
    send_error(res, 409, e.kind(), e.what());
  } catch (const UnknownTask& e) {
    send_error(res, 404, e.kind(), e.what());
  } catch (const NoOpenTasks& e) {
    send_error(res, 404, e.kind(), e.what());
  } catch (const Error& e) {
    send_error(res, 400, e.kind(), e.what());
  } catch (const std::exception& e) {
    send_error(res, 500, "InternalError", e.what());
  }
}

}  // namespace

struct HttpApi::Impl {
  AnnotationService& service;
  httplib::Server server;

  explicit Impl(AnnotationService& s) : service(s) {
    server.Get("/api/tasks/next", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const std::string annotator = req.get_param_value("annotator");
        if (annotator.empty()) return send_error(res, 400, "BadRequest", "annotator query parameter is required");
        send_json(res, 200, task_json(service.next_task(annotator)));
      });
    });
    server.Get(R"(/api/tasks/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { send_json(res, 200, task_json(service.get(req.matches[1]))); });
    });
    server.Post(R"(/api/tasks/([^/]+)/tags)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        json body = json::parse(req.body, nullptr, false);
        if (body.is_discarded() || !body.is_object() || !body.contains("tags") || !body["tags"].is_array() ||
            !body.contains("revision") || !body["revision"].is_number_integer()) {
          return send_error(res, 400, "BadRequest", "body must be {\"tags\": [...], \"revision\": n}");
        }
        std::vector<std::string> codes;
        for (const auto& v : body["tags"]) {
          if (!v.is_string()) return send_error(res, 400, "BadRequest", "tags must be strings");
          codes.push_back(v.get<std::string>());
        }
        send_json(res, 200, task_json(service.submit_tag_codes(req.matches[1], codes, body["revision"].get<long>())));
      });
    });
    server.Get("/api/export", [this](const httplib::Request&, httplib::Response& res) {
      guarded(res, [&] {
        res.status = 200;
        res.set_content(service.export_jsonl(), "application/x-ndjson");
      });
    });
    server.Get("/api/stats", [this](const httplib::Request&, httplib::Response& res) {
      guarded(res, [&] { send_json(res, 200, stats_json(service.stats())); });
    });
    server.Get("/api/guidelines", [](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, guidelines_json());
    });
  }
};

HttpApi::HttpApi(AnnotationService& service) : impl_(std::make_unique<Impl>(service)) {}
HttpApi::~HttpApi() = default;

int HttpApi::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  return impl_->server.bind_to_port(host, port) ? port : -1;
}

bool HttpApi::serve() { return impl_->server.listen_after_bind(); }

void HttpApi::stop() { impl_->server.stop(); }

void HttpApi::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace faithtag::service
