#include "tinyrlhf/service/annotation_server.hpp"

#include <httplib.h>

namespace tinyrlhf {

using nlohmann::json;

struct AnnotationServer::Impl {
  AnnotationService& service;
  httplib::Server server;

  explicit Impl(AnnotationService& s) : service(s) {}
};

namespace {

void Reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void ReplyError(httplib::Response& res, int status, const std::string& message) {
  Reply(res, status, {{"error", message}, {"status", status}});
}

template <typename F>
void Guarded(httplib::Response& res, F&& body) {
  try {
    body();
  } catch (const ServiceError& e) {
    ReplyError(res, e.status(), e.what());
  } catch (const std::exception& e) {
    ReplyError(res, 500, e.what());
  }
}

}  // namespace

AnnotationServer::AnnotationServer(AnnotationService& service)
    : impl_(std::make_unique<Impl>(service)) {
  httplib::Server& srv = impl_->server;
  AnnotationService& svc = impl_->service;

  srv.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                           {"Access-Control-Allow-Headers", "Content-Type"},
                           {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});

  srv.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.status = 204;
  });

  srv.Get("/api/tasks/next", [&svc](const httplib::Request& req, httplib::Response& res) {
    Guarded(res, [&] {
      const std::string annotator = req.get_param_value("annotator");
      if (annotator.empty()) throw ServiceError(422, "query parameter 'annotator' is required");
      if (auto task = svc.next(annotator)) {
        Reply(res, 200, *task);
      } else {
        res.status = 204;
      }
    });
  });

  srv.Post(R"(/api/tasks/([^/]+)/annotation)",
           [&svc](const httplib::Request& req, httplib::Response& res) {
             Guarded(res, [&] {
               const json body = json::parse(req.body, nullptr, /*allow_exceptions=*/false);
               if (body.is_discarded()) throw ServiceError(422, "request body is not JSON");
               Reply(res, 200, svc.submit(req.matches[1].str(), body));
             });
           });

  srv.Get(R"(/api/tasks/([^/]+))", [&svc](const httplib::Request& req, httplib::Response& res) {
    Guarded(res, [&] { Reply(res, 200, svc.task(req.matches[1].str())); });
  });

  srv.Get("/api/progress", [&svc](const httplib::Request&, httplib::Response& res) {
    Guarded(res, [&] {
      const AnnotationProgress p = svc.progress();
      Reply(res, 200,
            {{"total", p.total},
             {"open", p.open},
             {"in_progress", p.in_progress},
             {"done", p.done},
             {"records", p.records}});
    });
  });

  srv.Get("/api/rubric", [](const httplib::Request&, httplib::Response& res) {
    Reply(res, 200, AnnotationService::rubric());
  });
}

AnnotationServer::~AnnotationServer() { stop(); }

int AnnotationServer::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  return impl_->server.bind_to_port(host, port) ? port : -1;
}

bool AnnotationServer::listen_after_bind() { return impl_->server.listen_after_bind(); }

void AnnotationServer::stop() {
  if (impl_->server.is_running()) impl_->server.stop();
}

bool AnnotationServer::is_running() const { return impl_->server.is_running(); }

}  // namespace tinyrlhf
