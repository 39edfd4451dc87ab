#ifndef TINYRLHF_SERVICE_ANNOTATION_SERVER_HPP_
#define TINYRLHF_SERVICE_ANNOTATION_SERVER_HPP_

#include <memory>
#include <string>

#include "tinyrlhf/service/annotation_service.hpp"

namespace tinyrlhf {

// HTTP JSON front end over an AnnotationService:
//   GET  /api/tasks/next?annotator=ID   200 task | 204 nothing left
//   POST /api/tasks/{id}/annotation     200 task | 404 | 409 | 422
//   GET  /api/tasks/{id}                200 task | 404
//   GET  /api/progress                  200 {total, open, in_progress, done, records}
//   GET  /api/rubric                    200 categories, weights, levels
// Errors carry {"error": message, "status": code}. Every response sends
// Access-Control-Allow-Origin: * so a browser UI on another port can call it.
class AnnotationServer {
 public:
  explicit AnnotationServer(AnnotationService& service);
  ~AnnotationServer();
  AnnotationServer(const AnnotationServer&) = delete;
  AnnotationServer& operator=(const AnnotationServer&) = delete;

  // Binds; port 0 picks a free port. Returns the bound port or -1.
  int bind(const std::string& host, int port);
  // Blocks until stop().
  bool listen_after_bind();
  void stop();
  bool is_running() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace tinyrlhf

#endif  // TINYRLHF_SERVICE_ANNOTATION_SERVER_HPP_
