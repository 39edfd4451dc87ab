#ifndef TINYRLHF_SERVICE_ANNOTATION_SERVICE_HPP_
#define TINYRLHF_SERVICE_ANNOTATION_SERVICE_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tinyrlhf/preference.hpp"
#include "tinyrlhf/service/jsonl.hpp"

namespace tinyrlhf {

enum class TaskStatus { kOpen, kInProgress, kDone };
std::string_view TaskStatusName(TaskStatus s);

struct Lease {
  std::string annotator;
  std::int64_t expires_at = 0;  // clock seconds
};

// One prompt with its k responses, as shown to annotators. The task id is the
// prompt id.
struct AnnotationTask {
  std::string id;
  PromptRow prompt;
  std::vector<ResponseRow> responses;
  std::vector<AnnotationRecord> records;
  std::optional<Lease> lease;

  std::vector<std::string> annotators() const;  // distinct, first-seen order
};

// Groups responses under their prompts; tasks keep prompt-file order.
// Raises kSchema for a response whose prompt is unknown.
std::vector<AnnotationTask> build_annotation_tasks(const std::vector<PromptRow>& prompts,
                                                   const std::vector<ResponseRow>& responses);

// Failure surfaced to HTTP clients with its status code.
class ServiceError : public std::runtime_error {
 public:
  ServiceError(int status, const std::string& message)
      : std::runtime_error(message), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

struct AnnotationProgress {
  int total = 0;
  int open = 0;
  int in_progress = 0;
  int done = 0;
  int records = 0;
};

// Lease-based task queue. Thread-safe; submissions are appended to the
// journal under the same lock, so there is a single writer. The journal uses
// the annotation JSONL schema and is replayed on construction.
class AnnotationService {
 public:
  using Clock = std::function<std::int64_t()>;

  struct Options {
    int lease_seconds = 15 * 60;
    int required_annotators = 3;
  };

  AnnotationService(std::vector<AnnotationTask> tasks, std::filesystem::path journal,
                    Clock clock, Options options);
  AnnotationService(std::vector<AnnotationTask> tasks, std::filesystem::path journal,
                    Clock clock)
      : AnnotationService(std::move(tasks), std::move(journal), std::move(clock), Options{}) {}

  // The task `annotator` already holds, else the oldest task that is not
  // done, not leased by someone else and not yet annotated by `annotator`.
  // Returns nullopt when nothing is left.
  std::optional<nlohmann::json> next(const std::string& annotator);

  // `body` is {"annotator": id, "records": [{"response_id", "levels"}, ...]}
  // with exactly one record per response. Throws ServiceError 404 for an
  // unknown task, 409 without a live lease held by the annotator, 422 for
  // rubric or schema violations.
  nlohmann::json submit(const std::string& task_id, const nlohmann::json& body);

  nlohmann::json task(const std::string& task_id) const;
  AnnotationProgress progress() const;

  // Records of tasks that reached the required annotator count.
  std::vector<AnnotationRecord> completed_records() const;

  static nlohmann::json rubric();

 private:
  TaskStatus status_locked(const AnnotationTask& task, std::int64_t now) const;
  nlohmann::json view_locked(const AnnotationTask& task, std::int64_t now) const;
  AnnotationTask& find_locked(const std::string& task_id);
  const AnnotationTask& find_locked(const std::string& task_id) const;

  mutable std::mutex mu_;
  std::vector<AnnotationTask> tasks_;
  std::filesystem::path journal_;
  Clock clock_;
  Options options_;
};

}  // namespace tinyrlhf

#endif  // TINYRLHF_SERVICE_ANNOTATION_SERVICE_HPP_
