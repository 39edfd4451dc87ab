#include "tinyrlhf/service/annotation_service.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "tinyrlhf/error.hpp"

namespace tinyrlhf {

using nlohmann::json;

std::string_view TaskStatusName(TaskStatus s) {
  switch (s) {
    case TaskStatus::kOpen: return "open";
    case TaskStatus::kInProgress: return "in_progress";
    case TaskStatus::kDone: return "done";
  }
  return "open";
}

std::vector<std::string> AnnotationTask::annotators() const {
  std::vector<std::string> out;
  for (const AnnotationRecord& r : records) {
    if (std::find(out.begin(), out.end(), r.annotator) == out.end()) out.push_back(r.annotator);
  }
  return out;
}

std::vector<AnnotationTask> build_annotation_tasks(const std::vector<PromptRow>& prompts,
                                                   const std::vector<ResponseRow>& responses) {
  std::vector<AnnotationTask> tasks;
  std::map<std::string, std::size_t> index;
  for (const PromptRow& p : prompts) {
    if (index.count(p.id)) Fail(ErrorKind::kSchema, "duplicate prompt id '" + p.id + "'");
    index[p.id] = tasks.size();
    tasks.push_back({.id = p.id, .prompt = p, .responses = {}, .records = {}, .lease = {}});
  }
  for (const ResponseRow& r : responses) {
    auto it = index.find(r.prompt_id);
    if (it == index.end()) {
      Fail(ErrorKind::kSchema, "response for unknown prompt '" + r.prompt_id + "'");
    }
    tasks[it->second].responses.push_back(r);
  }
  std::vector<AnnotationTask> out;
  for (AnnotationTask& t : tasks) {
    if (t.responses.empty()) continue;
    std::sort(t.responses.begin(), t.responses.end(),
              [](const ResponseRow& a, const ResponseRow& b) { return a.response_id < b.response_id; });
    out.push_back(std::move(t));
  }
  return out;
}

AnnotationService::AnnotationService(std::vector<AnnotationTask> tasks,
                                     std::filesystem::path journal, Clock clock,
                                     Options options)
    : tasks_(std::move(tasks)),
      journal_(std::move(journal)),
      clock_(std::move(clock)),
      options_(options) {
  if (!std::filesystem::exists(journal_)) return;
  for (AnnotationRecord& r : read_annotations(journal_)) {
    auto it = std::find_if(tasks_.begin(), tasks_.end(),
                           [&](const AnnotationTask& t) { return t.id == r.prompt_id; });
    if (it == tasks_.end()) {
      Fail(ErrorKind::kSchema, journal_.string() + ": record for unknown task '" +
                                   r.prompt_id + "'");
    }
    it->records.push_back(std::move(r));
  }
}

AnnotationTask& AnnotationService::find_locked(const std::string& task_id) {
  for (AnnotationTask& t : tasks_) {
    if (t.id == task_id) return t;
  }
  throw ServiceError(404, "unknown task '" + task_id + "'");
}

const AnnotationTask& AnnotationService::find_locked(const std::string& task_id) const {
  return const_cast<AnnotationService*>(this)->find_locked(task_id);
}

TaskStatus AnnotationService::status_locked(const AnnotationTask& task,
                                            std::int64_t now) const {
  if (static_cast<int>(task.annotators().size()) >= options_.required_annotators) {
    return TaskStatus::kDone;
  }
  if (task.lease && task.lease->expires_at > now) return TaskStatus::kInProgress;
  return TaskStatus::kOpen;
}

json AnnotationService::view_locked(const AnnotationTask& task, std::int64_t now) const {
  json responses = json::array();
  for (const ResponseRow& r : task.responses) {
    responses.push_back({{"response_id", r.response_id}, {"tokens", r.tokens}});
  }
  json lease = nullptr;
  if (task.lease && task.lease->expires_at > now) {
    lease = {{"annotator", task.lease->annotator},
             {"expires_at", task.lease->expires_at},
             {"remaining_seconds", task.lease->expires_at - now}};
  }
  json prompt = {{"id", task.prompt.id}, {"tokens", task.prompt.resolve_tokens()}};
  if (task.prompt.text) prompt["text"] = *task.prompt.text;
  return {{"id", task.id},
          {"prompt", prompt},
          {"responses", responses},
          {"status", TaskStatusName(status_locked(task, now))},
          {"annotators", task.annotators()},
          {"required_annotators", options_.required_annotators},
          {"lease", lease}};
}

std::optional<json> AnnotationService::next(const std::string& annotator) {
  if (annotator.empty()) throw ServiceError(422, "annotator id is required");
  std::lock_guard<std::mutex> lock(mu_);
  const std::int64_t now = clock_();
  for (AnnotationTask& t : tasks_) {
    if (t.lease && t.lease->annotator == annotator && t.lease->expires_at > now) {
      return view_locked(t, now);
    }
  }
  for (AnnotationTask& t : tasks_) {
    if (status_locked(t, now) != TaskStatus::kOpen) continue;
    const auto who = t.annotators();
    if (std::find(who.begin(), who.end(), annotator) != who.end()) continue;
    t.lease = Lease{annotator, now + options_.lease_seconds};
    return view_locked(t, now);
  }
  return std::nullopt;
}

json AnnotationService::submit(const std::string& task_id, const json& body) {
  std::lock_guard<std::mutex> lock(mu_);
  const std::int64_t now = clock_();
  AnnotationTask& t = find_locked(task_id);

  if (!body.is_object() || !body.contains("annotator") || !body["annotator"].is_string()) {
    throw ServiceError(422, "body must carry a string 'annotator'");
  }
  const std::string annotator = body["annotator"].get<std::string>();
  if (!t.lease || t.lease->annotator != annotator) {
    throw ServiceError(409, "annotator '" + annotator + "' holds no lease on task '" + task_id + "'");
  }
  if (t.lease->expires_at <= now) {
    t.lease.reset();
    throw ServiceError(409, "lease on task '" + task_id + "' expired");
  }

  if (!body.contains("records") || !body["records"].is_array()) {
    throw ServiceError(422, "body must carry a 'records' array");
  }
  std::vector<AnnotationRecord> records;
  std::set<int> seen;
  std::set<int> expected;
  for (const ResponseRow& r : t.responses) expected.insert(r.response_id);
  for (const json& item : body["records"]) {
    json full = item;
    if (!full.is_object()) throw ServiceError(422, "each record must be an object");
    full["prompt_id"] = task_id;
    full["annotator"] = annotator;
    full["timestamp"] = now;
    AnnotationRecord record;
    try {
      record = decode_annotation(full);
    } catch (const Error& e) {
      throw ServiceError(422, e.what());
    }
    if (!expected.count(record.response_id)) {
      throw ServiceError(422, "unknown response_id " + std::to_string(record.response_id));
    }
    if (!seen.insert(record.response_id).second) {
      throw ServiceError(422, "duplicate record for response_id " +
                                  std::to_string(record.response_id));
    }
    records.push_back(std::move(record));
  }
  if (seen != expected) throw ServiceError(422, "one record per response is required");

  std::string lines;
  for (const AnnotationRecord& r : records) lines += encode(r).dump() + "\n";
  if (journal_.has_parent_path()) std::filesystem::create_directories(journal_.parent_path());
  std::ofstream out(journal_, std::ios::binary | std::ios::app);
  if (!out) throw ServiceError(500, "cannot append to the journal");
  out << lines;
  out.flush();
  if (!out) throw ServiceError(500, "journal write failed");

  for (AnnotationRecord& r : records) t.records.push_back(std::move(r));
  t.lease.reset();
  return view_locked(t, now);
}

json AnnotationService::task(const std::string& task_id) const {
  std::lock_guard<std::mutex> lock(mu_);
  return view_locked(find_locked(task_id), clock_());
}

AnnotationProgress AnnotationService::progress() const {
  std::lock_guard<std::mutex> lock(mu_);
  const std::int64_t now = clock_();
  AnnotationProgress p;
  for (const AnnotationTask& t : tasks_) {
    ++p.total;
    p.records += static_cast<int>(t.records.size());
    switch (status_locked(t, now)) {
      case TaskStatus::kOpen: ++p.open; break;
      case TaskStatus::kInProgress: ++p.in_progress; break;
      case TaskStatus::kDone: ++p.done; break;
    }
  }
  return p;
}

std::vector<AnnotationRecord> AnnotationService::completed_records() const {
  std::lock_guard<std::mutex> lock(mu_);
  const std::int64_t now = clock_();
  std::vector<AnnotationRecord> out;
  for (const AnnotationTask& t : tasks_) {
    if (status_locked(t, now) == TaskStatus::kDone) {
      out.insert(out.end(), t.records.begin(), t.records.end());
    }
  }
  return out;
}

json AnnotationService::rubric() {
  json categories = json::array();
  for (Category c : CriterionRubric::kCategories) {
    categories.push_back({{"name", CategoryName(c)}, {"weight", CriterionRubric::weight(c)}});
  }
  json levels = json::array();
  for (Level l : {Level::kPositive, Level::kNeutral, Level::kNegative}) {
    levels.push_back({{"name", LevelName(l)}, {"score", CriterionRubric::level_score(l)}});
  }
  return {{"categories", categories},
          {"levels", levels},
          {"max_score", CriterionRubric::kMaxScore}};
}

}  // namespace tinyrlhf
