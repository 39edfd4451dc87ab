#include <doctest.h>

#include <atomic>
#include <set>
#include <thread>

#include "temp_dir.hpp"
#include "tinyrlhf/service/annotation_server.hpp"
#include "tinyrlhf/service/jsonl.hpp"

// After Eigen: <resolv.h> defines a _res macro.
#include <httplib.h>

using namespace tinyrlhf;
using nlohmann::json;

namespace {

json Levels(const char* level = "Neutral") {
  json levels = json::object();
  for (Category c : CriterionRubric::kCategories) levels[std::string(CategoryName(c))] = level;
  return levels;
}

std::string Body(const std::string& annotator, int k, const json& levels = Levels()) {
  json records = json::array();
  for (int i = 0; i < k; ++i) records.push_back({{"response_id", i}, {"levels", levels}});
  return json{{"annotator", annotator}, {"records", records}}.dump();
}

// A served AnnotationService on a free localhost port with a settable clock.
class Harness {
 public:
  explicit Harness(int prompts, int k = 4)
      : dir_("api"),
        service_(Tasks(prompts, k), dir_ / "journal.jsonl", [this] { return now_.load(); },
                 {.lease_seconds = 30, .required_annotators = 2}),
        server_(service_) {
    port_ = server_.bind("127.0.0.1", 0);
    REQUIRE(port_ > 0);
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    for (int i = 0; i < 500 && !server_.is_running(); ++i) {
      std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }
    REQUIRE(server_.is_running());
  }
  ~Harness() {
    server_.stop();
    thread_.join();
  }

  httplib::Client client() const { return httplib::Client("127.0.0.1", port_); }
  void advance(std::int64_t seconds) { now_ += seconds; }
  const std::filesystem::path& dir() const { return dir_.path(); }

 private:
  static std::vector<AnnotationTask> Tasks(int prompts, int k) {
    std::vector<PromptRow> p;
    std::vector<ResponseRow> r;
    for (int i = 0; i < prompts; ++i) {
      const std::string id = "q" + std::to_string(i);
      p.push_back({id, Tokens{1, 5, 6}, {}});
      for (int j = 0; j < k; ++j) r.push_back({id, j, {7, j + 3, 2}, 0});
    }
    return build_annotation_tasks(p, r);
  }

  oracle::TempDir dir_;
  std::atomic<std::int64_t> now_{100};
  AnnotationService service_;
  AnnotationServer server_;
  int port_ = -1;
  std::thread thread_;
};

}  // namespace

TEST_CASE("next task, submission and progress over HTTP") {
  Harness h(2);
  auto cli = h.client();

  auto res = cli.Get("/api/tasks/next?annotator=ann1");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(res->get_header_value("Access-Control-Allow-Origin") == "*");
  CHECK(res->get_header_value("Content-Type") == "application/json");
  const json task = json::parse(res->body);
  CHECK(task["id"] == "q0");
  CHECK(task["prompt"]["tokens"] == json::array({1, 5, 6}));
  CHECK(task["responses"].size() == 4);
  CHECK(task["required_annotators"] == 2);

  res = cli.Get("/api/tasks/next?annotator=ann1");
  CHECK(json::parse(res->body)["id"] == "q0");

  res = cli.Post("/api/tasks/q0/annotation", Body("ann1", 4), "application/json");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(json::parse(res->body)["annotators"] == json::array({"ann1"}));

  res = cli.Get("/api/progress");
  REQUIRE(res);
  const json p = json::parse(res->body);
  CHECK(p == json{{"total", 2}, {"open", 2}, {"in_progress", 0}, {"done", 0}, {"records", 4}});

  res = cli.Get("/api/tasks/q0");
  CHECK(res->status == 200);
  CHECK(json::parse(res->body)["status"] == "open");

  const auto journal = read_annotations(h.dir() / "journal.jsonl");
  CHECK(journal.size() == 4);
  CHECK(journal[0].annotator == "ann1");
  CHECK(journal[0].timestamp == 100);
}

TEST_CASE("error statuses carry a JSON body") {
  Harness h(1);
  auto cli = h.client();

  auto res = cli.Get("/api/tasks/nowhere");
  REQUIRE(res);
  CHECK(res->status == 404);
  CHECK(json::parse(res->body)["status"] == 404);

  res = cli.Post("/api/tasks/q0/annotation", Body("ann1", 4), "application/json");
  CHECK(res->status == 409);  // no lease yet
  CHECK(res->get_header_value("Access-Control-Allow-Origin") == "*");

  REQUIRE(cli.Get("/api/tasks/next?annotator=ann1")->status == 200);
  json missing = Levels();
  missing.erase("Courtesy");
  res = cli.Post("/api/tasks/q0/annotation", Body("ann1", 4, missing), "application/json");
  CHECK(res->status == 422);
  CHECK(json::parse(res->body)["error"].get<std::string>().find("Courtesy") != std::string::npos);

  CHECK(cli.Post("/api/tasks/q0/annotation", "{", "application/json")->status == 422);
  CHECK(cli.Post("/api/tasks/q0/annotation", Body("ann1", 3), "application/json")->status == 422);
  CHECK(cli.Get("/api/tasks/next")->status == 422);
  CHECK(cli.Post("/api/tasks/zz/annotation", Body("ann1", 4), "application/json")->status == 404);

  h.advance(31);
  res = cli.Post("/api/tasks/q0/annotation", Body("ann1", 4), "application/json");
  CHECK(res->status == 409);
  CHECK(json::parse(res->body)["error"].get<std::string>().find("expired") != std::string::npos);
}

TEST_CASE("204 once everything is done or taken") {
  Harness h(1);
  auto cli = h.client();
  for (const char* who : {"a", "b"}) {
    const std::string path = std::string("/api/tasks/next?annotator=") + who;
    REQUIRE(cli.Get(path)->status == 200);
    REQUIRE(cli.Post("/api/tasks/q0/annotation", Body(who, 4), "application/json")->status == 200);
  }
  CHECK(cli.Get("/api/tasks/next?annotator=c")->status == 204);
  CHECK(json::parse(cli.Get("/api/progress")->body)["done"] == 1);
  CHECK(json::parse(cli.Get("/api/tasks/q0")->body)["status"] == "done");
}

TEST_CASE("a leased task is held back from other annotators") {
  Harness h(1);
  auto cli = h.client();
  REQUIRE(cli.Get("/api/tasks/next?annotator=a")->status == 200);
  CHECK(cli.Get("/api/tasks/next?annotator=b")->status == 204);
  CHECK(json::parse(cli.Get("/api/progress")->body)["in_progress"] == 1);
  h.advance(31);
  CHECK(cli.Get("/api/tasks/next?annotator=b")->status == 200);
}

TEST_CASE("CORS preflight and rubric") {
  Harness h(1);
  auto cli = h.client();
  auto res = cli.Options("/api/tasks/q0/annotation");
  REQUIRE(res);
  CHECK(res->status == 204);
  CHECK(res->get_header_value("Access-Control-Allow-Origin") == "*");
  CHECK(res->get_header_value("Access-Control-Allow-Methods").find("POST") != std::string::npos);

  res = cli.Get("/api/rubric");
  REQUIRE(res);
  const json r = json::parse(res->body);
  CHECK(r["max_score"] == 145);
  CHECK(r["categories"].size() == 8);
}

TEST_CASE("concurrent annotators never share a lease") {
  Harness h(8, 4);
  std::vector<std::string> got(8);
  std::vector<std::thread> workers;
  for (int i = 0; i < 8; ++i) {
    workers.emplace_back([&, i] {
      auto cli = h.client();
      auto res = cli.Get("/api/tasks/next?annotator=w" + std::to_string(i));
      if (res && res->status == 200) got[i] = json::parse(res->body)["id"];
    });
  }
  for (auto& w : workers) w.join();
  std::set<std::string> distinct(got.begin(), got.end());
  CHECK(distinct.size() == 8);
  CHECK_FALSE(distinct.count(""));
}
