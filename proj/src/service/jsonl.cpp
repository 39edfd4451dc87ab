#include "tinyrlhf/service/jsonl.hpp"

#include <fstream>
#include <sstream>
#include <unistd.h>

#include "tinyrlhf/error.hpp"
#include "tinyrlhf/tokenizer.hpp"

namespace tinyrlhf {
namespace {

const Json& Field(const Json& j, const char* key) {
  if (!j.is_object()) Fail(ErrorKind::kSchema, "expected a JSON object");
  auto it = j.find(key);
  if (it == j.end()) Fail(ErrorKind::kSchema, std::string("missing field '") + key + "'");
  return *it;
}

template <typename T>
T Get(const Json& j, const char* key) {
  const Json& v = Field(j, key);
  try {
    return v.get<T>();
  } catch (const nlohmann::json::exception&) {
    Fail(ErrorKind::kSchema, std::string("field '") + key + "' has the wrong type");
  }
}

int GetInt(const Json& j, const char* key) {
  const Json& v = Field(j, key);
  if (!v.is_number_integer()) {
    Fail(ErrorKind::kSchema, std::string("field '") + key + "' must be an integer");
  }
  return v.get<int>();
}

Tokens GetTokens(const Json& j, const char* key) {
  const Json& v = Field(j, key);
  if (!v.is_array()) Fail(ErrorKind::kSchema, std::string("field '") + key + "' must be an array");
  Tokens out;
  for (const Json& t : v) {
    if (!t.is_number_integer()) {
      Fail(ErrorKind::kSchema, std::string("field '") + key + "' must hold integers");
    }
    out.push_back(t.get<int>());
  }
  return out;
}

}  // namespace

Tokens PromptRow::resolve_tokens() const {
  if (tokens) return *tokens;
  if (text) return encode_instruction_prompt(*text);
  Fail(ErrorKind::kSchema, "prompt '" + id + "' has neither tokens nor text");
}

Json encode(const PromptRow& row) {
  Json j = {{"id", row.id}};
  if (row.tokens) j["tokens"] = *row.tokens;
  if (row.text) j["text"] = *row.text;
  return j;
}

Json encode(const ResponseRow& row) {
  return {{"prompt_id", row.prompt_id},
          {"response_id", row.response_id},
          {"tokens", row.tokens},
          {"seed", row.seed}};
}

Json encode(const DemonstrationRow& row) {
  return {{"prompt_id", row.prompt_id}, {"prompt", row.prompt}, {"response", row.response}};
}

Json encode(const AnnotationRecord& record) {
  Json levels = Json::object();
  for (Category c : CriterionRubric::kCategories) {
    const auto& level = record.levels[static_cast<int>(c)];
    if (level) levels[std::string(CategoryName(c))] = LevelName(*level);
  }
  return {{"prompt_id", record.prompt_id},
          {"response_id", record.response_id},
          {"annotator", record.annotator},
          {"levels", levels},
          {"timestamp", record.timestamp}};
}

Json encode(const RankedResponseSet& ranking) {
  return {{"prompt_id", ranking.prompt_id},
          {"order", ranking.order},
          {"scores", ranking.scores}};
}

Json encode(const PreferencePair& pair) {
  return {{"prompt_id", pair.prompt_id},
          {"chosen_id", pair.chosen_id},
          {"rejected_id", pair.rejected_id},
          {"source", PairSourceName(pair.source)}};
}

PromptRow decode_prompt(const Json& j) {
  PromptRow row;
  row.id = Get<std::string>(j, "id");
  if (j.contains("tokens")) row.tokens = GetTokens(j, "tokens");
  if (j.contains("text")) row.text = Get<std::string>(j, "text");
  if (!row.tokens && !row.text) {
    Fail(ErrorKind::kSchema, "prompt '" + row.id + "' needs 'tokens' or 'text'");
  }
  return row;
}

ResponseRow decode_response(const Json& j) {
  ResponseRow row;
  row.prompt_id = Get<std::string>(j, "prompt_id");
  row.response_id = GetInt(j, "response_id");
  row.tokens = GetTokens(j, "tokens");
  const Json& seed = Field(j, "seed");
  if (!seed.is_number_unsigned() && !(seed.is_number_integer() && seed.get<std::int64_t>() >= 0)) {
    Fail(ErrorKind::kSchema, "field 'seed' must be a non-negative integer");
  }
  row.seed = seed.get<std::uint64_t>();
  return row;
}

DemonstrationRow decode_demonstration(const Json& j) {
  return {Get<std::string>(j, "prompt_id"), GetTokens(j, "prompt"), GetTokens(j, "response")};
}

AnnotationRecord decode_annotation(const Json& j) {
  AnnotationRecord r;
  r.prompt_id = Get<std::string>(j, "prompt_id");
  r.response_id = GetInt(j, "response_id");
  r.annotator = Get<std::string>(j, "annotator");
  if (j.contains("timestamp")) r.timestamp = Get<std::int64_t>(j, "timestamp");
  const Json& levels = Field(j, "levels");
  if (!levels.is_object()) Fail(ErrorKind::kSchema, "field 'levels' must be an object");
  for (auto it = levels.begin(); it != levels.end(); ++it) {
    const auto category = ParseCategory(it.key());
    if (!category) Fail(ErrorKind::kSchema, "unknown category '" + it.key() + "'");
    if (!it.value().is_string()) {
      Fail(ErrorKind::kSchema, "level for '" + it.key() + "' must be a string");
    }
    const auto level = ParseLevel(it.value().get<std::string>());
    if (!level) {
      Fail(ErrorKind::kSchema, "unknown level '" + it.value().get<std::string>() +
                                   "' for '" + it.key() + "'");
    }
    r.set(*category, *level);
  }
  if (const auto missing = r.first_missing()) {
    Fail(ErrorKind::kSchema, "missing category '" + std::string(CategoryName(*missing)) + "'");
  }
  return r;
}

RankedResponseSet decode_ranking(const Json& j) {
  RankedResponseSet r;
  r.prompt_id = Get<std::string>(j, "prompt_id");
  r.order = GetTokens(j, "order");
  r.scores = Get<std::vector<double>>(j, "scores");
  if (r.order.size() != r.scores.size()) {
    Fail(ErrorKind::kSchema, "ranking '" + r.prompt_id + "': order and scores differ in length");
  }
  return r;
}

PreferencePair decode_pair(const Json& j) {
  PreferencePair p;
  p.prompt_id = Get<std::string>(j, "prompt_id");
  p.chosen_id = GetInt(j, "chosen_id");
  p.rejected_id = GetInt(j, "rejected_id");
  const std::string source = Get<std::string>(j, "source");
  if (source != "human" && source != "oracle") {
    Fail(ErrorKind::kSchema, "unknown pair source '" + source + "'");
  }
  p.source = ParsePairSource(source);
  return p;
}

std::vector<PromptRow> read_prompts(const std::filesystem::path& path) {
  return from_jsonl(read_file(path), path.string(), &decode_prompt);
}
std::vector<ResponseRow> read_responses(const std::filesystem::path& path) {
  return from_jsonl(read_file(path), path.string(), &decode_response);
}
std::vector<DemonstrationRow> read_demonstrations(const std::filesystem::path& path) {
  return from_jsonl(read_file(path), path.string(), &decode_demonstration);
}
std::vector<AnnotationRecord> read_annotations(const std::filesystem::path& path) {
  return from_jsonl(read_file(path), path.string(), &decode_annotation);
}
std::vector<RankedResponseSet> read_rankings(const std::filesystem::path& path) {
  return from_jsonl(read_file(path), path.string(), &decode_ranking);
}
std::vector<PreferencePair> read_pairs(const std::filesystem::path& path) {
  return from_jsonl(read_file(path), path.string(), &decode_pair);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorKind::kMissingInput, "missing input file: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp" + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) Fail(ErrorKind::kIo, "cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) Fail(ErrorKind::kIo, "short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) Fail(ErrorKind::kIo, "cannot rename " + tmp.string() + ": " + ec.message());
}

}  // namespace tinyrlhf
