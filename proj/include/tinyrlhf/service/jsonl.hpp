#ifndef TINYRLHF_SERVICE_JSONL_HPP_
#define TINYRLHF_SERVICE_JSONL_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tinyrlhf/error.hpp"
#include "tinyrlhf/models.hpp"
#include "tinyrlhf/preference.hpp"

namespace tinyrlhf {

using Json = nlohmann::json;

// prompts.jsonl: {id, tokens} or {id, text}. Text prompts are rendered
// through the instruction template in byte mode.
struct PromptRow {
  std::string id;
  std::optional<Tokens> tokens;
  std::optional<std::string> text;

  Tokens resolve_tokens() const;
  friend bool operator==(const PromptRow&, const PromptRow&) = default;
};

// responses.jsonl
struct ResponseRow {
  std::string prompt_id;
  int response_id = 0;
  Tokens tokens;
  std::uint64_t seed = 0;

  friend bool operator==(const ResponseRow&, const ResponseRow&) = default;
};

// demonstrations.jsonl (supervised warm start)
struct DemonstrationRow {
  std::string prompt_id;
  Tokens prompt;
  Tokens response;

  friend bool operator==(const DemonstrationRow&, const DemonstrationRow&) = default;
};

// Each encoder emits exactly the schema fields; each decoder rejects missing
// or mistyped fields with kSchema.
Json encode(const PromptRow& row);
Json encode(const ResponseRow& row);
Json encode(const DemonstrationRow& row);
Json encode(const AnnotationRecord& record);   // levels keyed by category name
Json encode(const RankedResponseSet& ranking);
Json encode(const PreferencePair& pair);

PromptRow decode_prompt(const Json& j);
ResponseRow decode_response(const Json& j);
DemonstrationRow decode_demonstration(const Json& j);
AnnotationRecord decode_annotation(const Json& j);
RankedResponseSet decode_ranking(const Json& j);
PreferencePair decode_pair(const Json& j);

// One compact JSON object per line, "\n"-terminated.
template <typename T>
std::string to_jsonl(const std::vector<T>& rows) {
  std::string out;
  for (const T& row : rows) {
    out += encode(row).dump();
    out += '\n';
  }
  return out;
}

// Parses every non-empty line with `decode`. Errors name the source and the
// 1-based line: kSchema for bad rows.
template <typename T>
std::vector<T> from_jsonl(std::string_view text, const std::string& source,
                          T (*decode)(const Json&)) {
  std::vector<T> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    const Json j = Json::parse(line, nullptr, /*allow_exceptions=*/false);
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    if (j.is_discarded()) Fail(ErrorKind::kSchema, where + "invalid JSON");
    try {
      out.push_back(decode(j));
    } catch (const Error& e) {
      Fail(e.kind(), where + e.what());
    }
  }
  return out;
}

std::vector<PromptRow> read_prompts(const std::filesystem::path& path);
std::vector<ResponseRow> read_responses(const std::filesystem::path& path);
std::vector<DemonstrationRow> read_demonstrations(const std::filesystem::path& path);
std::vector<AnnotationRecord> read_annotations(const std::filesystem::path& path);
std::vector<RankedResponseSet> read_rankings(const std::filesystem::path& path);
std::vector<PreferencePair> read_pairs(const std::filesystem::path& path);

// Whole-file helpers. read_file raises kMissingInput when the file is absent.
// write_file writes to a sibling temporary and renames it into place.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

template <typename T>
void write_jsonl(const std::filesystem::path& path, const std::vector<T>& rows) {
  write_file(path, to_jsonl(rows));
}

}  // namespace tinyrlhf

#endif  // TINYRLHF_SERVICE_JSONL_HPP_
