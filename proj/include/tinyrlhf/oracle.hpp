#ifndef TINYRLHF_ORACLE_HPP_
#define TINYRLHF_ORACLE_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tinyrlhf/models.hpp"
#include "tinyrlhf/preference.hpp"

namespace tinyrlhf {

enum class TaskKind { kSortedSequence, kTargetUnigram, kKeywordCoverage };

std::string_view TaskKindName(TaskKind kind);
TaskKind ParseTaskKind(std::string_view name);  // throws kConfig if unknown

// Synthetic task with a programmatic quality in [0, 1]. Quality looks only at
// the content tokens of the response (ids >= 3); specials are stripped.
struct OracleTask {
  TaskKind kind = TaskKind::kSortedSequence;
  int vocab_size = 16;
  int prompt_length = 3;               // content tokens after BOS
  std::vector<double> target;          // target-unigram: one weight per content token
  std::vector<Tokens> keywords;        // keyword-coverage: contiguous n-grams

  int num_content_tokens() const { return vocab_size - 3; }
  void validate() const;
};

// Fraction of adjacent strictly ascending pairs (0 with fewer than two
// content tokens), 1 - total variation to `target`, or the fraction of
// keywords appearing contiguously.
double oracle_quality(const OracleTask& task, std::span<const int> prompt,
                      std::span<const int> response);

// BOS followed by prompt_length uniform content tokens.
std::vector<Tokens> make_prompts(const OracleTask& task, int count,
                                 std::uint64_t seed);

struct OracleRanking {
  RankedResponseSet ranking;
  std::vector<double> qualities;              // by response id
  std::vector<AnnotationRecord> annotations;  // `annotators` per response
};

// Ranks by quality descending, ties by response id, and emits synthetic
// annotation records for each response via oracle_annotate.
OracleRanking oracle_rank(const OracleTask& task, const std::string& prompt_id,
                          std::span<const int> prompt,
                          std::span<const Tokens> responses,
                          const OracleAnnotatorConfig& annotator = {},
                          int annotators = 3);

}  // namespace tinyrlhf

#endif  // TINYRLHF_ORACLE_HPP_
