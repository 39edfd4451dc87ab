#include "tinyrlhf/oracle.hpp"

#include <algorithm>
#include <cmath>

#include "tinyrlhf/error.hpp"
#include "tinyrlhf/rng.hpp"

namespace tinyrlhf {
namespace {

Tokens ContentTokens(std::span<const int> response) {
  Tokens out;
  for (int t : response) {
    if (t >= kFirstContentToken) out.push_back(t);
  }
  return out;
}

double SortedFraction(const Tokens& content) {
  if (content.size() < 2) return 0.0;
  int ascending = 0;
  for (std::size_t i = 1; i < content.size(); ++i) {
    if (content[i] > content[i - 1]) ++ascending;
  }
  return static_cast<double>(ascending) / static_cast<double>(content.size() - 1);
}

double UnigramMatch(const OracleTask& task, const Tokens& content) {
  if (content.empty()) return 0.0;
  const int n = task.num_content_tokens();
  std::vector<double> freq(n, 0.0);
  for (int t : content) {
    if (t - kFirstContentToken < n) freq[t - kFirstContentToken] += 1.0;
  }
  double tv = 0.0;
  for (int i = 0; i < n; ++i) {
    tv += std::abs(freq[i] / content.size() - task.target[i]);
  }
  return std::clamp(1.0 - 0.5 * tv, 0.0, 1.0);
}

double KeywordCoverage(const OracleTask& task, const Tokens& content) {
  int covered = 0;
  for (const Tokens& kw : task.keywords) {
    if (std::search(content.begin(), content.end(), kw.begin(), kw.end()) !=
        content.end()) {
      ++covered;
    }
  }
  return static_cast<double>(covered) / static_cast<double>(task.keywords.size());
}

}  // namespace

std::string_view TaskKindName(TaskKind kind) {
  switch (kind) {
    case TaskKind::kSortedSequence: return "sorted-sequence";
    case TaskKind::kTargetUnigram: return "target-unigram";
    case TaskKind::kKeywordCoverage: return "keyword-coverage";
  }
  return "";
}

TaskKind ParseTaskKind(std::string_view name) {
  for (TaskKind k : {TaskKind::kSortedSequence, TaskKind::kTargetUnigram,
                     TaskKind::kKeywordCoverage}) {
    if (TaskKindName(k) == name) return k;
  }
  Fail(ErrorKind::kConfig, "unknown oracle task '" + std::string(name) + "'");
}

void OracleTask::validate() const {
  if (vocab_size < 4) Fail(ErrorKind::kConfig, "oracle task: vocab_size must be >= 4");
  if (prompt_length < 0) Fail(ErrorKind::kConfig, "oracle task: negative prompt_length");
  if (kind == TaskKind::kTargetUnigram) {
    if (static_cast<int>(target.size()) != num_content_tokens()) {
      Fail(ErrorKind::kConfig, "target-unigram: target needs one weight per content token");
    }
    double total = 0.0;
    for (double w : target) {
      if (w < 0.0) Fail(ErrorKind::kConfig, "target-unigram: negative weight");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-9) {
      Fail(ErrorKind::kConfig, "target-unigram: weights must sum to 1");
    }
  }
  if (kind == TaskKind::kKeywordCoverage) {
    if (keywords.empty()) Fail(ErrorKind::kConfig, "keyword-coverage: empty keyword set");
    for (const Tokens& kw : keywords) {
      if (kw.empty()) Fail(ErrorKind::kConfig, "keyword-coverage: empty keyword");
      for (int t : kw) {
        if (t < kFirstContentToken || t >= vocab_size) {
          Fail(ErrorKind::kConfig, "keyword-coverage: keyword token outside content range");
        }
      }
    }
  }
}

double oracle_quality(const OracleTask& task, std::span<const int> /*prompt*/,
                      std::span<const int> response) {
  if (response.empty()) Fail(ErrorKind::kInvalidArgument, "oracle: empty response");
  const Tokens content = ContentTokens(response);
  switch (task.kind) {
    case TaskKind::kSortedSequence: return SortedFraction(content);
    case TaskKind::kTargetUnigram: return UnigramMatch(task, content);
    case TaskKind::kKeywordCoverage: return KeywordCoverage(task, content);
  }
  return 0.0;
}

std::vector<Tokens> make_prompts(const OracleTask& task, int count,
                                 std::uint64_t seed) {
  task.validate();
  CounterRng rng(seed);
  std::vector<Tokens> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    Tokens p{kBosToken};
    for (int j = 0; j < task.prompt_length; ++j) {
      p.push_back(kFirstContentToken +
                  static_cast<int>(rng.below(task.num_content_tokens())));
    }
    out.push_back(std::move(p));
  }
  return out;
}

OracleRanking oracle_rank(const OracleTask& task, const std::string& prompt_id,
                          std::span<const int> prompt,
                          std::span<const Tokens> responses,
                          const OracleAnnotatorConfig& annotator, int annotators) {
  OracleRanking out;
  std::vector<ScoredResponse> scored;
  for (int i = 0; i < static_cast<int>(responses.size()); ++i) {
    const double q = oracle_quality(task, prompt, responses[i]);
    out.qualities.push_back(q);
    scored.push_back({i, q});
    for (int a = 0; a < annotators; ++a) {
      out.annotations.push_back(oracle_annotate(
          q, "oracle-" + std::to_string(a), prompt_id, i, annotator));
    }
  }
  out.ranking = rank_responses(prompt_id, scored);
  return out;
}

}  // namespace tinyrlhf
