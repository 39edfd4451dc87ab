#ifndef TINYRLHF_PREFERENCE_HPP_
#define TINYRLHF_PREFERENCE_HPP_

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tinyrlhf {

// Rubric categories in display order.
enum class Category {
  kClarity,
  kAccuracy,
  kCompleteness,
  kSafety,
  kCourtesy,
  kComfortableness,
  kConciseness,
  kContext,
};

enum class Level { kPositive, kNeutral, kNegative };

inline constexpr int kNumCategories = 8;

struct CriterionRubric {
  static constexpr std::array<Category, kNumCategories> kCategories = {
      Category::kClarity,     Category::kAccuracy,        Category::kCompleteness,
      Category::kSafety,      Category::kCourtesy,        Category::kComfortableness,
      Category::kConciseness, Category::kContext};
  static constexpr std::array<int, kNumCategories> kWeights = {6, 6, 6, 3, 3, 3, 1, 1};
  static constexpr int kWeightSum = 29;
  static constexpr int kMaxLevelScore = 5;
  static constexpr int kMaxScore = kWeightSum * kMaxLevelScore;  // 145

  static constexpr int level_score(Level level) {
    switch (level) {
      case Level::kPositive: return 5;
      case Level::kNeutral: return 2;
      case Level::kNegative: return 0;
    }
    return 0;
  }
  static constexpr int weight(Category c) { return kWeights[static_cast<int>(c)]; }
};

std::string_view CategoryName(Category c);
std::optional<Category> ParseCategory(std::string_view name);
std::string_view LevelName(Level level);
std::optional<Level> ParseLevel(std::string_view name);

struct AnnotationRecord {
  std::string annotator;
  std::string prompt_id;
  int response_id = 0;
  std::array<std::optional<Level>, kNumCategories> levels;
  std::int64_t timestamp = 0;

  void set(Category c, Level l) { levels[static_cast<int>(c)] = l; }
  // Empty when valid, otherwise names the first missing category.
  std::optional<Category> first_missing() const;

  friend bool operator==(const AnnotationRecord&, const AnnotationRecord&) = default;
};

AnnotationRecord uniform_record(Level level, std::string annotator = "a",
                                std::string prompt_id = "p", int response_id = 0);

struct WeightedScore {
  double score = 0.0;       // in [0, 145]
  double percentage = 0.0;  // score / 145 * 100
};

// Throws kSchema if any category is missing.
WeightedScore weighted_score(const AnnotationRecord& record);

// Mean of the records' weighted scores; throws on an empty set.
double aggregate_annotators(std::span<const AnnotationRecord> records);

// Percentage with one decimal, e.g. "87.6".
std::string format_percentage(double percentage);

struct ScoredResponse {
  int response_id = 0;
  double score = 0.0;
};

struct RankedResponseSet {
  std::string prompt_id;
  std::vector<int> order;        // response ids, best first
  std::vector<double> scores;    // aligned with `order`

  int k() const { return static_cast<int>(order.size()); }
  friend bool operator==(const RankedResponseSet&, const RankedResponseSet&) = default;
};

// Descending score; equal scores keep the lower response id first.
RankedResponseSet rank_responses(std::string prompt_id,
                                 std::span<const ScoredResponse> scored);

enum class PairSource { kHuman, kOracle };
std::string_view PairSourceName(PairSource s);
PairSource ParsePairSource(std::string_view name);

struct PreferencePair {
  std::string prompt_id;
  int chosen_id = 0;
  int rejected_id = 0;
  PairSource source = PairSource::kOracle;

  friend bool operator==(const PreferencePair&, const PreferencePair&) = default;
};

// Top-2 x bottom-2 cross product, in the order (1,k-1), (1,k), (2,k-1), (2,k)
// of 1-based ranks. Pairs whose scores are equal are dropped. Throws
// kInvalidArgument when k < 4.
std::vector<PreferencePair> extract_pairs(const RankedResponseSet& ranking,
                                          PairSource source);

// Groups records by (prompt, response), aggregates, ranks each prompt and
// extracts pairs. Prompts with fewer than `min_annotators` distinct
// annotators on any response, or fewer than 4 responses, are skipped.
// Output is sorted by prompt id, independent of input order.
struct PairBuildResult {
  std::vector<RankedResponseSet> rankings;
  std::vector<PreferencePair> pairs;
};
PairBuildResult build_pairs_from_annotations(std::span<const AnnotationRecord> records,
                                             PairSource source,
                                             int min_annotators = 1);

struct OracleAnnotatorConfig {
  double noise = 0.0;  // uniform perturbation amplitude on the quality
  std::uint64_t seed = 0;
};

// Maps a quality in [0, 1] to one level per category: >= 2/3 Positive,
// >= 1/3 Neutral, else Negative, after an optional seeded perturbation drawn
// independently per category.
AnnotationRecord oracle_annotate(double quality, std::string annotator,
                                 std::string prompt_id, int response_id,
                                 const OracleAnnotatorConfig& config);

}  // namespace tinyrlhf

#endif  // TINYRLHF_PREFERENCE_HPP_
