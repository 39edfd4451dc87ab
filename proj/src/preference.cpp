#include "tinyrlhf/preference.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "tinyrlhf/error.hpp"
#include "tinyrlhf/rng.hpp"

namespace tinyrlhf {

std::string_view CategoryName(Category c) {
  switch (c) {
    case Category::kClarity: return "Clarity";
    case Category::kAccuracy: return "Accuracy";
    case Category::kCompleteness: return "Completeness";
    case Category::kSafety: return "Safety";
    case Category::kCourtesy: return "Courtesy";
    case Category::kComfortableness: return "Comfortableness";
    case Category::kConciseness: return "Conciseness";
    case Category::kContext: return "Context";
  }
  return "";
}

std::optional<Category> ParseCategory(std::string_view name) {
  for (Category c : CriterionRubric::kCategories) {
    if (CategoryName(c) == name) return c;
  }
  return std::nullopt;
}

std::string_view LevelName(Level level) {
  switch (level) {
    case Level::kPositive: return "Positive";
    case Level::kNeutral: return "Neutral";
    case Level::kNegative: return "Negative";
  }
  return "";
}

std::optional<Level> ParseLevel(std::string_view name) {
  for (Level l : {Level::kPositive, Level::kNeutral, Level::kNegative}) {
    if (LevelName(l) == name) return l;
  }
  return std::nullopt;
}

std::optional<Category> AnnotationRecord::first_missing() const {
  for (int i = 0; i < kNumCategories; ++i) {
    if (!levels[i]) return CriterionRubric::kCategories[i];
  }
  return std::nullopt;
}

AnnotationRecord uniform_record(Level level, std::string annotator,
                                std::string prompt_id, int response_id) {
  AnnotationRecord r;
  r.annotator = std::move(annotator);
  r.prompt_id = std::move(prompt_id);
  r.response_id = response_id;
  for (Category c : CriterionRubric::kCategories) r.set(c, level);
  return r;
}

WeightedScore weighted_score(const AnnotationRecord& record) {
  if (auto missing = record.first_missing()) {
    Fail(ErrorKind::kSchema, "annotation is missing category " +
                                 std::string(CategoryName(*missing)));
  }
  int total = 0;
  for (int i = 0; i < kNumCategories; ++i) {
    total += CriterionRubric::level_score(*record.levels[i]) *
             CriterionRubric::kWeights[i];
  }
  WeightedScore out;
  out.score = total;
  out.percentage = total * 100.0 / CriterionRubric::kMaxScore;
  return out;
}

double aggregate_annotators(std::span<const AnnotationRecord> records) {
  if (records.empty()) {
    Fail(ErrorKind::kInvalidArgument, "aggregate: no annotation records");
  }
  double total = 0.0;
  for (const AnnotationRecord& r : records) total += weighted_score(r).score;
  return total / static_cast<double>(records.size());
}

std::string format_percentage(double percentage) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", percentage);
  return buf;
}

RankedResponseSet rank_responses(std::string prompt_id,
                                 std::span<const ScoredResponse> scored) {
  std::vector<ScoredResponse> sorted(scored.begin(), scored.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const ScoredResponse& a, const ScoredResponse& b) {
              if (a.score != b.score) return a.score > b.score;
              return a.response_id < b.response_id;
            });
  RankedResponseSet out;
  out.prompt_id = std::move(prompt_id);
  for (const ScoredResponse& s : sorted) {
    out.order.push_back(s.response_id);
    out.scores.push_back(s.score);
  }
  return out;
}

std::string_view PairSourceName(PairSource s) {
  return s == PairSource::kHuman ? "human" : "oracle";
}

PairSource ParsePairSource(std::string_view name) {
  if (name == "human") return PairSource::kHuman;
  if (name == "oracle") return PairSource::kOracle;
  Fail(ErrorKind::kSchema, "unknown pair source '" + std::string(name) + "'");
}

std::vector<PreferencePair> extract_pairs(const RankedResponseSet& ranking,
                                          PairSource source) {
  const int k = ranking.k();
  if (k < 4) {
    Fail(ErrorKind::kInvalidArgument,
         "extract-pairs needs at least 4 ranked responses, got " + std::to_string(k));
  }
  std::vector<PreferencePair> pairs;
  for (int top : {0, 1}) {
    for (int bottom : {k - 2, k - 1}) {
      if (!(ranking.scores[top] > ranking.scores[bottom])) continue;
      pairs.push_back({ranking.prompt_id, ranking.order[top],
                       ranking.order[bottom], source});
    }
  }
  return pairs;
}

PairBuildResult build_pairs_from_annotations(std::span<const AnnotationRecord> records,
                                             PairSource source, int min_annotators) {
  std::map<std::string, std::map<int, std::vector<AnnotationRecord>>> grouped;
  for (const AnnotationRecord& r : records) {
    grouped[r.prompt_id][r.response_id].push_back(r);
  }
  PairBuildResult out;
  for (auto& [prompt_id, by_response] : grouped) {
    if (by_response.size() < 4) continue;
    bool enough = true;
    std::vector<ScoredResponse> scored;
    for (auto& [response_id, recs] : by_response) {
      // Order-independence: aggregate in a canonical annotator order.
      std::sort(recs.begin(), recs.end(),
                [](const AnnotationRecord& a, const AnnotationRecord& b) {
                  return a.annotator < b.annotator;
                });
      std::set<std::string> annotators;
      for (const AnnotationRecord& r : recs) annotators.insert(r.annotator);
      if (static_cast<int>(annotators.size()) < min_annotators) enough = false;
      scored.push_back({response_id, aggregate_annotators(recs)});
    }
    if (!enough) continue;
    RankedResponseSet ranking = rank_responses(prompt_id, scored);
    std::vector<PreferencePair> pairs = extract_pairs(ranking, source);
    out.pairs.insert(out.pairs.end(), pairs.begin(), pairs.end());
    out.rankings.push_back(std::move(ranking));
  }
  return out;
}

AnnotationRecord oracle_annotate(double quality, std::string annotator,
                                 std::string prompt_id, int response_id,
                                 const OracleAnnotatorConfig& config) {
  AnnotationRecord r;
  std::uint64_t key = fnv1a64(annotator);
  key = fnv1a64(prompt_id, key);
  key = derive_seed(derive_seed(config.seed, key),
                    static_cast<std::uint64_t>(response_id));
  CounterRng rng(key);
  for (Category c : CriterionRubric::kCategories) {
    double q = quality;
    if (config.noise > 0.0) q += config.noise * (2.0 * rng.uniform() - 1.0);
    const Level level = q >= 2.0 / 3.0   ? Level::kPositive
                        : q >= 1.0 / 3.0 ? Level::kNeutral
                                         : Level::kNegative;
    r.set(c, level);
  }
  r.annotator = std::move(annotator);
  r.prompt_id = std::move(prompt_id);
  r.response_id = response_id;
  return r;
}

}  // namespace tinyrlhf
