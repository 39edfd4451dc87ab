#include <doctest.h>

#include <algorithm>
#include <random>

#include "oracles.hpp"
#include "tinyrlhf/error.hpp"
#include "tinyrlhf/preference.hpp"

using namespace tinyrlhf;

namespace {

AnnotationRecord AccuracyNeutral(std::string annotator = "a") {
  AnnotationRecord r = uniform_record(Level::kPositive, std::move(annotator));
  r.set(Category::kAccuracy, Level::kNeutral);
  return r;
}

std::vector<ScoredResponse> Scored(std::initializer_list<double> scores, int first_id = 0) {
  std::vector<ScoredResponse> out;
  int id = first_id;
  for (double s : scores) out.push_back({id++, s});
  return out;
}

}  // namespace

TEST_CASE("rubric constants") {
  CHECK(CriterionRubric::kMaxScore == 145);
  CHECK(CriterionRubric::kWeightSum == 29);
  CHECK(CriterionRubric::level_score(Level::kPositive) == 5);
  CHECK(CriterionRubric::level_score(Level::kNeutral) == 2);
  CHECK(CriterionRubric::level_score(Level::kNegative) == 0);
}

TEST_CASE("weighted score fixtures") {
  const WeightedScore top = weighted_score(uniform_record(Level::kPositive));
  CHECK(top.score == 145.0);
  CHECK(top.percentage == 100.0);

  const WeightedScore bottom = weighted_score(uniform_record(Level::kNegative));
  CHECK(bottom.score == 0.0);
  CHECK(bottom.percentage == 0.0);

  const WeightedScore mixed = weighted_score(AccuracyNeutral());
  CHECK(mixed.score == 127.0);
  CHECK(mixed.percentage == doctest::Approx(127.0 / 145.0 * 100.0).epsilon(1e-15));
  CHECK(std::round(mixed.percentage * 1000) / 1000 == 87.586);
  CHECK(format_percentage(mixed.percentage) == "87.6");
  CHECK(format_percentage(100.0) == "100.0");
}

TEST_CASE("weighted score agrees with the direct sum on random records") {
  std::mt19937_64 gen(1);
  std::uniform_int_distribution<int> pick(0, 2);
  const Level levels[] = {Level::kPositive, Level::kNeutral, Level::kNegative};
  for (int trial = 0; trial < 500; ++trial) {
    AnnotationRecord r;
    std::vector<int> level_scores;
    for (Category c : CriterionRubric::kCategories) {
      const Level l = levels[pick(gen)];
      r.set(c, l);
      level_scores.push_back(l == Level::kPositive ? 5 : l == Level::kNeutral ? 2 : 0);
    }
    CHECK(weighted_score(r).score == oracle::rubric_total(level_scores));
  }
}

TEST_CASE("a record missing a category is rejected") {
  AnnotationRecord r = uniform_record(Level::kPositive);
  r.levels[static_cast<int>(Category::kCourtesy)].reset();
  CHECK(r.first_missing() == Category::kCourtesy);
  try {
    weighted_score(r);
    FAIL("expected a schema error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kSchema);
  }
}

TEST_CASE("annotator aggregation") {
  const AnnotationRecord same[] = {AccuracyNeutral("x"), AccuracyNeutral("y"), AccuracyNeutral("z")};
  CHECK(aggregate_annotators(same) == 127.0);

  const AnnotationRecord mixed[] = {uniform_record(Level::kPositive, "x"),
                                    uniform_record(Level::kNegative, "y"),
                                    uniform_record(Level::kPositive, "z")};
  CHECK(aggregate_annotators(mixed) == doctest::Approx(96.667).epsilon(1e-5));
  CHECK(aggregate_annotators(mixed) == doctest::Approx(290.0 / 3).epsilon(1e-15));

  AnnotationRecord permuted[] = {mixed[1], mixed[2], mixed[0]};
  CHECK(aggregate_annotators(permuted) == aggregate_annotators(mixed));
  CHECK_THROWS_AS(aggregate_annotators(std::span<const AnnotationRecord>{}), Error);
}

TEST_CASE("ranking by score") {
  const auto scored = Scored({10, 30, 20}, 1);
  const RankedResponseSet r = rank_responses("p", scored);
  CHECK(r.order == std::vector<int>{2, 3, 1});
  CHECK(r.scores == std::vector<double>{30, 20, 10});

  const auto flat = Scored({4, 4, 4, 4});
  CHECK(rank_responses("p", flat).order == std::vector<int>{0, 1, 2, 3});
}

TEST_CASE("ranking is invariant under positive affine maps") {
  std::mt19937_64 gen(2);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<ScoredResponse> a, b;
    const double scale = 0.1 + std::abs(u(gen)), shift = u(gen);
    for (int i = 0; i < 6; ++i) {
      const double s = std::round(u(gen));  // integer scores so ties happen
      a.push_back({i, s});
      b.push_back({i, scale * s + shift});
    }
    CHECK(rank_responses("p", a).order == rank_responses("p", b).order);
  }
}

TEST_CASE("top two against bottom two") {
  const auto scored = Scored({5, 4, 3, 2, 1});  // a..e = ids 0..4
  const auto pairs = extract_pairs(rank_responses("p", scored), PairSource::kHuman);
  const std::vector<std::pair<int, int>> expected = {{0, 3}, {0, 4}, {1, 3}, {1, 4}};
  REQUIRE(pairs.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(pairs[i].chosen_id == expected[i].first);
    CHECK(pairs[i].rejected_id == expected[i].second);
    CHECK(pairs[i].source == PairSource::kHuman);
    CHECK(pairs[i].prompt_id == "p");
  }

  const auto four = extract_pairs(rank_responses("q", Scored({1, 9, 3, 7})), PairSource::kOracle);
  REQUIRE(four.size() == 4);
  for (const PreferencePair& p : four) {
    CHECK((p.chosen_id == 1 || p.chosen_id == 3));
    CHECK((p.rejected_id == 0 || p.rejected_id == 2));
  }
}

TEST_CASE("pairs never match a response with itself and skip exact ties") {
  std::mt19937_64 gen(3);
  std::uniform_int_distribution<int> u(0, 3);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<ScoredResponse> s;
    for (int i = 0; i < 5; ++i) s.push_back({i, static_cast<double>(u(gen))});
    const RankedResponseSet r = rank_responses("p", s);
    for (const PreferencePair& p : extract_pairs(r, PairSource::kOracle)) {
      CHECK(p.chosen_id != p.rejected_id);
      CHECK(s[p.chosen_id].score > s[p.rejected_id].score);
    }
  }
  CHECK(extract_pairs(rank_responses("p", Scored({1, 1, 1, 1, 1})), PairSource::kOracle).empty());
  CHECK_THROWS_AS(extract_pairs(rank_responses("p", Scored({1, 2, 3})), PairSource::kOracle),
                  Error);
}

TEST_CASE("pairs from annotation records") {
  std::vector<AnnotationRecord> records;
  const Level by_response[] = {Level::kNegative, Level::kPositive, Level::kNeutral,
                               Level::kPositive, Level::kNegative};
  for (const char* annotator : {"a1", "a2", "a3"}) {
    for (int id = 0; id < 5; ++id) {
      AnnotationRecord r = uniform_record(by_response[id], annotator, "p1", id);
      if (id == 3) r.set(Category::kClarity, Level::kNeutral);  // 127 < 145
      records.push_back(r);
    }
  }
  // A second prompt with only two annotators.
  for (const char* annotator : {"a1", "a2"}) {
    for (int id = 0; id < 5; ++id) {
      records.push_back(uniform_record(Level::kPositive, annotator, "p0", id));
    }
  }

  const PairBuildResult result = build_pairs_from_annotations(records, PairSource::kHuman, 3);
  REQUIRE(result.rankings.size() == 1);
  CHECK(result.rankings[0].prompt_id == "p1");
  CHECK(result.rankings[0].order == std::vector<int>{1, 3, 2, 0, 4});
  REQUIRE(result.pairs.size() == 4);
  CHECK(result.pairs[0] == PreferencePair{"p1", 1, 0, PairSource::kHuman});

  std::vector<AnnotationRecord> shuffled = records;
  std::shuffle(shuffled.begin(), shuffled.end(), std::mt19937_64(4));
  const PairBuildResult again = build_pairs_from_annotations(shuffled, PairSource::kHuman, 3);
  CHECK(again.pairs == result.pairs);
  CHECK(again.rankings == result.rankings);

  // With a lower bar both prompts qualify; p0 ties everywhere and yields no pairs.
  const PairBuildResult loose = build_pairs_from_annotations(records, PairSource::kHuman, 2);
  CHECK(loose.rankings.size() == 2);
  CHECK(loose.rankings[0].prompt_id == "p0");
  CHECK(loose.pairs.size() == 4);
}

TEST_CASE("oracle annotator levels") {
  const AnnotationRecord best = oracle_annotate(1.0, "o", "p", 0, {});
  CHECK(weighted_score(best).percentage == 100.0);
  const AnnotationRecord worst = oracle_annotate(0.0, "o", "p", 0, {});
  CHECK(weighted_score(worst).percentage == 0.0);
  const AnnotationRecord mid = oracle_annotate(0.5, "o", "p", 0, {});
  for (const auto& l : mid.levels) CHECK(l == Level::kNeutral);

  for (double q : {0.1, 0.4, 0.7, 0.95}) {
    CHECK(oracle_annotate(q, "o", "p", 1, {.noise = 0.0, .seed = 1}) ==
          oracle_annotate(q, "o", "p", 1, {.noise = 0.0, .seed = 99}));
  }
  // Noise perturbs, but stays a function of the seed.
  const OracleAnnotatorConfig noisy{.noise = 0.5, .seed = 7};
  CHECK(oracle_annotate(0.6, "o", "p", 1, noisy) == oracle_annotate(0.6, "o", "p", 1, noisy));
}

TEST_CASE("names round-trip") {
  for (Category c : CriterionRubric::kCategories) CHECK(ParseCategory(CategoryName(c)) == c);
  for (Level l : {Level::kPositive, Level::kNeutral, Level::kNegative}) {
    CHECK(ParseLevel(LevelName(l)) == l);
  }
  CHECK(!ParseCategory("Tone").has_value());
  CHECK(ParsePairSource(PairSourceName(PairSource::kHuman)) == PairSource::kHuman);
}
