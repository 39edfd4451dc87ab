#include <doctest.h>

#include <cmath>
#include <random>

#include "tinyrlhf/error.hpp"
#include "tinyrlhf/reward_training.hpp"
#include "tinyrlhf/rlhf.hpp"
#include "tinyrlhf/sft.hpp"

using namespace tinyrlhf;

namespace {

BackboneConfig Actor() {
  return {.vocab_size = 16, .context_length = 24, .embed_dim = 16, .num_layers = 1,
          .num_heads = 2};
}

BackboneConfig Scalar() {
  BackboneConfig c = Actor();
  c.head = HeadKind::kScalar;
  return c;
}

void Randomize(Transformer& net, const char* name, double scale, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> n(0.0, scale);
  Tensor& t = net.parameter(name);
  for (int i = 0; i < t.numel(); ++i) t[i] = n(gen);
}

struct World {
  OracleTask task;
  std::vector<Tokens> prompts = make_prompts(task, 24, 3);
  PolicyModel actor{Actor(), 1};
  CriticModel critic{Scalar(), 2};
  RewardModel reward{Scalar(), 3};

  World() {
    Randomize(actor.net(), "head.w", 0.8, 4);
    Randomize(reward.net(), "head.w", 1.0, 5);
  }
};

RlhfConfig Fast(int iterations, double lr = 1e-2, double beta = 0.1) {
  RlhfConfig c;
  c.iterations = iterations;
  c.seed = 11;
  c.ppo.rollout_batch_size = 8;
  c.ppo.ppo_epochs = 2;
  c.ppo.actor_lr = lr;
  c.ppo.critic_lr = lr;
  c.ppo.kl_beta = beta;
  c.rollout.max_response_tokens = 8;
  return c;
}

bool SameParameters(const Transformer& a, const Transformer& b) {
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    if (!(a.parameters()[i].tensor.data() == b.parameters()[i].tensor.data()).all()) {
      return false;
    }
  }
  return true;
}

// KL written as an explicit double loop over softmax probabilities.
double DirectKl(const PolicyModel& p, const PolicyModel& q, const Tokens& prompt,
                const Tokens& response) {
  Tokens seq = prompt;
  double total = 0.0;
  for (int token : response) {
    const RowMatrix lp = p.logits(seq), lq = q.logits(seq);
    const auto row_p = lp.row(lp.rows() - 1), row_q = lq.row(lq.rows() - 1);
    double zp = 0.0, zq = 0.0;
    for (int v = 0; v < row_p.size(); ++v) {
      zp += std::exp(row_p[v]);
      zq += std::exp(row_q[v]);
    }
    for (int v = 0; v < row_p.size(); ++v) {
      const double pv = std::exp(row_p[v]) / zp, qv = std::exp(row_q[v]) / zq;
      total += pv * std::log(pv / qv);
    }
    seq.push_back(token);
  }
  return total / static_cast<double>(response.size());
}

}  // namespace

TEST_CASE("rollout fills every per-token array") {
  World w;
  const ReferenceModel ref = snapshot_reference(w.actor);
  SamplerConfig s;
  s.max_response_tokens = 8;
  s.seed = 7;
  const PPOConfig ppo;
  const Trajectory t = rollout(w.actor, ref, w.critic, w.reward, w.prompts[0], s, ppo);
  REQUIRE(t.length() >= 1);
  REQUIRE(t.length() <= 8);
  CHECK_NOTHROW(t.check());
  CHECK(t.has_advantages());
  CHECK(t.response == sample_response(w.actor, w.prompts[0], s));
  CHECK((t.old_log_probs <= 0.0).all());
  CHECK((t.old_log_probs == t.ref_log_probs).all());
  CHECK(t.mean_kl == 0.0);
  CHECK(t.reward_score == w.reward.score(w.prompts[0], t.response));
  // Identical actor and reference: no shaping except the final score.
  CHECK(t.rewards[t.length() - 1] == t.reward_score);
  CHECK((t.rewards.head(t.length() - 1) == 0.0).all());
}

TEST_CASE("mean token KL matches the explicit sum") {
  World w;
  PolicyModel other(Actor(), 9);
  Randomize(other.net(), "head.w", 0.8, 10);
  const ReferenceModel ref = snapshot_reference(other);
  const Tokens response = {4, 9, 9, 13, 2};
  const double kl = mean_token_kl(w.actor, ref, w.prompts[1], response);
  CHECK(kl > 0.0);
  CHECK(kl == doctest::Approx(DirectKl(w.actor, other, w.prompts[1], response)).epsilon(1e-12));
}

TEST_CASE("zero iterations leave the actor untouched") {
  World w;
  const PolicyModel before = w.actor;
  const ReferenceModel ref = snapshot_reference(w.actor);
  CHECK(rlhf_train(w.actor, w.critic, w.reward, ref, w.prompts, Fast(0)).empty());
  CHECK(SameParameters(w.actor.net(), before.net()));
}

TEST_CASE("zero learning rates keep parameters bit-identical") {
  World w;
  const PolicyModel actor_before = w.actor;
  const CriticModel critic_before = w.critic;
  const ReferenceModel ref = snapshot_reference(w.actor);
  const auto log = rlhf_train(w.actor, w.critic, w.reward, ref, w.prompts, Fast(3, 0.0));
  CHECK(log.size() == 3);
  CHECK(SameParameters(w.actor.net(), actor_before.net()));
  CHECK(SameParameters(w.critic.net(), critic_before.net()));
  for (const auto& m : log) CHECK(m.mean_kl == 0.0);
}

TEST_CASE("same seed, same run") {
  World a, b;
  const ReferenceModel ra = snapshot_reference(a.actor), rb = snapshot_reference(b.actor);
  const auto la = rlhf_train(a.actor, a.critic, a.reward, ra, a.prompts, Fast(4), &a.task);
  const auto lb = rlhf_train(b.actor, b.critic, b.reward, rb, b.prompts, Fast(4), &b.task);
  REQUIRE(la.size() == lb.size());
  for (std::size_t i = 0; i < la.size(); ++i) {
    CHECK(la[i].iteration == static_cast<int>(i) + 1);
    CHECK(la[i].mean_reward == lb[i].mean_reward);
    CHECK(la[i].mean_kl == lb[i].mean_kl);
    CHECK(la[i].actor_loss == lb[i].actor_loss);
    CHECK(la[i].critic_loss == lb[i].critic_loss);
    CHECK(la[i].mean_oracle_quality == lb[i].mean_oracle_quality);
  }
  CHECK(SameParameters(a.actor.net(), b.actor.net()));
  CHECK(la.back().mean_kl > 0.0);
}

TEST_CASE("a callback sees every iteration") {
  World w;
  const ReferenceModel ref = snapshot_reference(w.actor);
  int seen = 0;
  const auto log = rlhf_train(w.actor, w.critic, w.reward, ref, w.prompts, Fast(3), nullptr,
                              [&](const IterationMetrics& m) { CHECK(m.iteration == ++seen); });
  CHECK(seen == 3);
  CHECK_FALSE(log.front().mean_oracle_quality.has_value());
}

TEST_CASE("the policy climbs the reward and a large KL weight holds it near the reference") {
  auto run = [](double beta) {
    World w;
    const ReferenceModel ref = snapshot_reference(w.actor);
    const auto log = rlhf_train(w.actor, w.critic, w.reward, ref, w.prompts, Fast(30, 1e-2, beta));
    SamplerConfig s;
    s.max_response_tokens = 8;
    const PolicyEvaluation e = evaluate_policy(w.actor, w.task, w.prompts, s, 99, &ref, &w.reward);
    return std::pair{log, e};
  };
  const auto [free_log, free_eval] = run(0.0);
  const auto [tied_log, tied_eval] = run(1.0);
  double early = 0, late = 0;
  for (int i = 0; i < 5; ++i) {
    early += free_log[i].mean_reward;
    late += free_log[free_log.size() - 1 - i].mean_reward;
  }
  CHECK(late > early);
  CHECK(tied_eval.mean_kl < free_eval.mean_kl);
}

TEST_CASE("invalid loop settings") {
  World w;
  const ReferenceModel ref = snapshot_reference(w.actor);
  CHECK_THROWS_AS(rlhf_train(w.actor, w.critic, w.reward, ref, {}, Fast(1)), Error);
  RlhfConfig bad = Fast(1);
  bad.ppo.lambda = 1.5;
  CHECK_THROWS_AS(rlhf_train(w.actor, w.critic, w.reward, ref, w.prompts, bad), Error);
  bad = Fast(-1);
  CHECK_THROWS_AS(rlhf_train(w.actor, w.critic, w.reward, ref, w.prompts, bad), Error);
  CHECK_THROWS_AS(evaluate_policy(w.actor, w.task, {}, {}, 1), Error);
}

TEST_CASE("evaluation is reproducible and bounded") {
  World w;
  SamplerConfig s;
  s.max_response_tokens = 8;
  const PolicyEvaluation a = evaluate_policy(w.actor, w.task, w.prompts, s, 5);
  const PolicyEvaluation b = evaluate_policy(w.actor, w.task, w.prompts, s, 5);
  CHECK(a.mean_oracle_quality == b.mean_oracle_quality);
  CHECK(a.mean_oracle_quality >= 0.0);
  CHECK(a.mean_oracle_quality <= 1.0);
  CHECK(a.mean_length >= 1.0);
  CHECK(a.mean_length <= 8.0);
  CHECK(a.mean_kl == 0.0);
  CHECK(a.mean_reward == 0.0);
}

TEST_CASE("demonstrations and the supervised warm start") {
  const OracleTask task;
  const auto prompts = make_prompts(task, 40, 1);
  const auto demos = make_demonstrations(task, prompts, 3, 6, 2);
  REQUIRE(demos.size() == prompts.size());
  double quality = 0.0;
  for (const Demonstration& d : demos) {
    CHECK(d.response.size() >= 4);
    CHECK(d.response.size() <= 7);
    CHECK(d.response.back() == kEosToken);
    for (std::size_t i = 0; i + 1 < d.response.size(); ++i) CHECK(d.response[i] >= 3);
    quality += oracle_quality(task, d.prompt, d.response) / demos.size();
  }
  CHECK(quality > 0.2);
  CHECK(quality < 0.8);
  CHECK(make_demonstrations(task, prompts, 3, 6, 2).front().response == demos.front().response);

  PolicyModel policy(Actor(), 3);
  const auto losses = train_sft(policy, demos, {.learning_rate = 1e-2, .epochs = 5, .seed = 4});
  REQUIRE(losses.size() == 5);
  CHECK(losses.front() == doctest::Approx(std::log(16.0)).epsilon(0.05));
  CHECK(losses.back() < losses.front());
}
