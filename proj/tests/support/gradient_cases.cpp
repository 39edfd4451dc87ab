#include "gradient_cases.hpp"

#include <algorithm>
#include <random>

#include "oracles.hpp"
#include "tinyrlhf/models.hpp"
#include "tinyrlhf/ppo.hpp"
#include "tinyrlhf/reward_training.hpp"

namespace oracle {
namespace {

using namespace tinyrlhf;

Tensor Uniform(std::mt19937_64& gen, Shape shape, double lo = -1.0, double hi = 1.0) {
  return random_tensor(gen, shape, lo, hi);
}

// Uniform values kept at least `gap` away from every point in `kinks`.
Tensor AwayFrom(std::mt19937_64& gen, Shape shape, std::vector<double> kinks,
                double gap = 0.05) {
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  Tensor t(shape);
  for (int i = 0; i < t.numel(); ++i) {
    for (;;) {
      const double v = u(gen);
      bool ok = true;
      for (double k : kinks) ok = ok && std::abs(v - k) > gap;
      if (ok) {
        t[i] = v;
        break;
      }
    }
  }
  return t;
}

// Random linear functional of `out`, so every output coordinate matters.
Var Weigh(Tape& tape, Var out, const Tensor& w) { return sum(out * tape.constant(w)); }

GradientCase Case(std::string name, std::function<double(std::mt19937_64&)> body) {
  return {std::move(name), [body](std::uint64_t seed) {
            std::mt19937_64 gen(seed * 0x9E3779B97F4A7C15ULL + 17);
            return body(gen);
          }};
}

double Binary(std::mt19937_64& gen, Var (*op)(Var, Var), bool scalar_lhs = false) {
  Tensor a = scalar_lhs ? Tensor::scalar(0.7) : Uniform(gen, Shape{3, 4});
  if (scalar_lhs) a[0] = Uniform(gen, Shape{1})[0];
  Tensor b = Uniform(gen, Shape{3, 4});
  const Tensor w = Uniform(gen, Shape{3, 4});
  return finite_difference_error(
      [&](Tape& t) { return Weigh(t, op(t.leaf(a), t.leaf(b)), w); }, {&a, &b});
}

double UnaryCase(std::mt19937_64& gen, Tensor x, const std::function<Var(Var)>& op) {
  Tensor probe = x;
  Tape shape_tape;
  const Tensor w = Uniform(gen, op(shape_tape.leaf(probe)).shape());
  return finite_difference_error([&](Tape& t) { return Weigh(t, op(t.leaf(x)), w); }, {&x});
}

void Randomize(Transformer& net, std::mt19937_64& gen, double scale) {
  for (NamedTensor& p : net.parameters()) {
    p.tensor = Uniform(gen, p.tensor.shape(), -scale, scale);
  }
}

BackboneConfig TinyBackbone(HeadKind head) {
  return {.vocab_size = 8, .context_length = 12, .embed_dim = 8, .num_layers = 1,
          .num_heads = 2, .head = head};
}

Tokens RandomTokens(std::mt19937_64& gen, int n, bool with_bos) {
  std::uniform_int_distribution<int> tok(kFirstContentToken, 7);
  Tokens out;
  if (with_bos) out.push_back(kBosToken);
  for (int i = 0; i < n; ++i) out.push_back(tok(gen));
  return out;
}

struct Episode {
  Tokens prompt;
  Tokens response;
};

std::vector<Episode> RandomEpisodes(std::mt19937_64& gen, int count) {
  std::uniform_int_distribution<int> len(2, 4);
  std::vector<Episode> out;
  for (int i = 0; i < count; ++i) {
    out.push_back({RandomTokens(gen, 2, true), RandomTokens(gen, len(gen), false)});
  }
  return out;
}

}  // namespace

std::vector<GradientCase> gradient_cases() {
  std::vector<GradientCase> cases;
  cases.push_back(Case("add", [](auto& g) { return Binary(g, &add); }));
  cases.push_back(Case("add-broadcast", [](auto& g) { return Binary(g, &add, true); }));
  cases.push_back(Case("sub", [](auto& g) { return Binary(g, &sub); }));
  cases.push_back(Case("mul", [](auto& g) { return Binary(g, &mul); }));
  cases.push_back(Case("mul-broadcast", [](auto& g) { return Binary(g, &mul, true); }));
  cases.push_back(Case("minimum", [](auto& g) {
    Tensor a = Uniform(g, Shape{3, 4});
    Tensor b = a;
    Tensor offset = AwayFrom(g, Shape{3, 4}, {0.0});
    b.data() += offset.data();
    const Tensor w = Uniform(g, Shape{3, 4});
    return finite_difference_error(
        [&](Tape& t) { return Weigh(t, minimum(t.leaf(a), t.leaf(b)), w); }, {&a, &b});
  }));
  cases.push_back(Case("maximum", [](auto& g) {
    Tensor a = Uniform(g, Shape{3, 4});
    Tensor b = a;
    Tensor offset = AwayFrom(g, Shape{3, 4}, {0.0});
    b.data() += offset.data();
    const Tensor w = Uniform(g, Shape{3, 4});
    return finite_difference_error(
        [&](Tape& t) { return Weigh(t, maximum(t.leaf(a), t.leaf(b)), w); }, {&a, &b});
  }));
  cases.push_back(Case("matmul", [](auto& g) {
    Tensor a = Uniform(g, Shape{3, 4});
    Tensor b = Uniform(g, Shape{4, 2});
    const Tensor w = Uniform(g, Shape{3, 2});
    return finite_difference_error(
        [&](Tape& t) { return Weigh(t, matmul(t.leaf(a), t.leaf(b)), w); }, {&a, &b});
  }));
  cases.push_back(Case("exp", [](auto& g) {
    return UnaryCase(g, Uniform(g, Shape{3, 4}), [](Var x) { return exp(x); });
  }));
  cases.push_back(Case("log", [](auto& g) {
    return UnaryCase(g, Uniform(g, Shape{3, 4}, 0.3, 2.0), [](Var x) { return log(x); });
  }));
  cases.push_back(Case("softmax-rows", [](auto& g) {
    return UnaryCase(g, Uniform(g, Shape{3, 5}, -2, 2), [](Var x) { return softmax_rows(x); });
  }));
  cases.push_back(Case("log-softmax-rows", [](auto& g) {
    return UnaryCase(g, Uniform(g, Shape{3, 5}, -2, 2),
                     [](Var x) { return log_softmax_rows(x); });
  }));
  cases.push_back(Case("gather", [](auto& g) {
    std::uniform_int_distribution<int> col(0, 4);
    std::vector<int> idx = {col(g), col(g), col(g), col(g)};
    return UnaryCase(g, Uniform(g, Shape{4, 5}), [idx](Var x) { return gather(x, idx); });
  }));
  cases.push_back(Case("sum", [](auto& g) {
    return UnaryCase(g, Uniform(g, Shape{2, 3, 2}), [](Var x) { return sum(x); });
  }));
  cases.push_back(Case("mean", [](auto& g) {
    return UnaryCase(g, Uniform(g, Shape{3, 4}), [](Var x) { return mean(x); });
  }));
  cases.push_back(Case("max", [](auto& g) {
    Tensor x = Uniform(g, Shape{3, 4});
    const Eigen::Index n = x.numel();
    Eigen::Index top = 0;
    x.data().maxCoeff(&top);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (i != top) x[static_cast<int>(i)] = std::min(x[static_cast<int>(i)], x[static_cast<int>(top)] - 0.05);
    }
    return UnaryCase(g, x, [](Var v) { return max(v); });
  }));
  cases.push_back(Case("relu", [](auto& g) {
    return UnaryCase(g, AwayFrom(g, Shape{3, 4}, {0.0}), [](Var x) { return relu(x); });
  }));
  cases.push_back(Case("tanh", [](auto& g) {
    return UnaryCase(g, Uniform(g, Shape{3, 4}, -2, 2), [](Var x) { return tanh(x); });
  }));
  cases.push_back(Case("scale", [](auto& g) {
    const double c = Uniform(g, Shape{1}, -3, 3)[0];
    return UnaryCase(g, Uniform(g, Shape{3, 4}), [c](Var x) { return scale(x, c); });
  }));
  cases.push_back(Case("clamp", [](auto& g) {
    return UnaryCase(g, AwayFrom(g, Shape{3, 4}, {-0.5, 0.6}),
                     [](Var x) { return clamp(x, -0.5, 0.6); });
  }));
  cases.push_back(Case("concat-cols", [](auto& g) {
    Tensor a = Uniform(g, Shape{3, 2});
    Tensor b = Uniform(g, Shape{3, 4});
    const Tensor w = Uniform(g, Shape{3, 6});
    return finite_difference_error(
        [&](Tape& t) {
          const Var parts[] = {t.leaf(a), t.leaf(b)};
          return Weigh(t, concat(parts), w);
        },
        {&a, &b});
  }));
  cases.push_back(Case("concat-rows", [](auto& g) {
    Tensor a = Uniform(g, Shape{2, 3});
    Tensor b = Uniform(g, Shape{1, 3});
    const Tensor w = Uniform(g, Shape{3, 3});
    return finite_difference_error(
        [&](Tape& t) {
          const Var parts[] = {t.leaf(a), t.leaf(b)};
          return Weigh(t, concat(parts, 0), w);
        },
        {&a, &b});
  }));
  cases.push_back(Case("concat-vectors", [](auto& g) {
    Tensor a = Uniform(g, Shape{3});
    Tensor b = Uniform(g, Shape{2});
    const Tensor w = Uniform(g, Shape{5});
    return finite_difference_error(
        [&](Tape& t) {
          const Var parts[] = {t.leaf(a), t.leaf(b)};
          return Weigh(t, concat(parts), w);
        },
        {&a, &b});
  }));
  cases.push_back(Case("transpose", [](auto& g) {
    return UnaryCase(g, Uniform(g, Shape{3, 4}), [](Var x) { return transpose(x); });
  }));
  cases.push_back(Case("add-row", [](auto& g) {
    Tensor x = Uniform(g, Shape{3, 4});
    Tensor row = Uniform(g, Shape{4});
    const Tensor w = Uniform(g, Shape{3, 4});
    return finite_difference_error(
        [&](Tape& t) { return Weigh(t, add_row(t.leaf(x), t.leaf(row)), w); }, {&x, &row});
  }));
  cases.push_back(Case("slice-rows", [](auto& g) {
    return UnaryCase(g, Uniform(g, Shape{5, 3}), [](Var x) { return slice_rows(x, 1, 3); });
  }));
  cases.push_back(Case("slice-cols", [](auto& g) {
    return UnaryCase(g, Uniform(g, Shape{3, 5}), [](Var x) { return slice_cols(x, 2, 2); });
  }));
  cases.push_back(Case("take-rows", [](auto& g) {
    return UnaryCase(g, Uniform(g, Shape{4, 3}),
                     [](Var x) { return take_rows(x, {2, 0, 2, 3}); });
  }));
  cases.push_back(Case("causal-mask", [](auto& g) {
    return UnaryCase(g, Uniform(g, Shape{4, 4}, -2, 2),
                     [](Var x) { return softmax_rows(causal_mask(x)); });
  }));
  cases.push_back(Case("rms-norm-rows", [](auto& g) {
    return UnaryCase(g, Uniform(g, Shape{3, 5}), [](Var x) { return rms_norm_rows(x); });
  }));
  cases.push_back(Case("reshape", [](auto& g) {
    return UnaryCase(g, Uniform(g, Shape{3, 4}), [](Var x) { return reshape(x, Shape{2, 6}); });
  }));

  cases.push_back(Case("two-layer-mse", [](auto& g) {
    Tensor x = Uniform(g, Shape{6, 3});
    Tensor y = Uniform(g, Shape{6, 1});
    Tensor w1 = Uniform(g, Shape{3, 5});
    Tensor b1 = Uniform(g, Shape{5});
    Tensor w2 = Uniform(g, Shape{5, 1});
    Tensor b2 = Uniform(g, Shape{1});
    // Nudge the pre-activations off the ReLU kink.
    for (int i = 0; i < b1.numel(); ++i) b1[i] += 1e-3;
    return finite_difference_error(
        [&](Tape& t) {
          Var h = tanh(add_row(matmul(t.constant(x), t.leaf(w1)), t.leaf(b1)));
          Var out = add_row(matmul(h, t.leaf(w2)), t.leaf(b2));
          Var err = out - t.constant(y);
          return mean(err * err);
        },
        {&w1, &b1, &w2, &b2});
  }));

  cases.push_back(Case("policy-log-probs", [](auto& g) {
    PolicyModel policy(TinyBackbone(HeadKind::kLanguageModel), g());
    Randomize(policy.net(), g, 0.5);
    const auto episodes = RandomEpisodes(g, 1);
    const Tensor w = Uniform(g, Shape{static_cast<int>(episodes[0].response.size())});
    return finite_difference_error(
        [&](Tape& t) {
          auto binding = policy.net().bind(t);
          return Weigh(t, policy.sequence_log_probs(binding, episodes[0].prompt,
                                                     episodes[0].response),
                       w);
        },
        [&] {
          return (policy.sequence_log_probs(episodes[0].prompt, episodes[0].response) *
                  w.data())
              .sum();
        },
        policy.net().parameter_ptrs());
  }));

  cases.push_back(Case("ppo-actor-loss", [](auto& g) {
    PolicyModel policy(TinyBackbone(HeadKind::kLanguageModel), g());
    Randomize(policy.net(), g, 0.5);
    const auto episodes = RandomEpisodes(g, 2);
    std::vector<double> old_lp, adv;
    std::uniform_real_distribution<double> shift(-0.5, 0.5);
    std::normal_distribution<double> normal;
    constexpr double kEps = 0.2;
    for (const Episode& e : episodes) {
      const Array current = policy.sequence_log_probs(e.prompt, e.response);
      for (double lp : current) {
        double old = 0;
        for (;;) {
          old = lp + shift(g);
          const double rho = std::exp(lp - old);
          if (std::abs(rho - (1 - kEps)) > 1e-3 && std::abs(rho - (1 + kEps)) > 1e-3) break;
        }
        old_lp.push_back(old);
        adv.push_back(normal(g));
      }
    }
    const Array old_arr = Eigen::Map<const Array>(old_lp.data(), old_lp.size());
    const Array adv_arr = Eigen::Map<const Array>(adv.data(), adv.size());
    return finite_difference_error(
        [&](Tape& t) {
          auto binding = policy.net().bind(t);
          std::vector<Var> parts;
          for (const Episode& e : episodes) {
            parts.push_back(policy.sequence_log_probs(binding, e.prompt, e.response));
          }
          return ppo_actor_loss(concat(parts), old_arr, adv_arr, kEps).loss;
        },
        [&] {
          // -mean_t min(rho A, clip(rho, 1-eps, 1+eps) A)
          double total = 0.0;
          int n = 0;
          for (const Episode& e : episodes) {
            for (double lp : policy.sequence_log_probs(e.prompt, e.response)) {
              const double rho = std::exp(lp - old_arr[n]);
              const double clipped = std::clamp(rho, 1 - kEps, 1 + kEps);
              total += std::min(rho * adv_arr[n], clipped * adv_arr[n]);
              ++n;
            }
          }
          return -total / n;
        },
        policy.net().parameter_ptrs());
  }));

  cases.push_back(Case("critic-loss", [](auto& g) {
    CriticModel critic(TinyBackbone(HeadKind::kScalar), g());
    Randomize(critic.net(), g, 0.5);
    const auto episodes = RandomEpisodes(g, 2);
    std::vector<double> old_v, ret;
    std::uniform_real_distribution<double> shift(-0.5, 0.5);
    constexpr double kClip = 0.2;
    for (const Episode& e : episodes) {
      for (double v : critic.values(e.prompt, e.response)) {
        double d = 0;
        do {
          d = shift(g);
        } while (std::abs(std::abs(d) - kClip) < 1e-3);
        old_v.push_back(v - d);
        ret.push_back(v + shift(g));
      }
    }
    const Array old_arr = Eigen::Map<const Array>(old_v.data(), old_v.size());
    const Array ret_arr = Eigen::Map<const Array>(ret.data(), ret.size());
    return finite_difference_error(
        [&](Tape& t) {
          auto binding = critic.net().bind(t);
          std::vector<Var> parts;
          for (const Episode& e : episodes) {
            parts.push_back(critic.values(binding, e.prompt, e.response));
          }
          return critic_loss(concat(parts), old_arr, ret_arr, kClip);
        },
        [&] {
          double total = 0.0;
          int n = 0;
          for (const Episode& e : episodes) {
            for (double v : critic.values(e.prompt, e.response)) {
              const double clipped = old_arr[n] + std::clamp(v - old_arr[n], -kClip, kClip);
              total += std::max((v - ret_arr[n]) * (v - ret_arr[n]),
                                (clipped - ret_arr[n]) * (clipped - ret_arr[n]));
              ++n;
            }
          }
          return total / n;
        },
        critic.net().parameter_ptrs());
  }));

  cases.push_back(Case("pairwise-reward-loss", [](auto& g) {
    RewardModel reward(TinyBackbone(HeadKind::kScalar), g());
    Randomize(reward.net(), g, 0.5);
    const auto chosen = RandomEpisodes(g, 2);
    std::vector<Tokens> rejected;
    std::vector<double> margins;
    std::uniform_real_distribution<double> slack(0.1, 1.0);
    for (const Episode& e : chosen) {
      rejected.push_back(RandomTokens(g, static_cast<int>(e.response.size()), false));
      const double gap = reward.score(e.prompt, e.response) - reward.score(e.prompt, rejected.back());
      margins.push_back(gap + slack(g));  // hinge active, away from its corner
    }
    auto build = [&](Tape& t) {
      auto binding = reward.net().bind(t);
      Var total = t.constant(Tensor::scalar(0.0));
      for (std::size_t i = 0; i < chosen.size(); ++i) {
        total = total + pairwise_loss(
                            reward.score(binding, chosen[i].prompt, chosen[i].response),
                            reward.score(binding, chosen[i].prompt, rejected[i]), margins[i]);
      }
      return scale(total, 1.0 / static_cast<double>(chosen.size()));
    };
    // The loss only sees score differences, so the head bias cancels and its
    // gradient must be exactly zero; central differences there are pure
    // rounding noise.
    Tensor& bias = reward.net().parameter("head.b");
    std::vector<Tensor*> params;
    for (Tensor* p : reward.net().parameter_ptrs()) {
      if (p != &bias) params.push_back(p);
    }
    const auto value = [&] {
      double total = 0.0;
      for (std::size_t i = 0; i < chosen.size(); ++i) {
        total += std::max(0.0, margins[i] - reward.score(chosen[i].prompt, chosen[i].response) +
                                   reward.score(chosen[i].prompt, rejected[i]));
      }
      return total / static_cast<double>(chosen.size());
    };
    const double err = finite_difference_error(build, value, params);
    bias.set_requires_grad(true);
    bias.zero_grad();
    Tape tape;
    tape.backward(build(tape));
    return bias.grad()[0] == 0.0 ? err : 1.0;
  }));
  return cases;
}

}  // namespace oracle
