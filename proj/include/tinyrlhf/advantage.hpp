#ifndef TINYRLHF_ADVANTAGE_HPP_
#define TINYRLHF_ADVANTAGE_HPP_

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace tinyrlhf {

template <typename Scalar>
using ArrayX = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

inline constexpr double kKlClamp = 10.0;
inline constexpr double kAdvantageStdFloor = 1e-8;

// Per-token KL-shaped reward: -beta * clamp(log pi_act - log pi_ref, +-10),
// with the reward-model score added at the final token.
template <typename DerivedA, typename DerivedB>
ArrayX<typename DerivedA::Scalar> shape_rewards_with_kl(
    const Eigen::ArrayBase<DerivedA>& actor_log_probs,
    const Eigen::ArrayBase<DerivedB>& ref_log_probs,
    typename DerivedA::Scalar terminal_reward, typename DerivedA::Scalar beta) {
  using Scalar = typename DerivedA::Scalar;
  eigen_assert(actor_log_probs.size() == ref_log_probs.size());
  ArrayX<Scalar> kl =
      (actor_log_probs - ref_log_probs).max(Scalar(-kKlClamp)).min(Scalar(kKlClamp));
  ArrayX<Scalar> rewards = -beta * kl;
  if (rewards.size() > 0) rewards(rewards.size() - 1) += terminal_reward;
  return rewards;
}

// delta_t = r_t + gamma * V_{t+1} - V_t, bootstrapping V after the last
// token with 0.
template <typename DerivedR, typename DerivedV>
ArrayX<typename DerivedR::Scalar> td_residuals(
    const Eigen::ArrayBase<DerivedR>& rewards,
    const Eigen::ArrayBase<DerivedV>& values, typename DerivedR::Scalar gamma) {
  using Scalar = typename DerivedR::Scalar;
  eigen_assert(rewards.size() == values.size());
  const Eigen::Index T = rewards.size();
  ArrayX<Scalar> delta(T);
  for (Eigen::Index t = 0; t < T; ++t) {
    const Scalar next = t + 1 < T ? values(t + 1) : Scalar(0);
    delta(t) = rewards(t) + gamma * next - values(t);
  }
  return delta;
}

template <typename Scalar>
struct GaeResult {
  ArrayX<Scalar> advantages;
  ArrayX<Scalar> returns;
};

// Backward recursion A_t = delta_t + gamma*lambda*A_{t+1} with A_{T+1} = 0;
// returns_t = A_t + V_t.
template <typename DerivedD, typename DerivedV>
GaeResult<typename DerivedD::Scalar> compute_gae(
    const Eigen::ArrayBase<DerivedD>& delta, const Eigen::ArrayBase<DerivedV>& values,
    typename DerivedD::Scalar gamma, typename DerivedD::Scalar lambda) {
  using Scalar = typename DerivedD::Scalar;
  eigen_assert(delta.size() == values.size());
  const Eigen::Index T = delta.size();
  GaeResult<Scalar> out;
  out.advantages.resize(T);
  Scalar running = 0;
  for (Eigen::Index t = T - 1; t >= 0; --t) {
    running = delta(t) + gamma * lambda * running;
    out.advantages(t) = running;
  }
  out.returns = out.advantages + values.derived();
  return out;
}

// (A - mean) / max(population std, 1e-8). A constant batch maps to zeros.
template <typename Derived>
ArrayX<typename Derived::Scalar> normalize_advantages(
    const Eigen::ArrayBase<Derived>& advantages) {
  using Scalar = typename Derived::Scalar;
  const Scalar mu = advantages.mean();
  ArrayX<Scalar> centered = advantages - mu;
  const Scalar sigma = std::sqrt(centered.square().mean());
  return centered / std::max(sigma, Scalar(kAdvantageStdFloor));
}

// Per-token clipped surrogate min(rho*A, clip(rho, 1-eps, 1+eps)*A).
template <typename Scalar>
Scalar clipped_objective(Scalar ratio, Scalar advantage, Scalar epsilon) {
  const Scalar clipped = std::clamp(ratio, Scalar(1) - epsilon, Scalar(1) + epsilon);
  return std::min(ratio * advantage, clipped * advantage);
}

// Per-token clipped value loss
// max((V - ret)^2, (V_old + clip(V - V_old, -c, c) - ret)^2).
template <typename Scalar>
Scalar clipped_value_loss(Scalar value, Scalar old_value, Scalar ret, Scalar clip) {
  const Scalar clipped = old_value + std::clamp(value - old_value, -clip, clip);
  return std::max((value - ret) * (value - ret), (clipped - ret) * (clipped - ret));
}

}  // namespace tinyrlhf

#endif  // TINYRLHF_ADVANTAGE_HPP_
