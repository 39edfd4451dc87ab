#include "tinyrlhf/optim.hpp"

#include <cmath>

#include "tinyrlhf/error.hpp"

namespace tinyrlhf {
namespace {

void CheckFinite(const Array& grad) {
  if (!grad.allFinite()) {
    Fail(ErrorKind::kNumeric, "adam: non-finite gradient, step rejected");
  }
}

void Update(Tensor& param, const Array& grad, AdamState& state,
            const AdamConfig& config) {
  if (state.m.size() != param.numel()) {
    state.m = Array::Zero(param.numel());
    state.v = Array::Zero(param.numel());
  }
  ++state.t;
  if ((grad == 0.0).all()) return;
  state.m = config.beta1 * state.m + (1.0 - config.beta1) * grad;
  state.v = config.beta2 * state.v + (1.0 - config.beta2) * grad.square();
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.t));
  param.data() -= config.learning_rate * (state.m / c1) /
                  ((state.v / c2).sqrt() + config.eps);
}

}  // namespace

void adam_step(Tensor& param, const Array& grad, AdamState& state,
               const AdamConfig& config) {
  if (grad.size() != param.numel()) {
    Fail(ErrorKind::kShape, "adam: gradient length " +
                                std::to_string(grad.size()) +
                                " does not match parameter " +
                                param.shape().str());
  }
  CheckFinite(grad);
  Update(param, grad, state, config);
}

Adam::Adam(std::vector<Tensor*> params, AdamConfig config)
    : params_(std::move(params)), states_(params_.size()), config_(config) {}

void Adam::step() {
  for (Tensor* p : params_) {
    if (p->has_grad()) CheckFinite(p->grad());
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = *params_[i];
    if (p.has_grad()) {
      Update(p, p.grad(), states_[i], config_);
    } else {
      Update(p, Array::Zero(p.numel()), states_[i], config_);
    }
  }
}

void Adam::zero_grad() {
  for (Tensor* p : params_) p->zero_grad();
}

double grad_check(const std::function<Var(Tape&, Var)>& fn,
                  const Tensor& point, double h) {
  Tensor x(point.shape(), point.data(), true);
  {
    Tape tape;
    Var root = fn(tape, tape.leaf(x));
    tape.backward(root);
  }
  const Array analytic = x.has_grad() ? x.grad() : Array::Zero(x.numel());
  auto eval = [&](const Tensor& at) {
    Tensor probe(at.shape(), at.data(), false);
    Tape tape;
    return fn(tape, tape.leaf(probe)).item();
  };
  double worst = 0.0;
  for (int i = 0; i < x.numel(); ++i) {
    Tensor plus(point.shape(), point.data());
    Tensor minus(point.shape(), point.data());
    plus[i] += h;
    minus[i] -= h;
    const double central = (eval(plus) - eval(minus)) / (2.0 * h);
    const double err = std::abs(analytic[i] - central) /
                       (std::abs(analytic[i]) + std::abs(central) + 1e-12);
    worst = std::max(worst, err);
  }
  return worst;
}

double grad_check_params(const std::function<Var(Tape&)>& fn,
                         const std::vector<Tensor*>& params, double h) {
  for (Tensor* p : params) {
    p->set_requires_grad(true);
    p->zero_grad();
  }
  {
    Tape tape;
    tape.backward(fn(tape));
  }
  auto eval = [&] {
    Tape tape;
    return fn(tape).item();
  };
  double worst = 0.0;
  for (Tensor* p : params) {
    const Array analytic = p->has_grad() ? p->grad() : Array::Zero(p->numel());
    for (int i = 0; i < p->numel(); ++i) {
      const double saved = (*p)[i];
      (*p)[i] = saved + h;
      const double up = eval();
      (*p)[i] = saved - h;
      const double down = eval();
      (*p)[i] = saved;
      const double central = (up - down) / (2.0 * h);
      const double err = std::abs(analytic[i] - central) /
                         (std::abs(analytic[i]) + std::abs(central) + 1e-12);
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace tinyrlhf
