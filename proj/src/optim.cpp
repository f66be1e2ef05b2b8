#include "fcl/optim.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "fcl/error.hpp"

namespace fcl {

namespace {
void check_aligned(const ModelParams& params, const ModelParams& grads, const OptimizerState& state,
                   const char* name) {
  if (!same_architecture(params, grads)) throw DimensionError(std::string(name) + ": gradient layout mismatch");
  if (!same_architecture(params, state.first)) throw DimensionError(std::string(name) + ": optimizer buffer mismatch");
}
}  // namespace

OptimizerState make_sgd(const ModelParams& params, double momentum, double weight_decay) {
  OptimizerState s;
  s.kind = OptimizerKind::sgd_momentum;
  s.first = zeros_like(params);
  s.momentum = momentum;
  s.weight_decay = weight_decay;
  return s;
}

OptimizerState make_adam(const ModelParams& params, double beta1, double beta2, double epsilon) {
  OptimizerState s;
  s.kind = OptimizerKind::adam;
  s.first = zeros_like(params);
  s.second = zeros_like(params);
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.epsilon = epsilon;
  return s;
}

void sgd_step(ModelParams& params, const ModelParams& grads, OptimizerState& state, double lr) {
  check_aligned(params, grads, state, "sgd_step");
  auto p = params.tensors();
  auto g = grads.tensors();
  auto v = state.first.tensors();
  for (std::size_t t = 0; t < p.size(); ++t) {
    auto pv = p[t]->values();
    auto gv = g[t]->values();
    auto vv = v[t]->values();
    for (std::size_t i = 0; i < pv.size(); ++i) {
      vv[i] = state.momentum * vv[i] + (gv[i] + state.weight_decay * pv[i]);
      pv[i] -= lr * vv[i];
    }
  }
  ++state.step;
}

void adam_step(ModelParams& params, const ModelParams& grads, OptimizerState& state, double lr) {
  check_aligned(params, grads, state, "adam_step");
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  auto p = params.tensors();
  auto g = grads.tensors();
  auto m = state.first.tensors();
  auto v = state.second.tensors();
  for (std::size_t t = 0; t < p.size(); ++t) {
    auto pv = p[t]->values();
    auto gv = g[t]->values();
    auto mv = m[t]->values();
    auto vv = v[t]->values();
    for (std::size_t i = 0; i < pv.size(); ++i) {
      mv[i] = state.beta1 * mv[i] + (1.0 - state.beta1) * gv[i];
      vv[i] = state.beta2 * vv[i] + (1.0 - state.beta2) * gv[i] * gv[i];
      const double mhat = mv[i] / c1;
      const double vhat = vv[i] / c2;
      pv[i] -= lr * mhat / (std::sqrt(vhat) + state.epsilon);
    }
  }
}

void optimizer_step(ModelParams& params, const ModelParams& grads, OptimizerState& state, double lr) {
  if (state.kind == OptimizerKind::adam)
    adam_step(params, grads, state, lr);
  else
    sgd_step(params, grads, state, lr);
}

double cosine_lr(int round, int total_rounds, double lr0) {
  if (total_rounds < 1) throw ValidationError("cosine_lr: total_rounds must be >= 1");
  if (round < 0 || round > total_rounds)
    throw ValidationError("cosine_lr: round " + std::to_string(round) + " outside [0, " +
                          std::to_string(total_rounds) + "]");
  if (round == total_rounds) return 0.0;
  const double frac = static_cast<double>(round) / static_cast<double>(total_rounds);
  return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

double step_decay_lr(int epoch, double lr0, double factor, std::span<const int> milestones) {
  double lr = lr0;
  for (int m : milestones)
    if (epoch >= m) lr *= factor;
  return lr;
}

}  // namespace fcl
