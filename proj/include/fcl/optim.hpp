#pragma once

#include <cstdint>
#include <span>

#include "fcl/model.hpp"

namespace fcl {

enum class OptimizerKind { sgd_momentum, adam };

/// Per-parameter optimizer buffers plus hyperparameters. `first` holds the SGD
/// velocity or Adam's first moment; `second` holds Adam's second moment.
struct OptimizerState {
  OptimizerKind kind = OptimizerKind::sgd_momentum;
  ModelParams first;
  ModelParams second;
  std::uint64_t step = 0;

  double momentum = 0.9;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

OptimizerState make_sgd(const ModelParams& params, double momentum, double weight_decay = 0.0);
OptimizerState make_adam(const ModelParams& params, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8);

/// v <- momentum * v + (g + weight_decay * p);  p <- p - lr * v
void sgd_step(ModelParams& params, const ModelParams& grads, OptimizerState& state, double lr);

/// Adam with bias correction; the step counter advances by one per call.
void adam_step(ModelParams& params, const ModelParams& grads, OptimizerState& state, double lr);

/// Dispatches on state.kind.
void optimizer_step(ModelParams& params, const ModelParams& grads, OptimizerState& state, double lr);

/// lr0 * (1 + cos(pi * round / total_rounds)) / 2, for 0 <= round <= total_rounds.
double cosine_lr(int round, int total_rounds, double lr0);

/// lr0 scaled by `factor` once for every milestone epoch <= `epoch` (epochs count from 0).
double step_decay_lr(int epoch, double lr0, double factor, std::span<const int> milestones);

}  // namespace fcl
