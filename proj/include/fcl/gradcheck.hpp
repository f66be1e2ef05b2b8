#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>

#include "fcl/model.hpp"

namespace fcl {

/// What a loss closure reports at one parameter point.
struct LossEvaluation {
  double loss = 0.0;
  ModelParams grads;
  // ReLU pattern hash and distance to the nearest kink; leave the defaults for
  // smooth losses.
  std::uint64_t activation_pattern = 0;
  double kink_margin = std::numeric_limits<double>::infinity();
};

using LossClosure = std::function<LossEvaluation(const ModelParams&)>;

struct GradCheckOptions {
  double epsilon = 1e-5;
  // Probes whose base point sits this close to a ReLU kink are skipped.
  double kink_tolerance = 1e-7;
  // Relative error denominator floor, so zero gradients compare absolutely.
  double denominator_floor = 1e-6;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t probes_checked = 0;
  std::size_t probes_skipped = 0;
};

/// Compares analytic gradients against central differences at `n_probes`
/// seeded coordinates. A probe is skipped (and counted) when the base point is
/// within kink_tolerance of a ReLU kink or when the +/- epsilon evaluations
/// see different ReLU patterns.
GradCheckReport grad_check(const ModelParams& params, const LossClosure& loss, std::size_t n_probes, std::uint64_t seed,
                           const GradCheckOptions& options = {});

}  // namespace fcl
