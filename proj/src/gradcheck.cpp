#include "fcl/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "fcl/error.hpp"
#include "fcl/rng.hpp"

namespace fcl {

GradCheckReport grad_check(const ModelParams& params, const LossClosure& loss, std::size_t n_probes, std::uint64_t seed,
                           const GradCheckOptions& options) {
  GradCheckReport report;
  const LossEvaluation base = loss(params);
  require_same_architecture(params, base.grads, "grad_check");
  if (base.kink_margin < options.kink_tolerance) {
    report.probes_skipped = n_probes;
    return report;
  }

  const auto analytic = base.grads.tensors();
  std::vector<std::size_t> sizes;
  std::size_t total = 0;
  for (const Tensor* t : analytic) {
    sizes.push_back(t->size());
    total += t->size();
  }
  if (total == 0) return report;

  Rng rng(seed);
  ModelParams probe = params;
  auto probe_tensors = probe.tensors();
  for (std::size_t n = 0; n < n_probes; ++n) {
    std::size_t flat = rng.index(total);
    std::size_t t = 0;
    while (flat >= sizes[t]) flat -= sizes[t++];

    double& coord = probe_tensors[t]->values()[flat];
    const double saved = coord;
    coord = saved + options.epsilon;
    const LossEvaluation plus = loss(probe);
    coord = saved - options.epsilon;
    const LossEvaluation minus = loss(probe);
    coord = saved;

    if (plus.activation_pattern != minus.activation_pattern || plus.activation_pattern != base.activation_pattern) {
      ++report.probes_skipped;
      continue;
    }
    const double numeric = (plus.loss - minus.loss) / (2.0 * options.epsilon);
    const double exact = analytic[t]->values()[flat];
    const double denom = std::max({std::abs(numeric), std::abs(exact), options.denominator_floor});
    report.max_relative_error = std::max(report.max_relative_error, std::abs(numeric - exact) / denom);
    ++report.probes_checked;
  }
  return report;
}

}  // namespace fcl
