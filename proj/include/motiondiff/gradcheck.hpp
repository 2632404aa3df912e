#pragma once

#include <functional>
#include <vector>

#include "motiondiff/tensor.hpp"

namespace motiondiff {

/// Compares reverse-mode gradients of `loss` against central differences.
///
/// `loss` must be deterministic and rebuild its graph on every call. Each
/// entry of each parameter is perturbed by +/- `eps` in place and restored.
/// Returns max |analytic - numeric| / max(1, |numeric|) over all entries.
/// Throws ContractError for eps <= 0 and NumericError when `loss` is not finite.
double finite_diff_check(const std::function<Tensor()>& loss, std::vector<Tensor> params,
                         double eps = 1e-5);

}  // namespace motiondiff
