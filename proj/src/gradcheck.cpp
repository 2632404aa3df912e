#include "motiondiff/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "motiondiff/errors.hpp"

namespace motiondiff {

namespace {

double evaluate(const std::function<Tensor()>& loss) {
  const double value = loss().item();
  if (!std::isfinite(value)) throw NumericError("finite_diff_check: loss is not finite");
  return value;
}

}  // namespace

double finite_diff_check(const std::function<Tensor()>& loss, std::vector<Tensor> params, double eps) {
  if (!(eps > 0.0)) throw ContractError("finite_diff_check: eps must be positive");

  for (auto& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  Tensor value = loss();
  if (!std::isfinite(value.item())) throw NumericError("finite_diff_check: loss is not finite");
  value.backward();

  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) {
    if (p.has_grad()) {
      analytic.emplace_back(p.grad().begin(), p.grad().end());
    } else {
      analytic.emplace_back(p.numel(), 0.0);
    }
  }

  double worst = 0.0;
  {
    NoGradGuard no_grad;
    for (std::size_t q = 0; q < params.size(); ++q) {
      auto values = params[q].mutable_data();
      for (std::size_t i = 0; i < values.size(); ++i) {
        const double saved = values[i];
        values[i] = saved + eps;
        const double plus = evaluate(loss);
        values[i] = saved - eps;
        const double minus = evaluate(loss);
        values[i] = saved;
        const double numeric = (plus - minus) / (2.0 * eps);
        const double err = std::abs(analytic[q][i] - numeric) / std::max(1.0, std::abs(numeric));
        worst = std::max(worst, err);
      }
    }
  }
  for (auto& p : params) p.zero_grad();
  return worst;
}

}  // namespace motiondiff
