#include "motiondiff/optimizer.hpp"

#include <cmath>
#include <map>

#include "motiondiff/errors.hpp"

namespace motiondiff {

Adam::Adam(NamedTensors params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  for (const auto& [name, p] : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void Adam::step() {
  ++steps_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
  for (std::size_t q = 0; q < params_.size(); ++q) {
    Tensor& p = params_[q].second;
    auto values = p.mutable_data();
    const auto grad = p.grad();
    auto& m = m_[q];
    auto& v = v_[q];
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = (grad.empty() ? 0.0 : grad[i]) + cfg_.weight_decay * values[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      values[i] -= cfg_.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.epsilon);
    }
  }
}

void Adam::zero_grad() {
  for (auto& [name, p] : params_) p.zero_grad();
}

NamedTensors Adam::moments() const {
  NamedTensors out;
  for (std::size_t q = 0; q < params_.size(); ++q) {
    const auto& [name, p] = params_[q];
    out.emplace_back("adam.m." + name, Tensor(p.shape(), m_[q]));
    out.emplace_back("adam.v." + name, Tensor(p.shape(), v_[q]));
  }
  return out;
}

void Adam::restore(const NamedTensors& moments, long steps) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : moments) by_name[name] = &t;
  for (std::size_t q = 0; q < params_.size(); ++q) {
    const auto& [name, p] = params_[q];
    for (auto* buffer : {&m_[q], &v_[q]}) {
      const std::string key = (buffer == &m_[q] ? "adam.m." : "adam.v.") + name;
      const auto it = by_name.find(key);
      if (it == by_name.end()) throw FormatError("optimizer state missing '" + key + "'");
      if (it->second->shape() != p.shape()) throw FormatError("optimizer state '" + key + "' has wrong shape");
      buffer->assign(it->second->data().begin(), it->second->data().end());
    }
  }
  steps_ = steps;
}

}  // namespace motiondiff
