#pragma once

// Reference attention implementations shared by the unit tests and the
// acceptance binary: a scalar-loop oracle and an unmasked op-for-op twin.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "motiondiff/motion_module.hpp"
#include "support.hpp"

namespace oracle {

using namespace motiondiff;

inline AttentionParams random_attention(std::size_t inner, std::size_t heads, std::mt19937_64& rng) {
  AttentionParams p;
  const std::size_t d = inner / heads;
  for (std::size_t h = 0; h < heads; ++h) {
    p.heads.push_back({support::random_tensor({inner, d}, rng), support::random_tensor({inner, d}, rng),
                       support::random_tensor({inner, d}, rng)});
  }
  p.w_out = support::random_tensor({inner, inner}, rng);
  return p;
}

// Scalar-loop attention: for each batch row and head, softmax over the
// allowed keys only (disallowed keys are skipped, not filled).
inline std::vector<double> brute_force_attention(const Tensor& z, const AttentionMask& mask, const AttentionParams& p) {
  const std::size_t batch = z.dim(0), n = z.dim(1), inner = z.dim(2);
  const std::size_t d = p.heads[0].w_query.dim(1);
  const auto proj = [&](const Tensor& w, std::size_t b, std::size_t i, std::size_t c) {
    double acc = 0.0;
    for (std::size_t k = 0; k < inner; ++k) acc += z.data()[(b * n + i) * inner + k] * w.data()[k * d + c];
    return acc;
  };
  std::vector<double> out(batch * n * inner, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> joined;
      for (const auto& head : p.heads) {
        std::vector<double> scores(n, 0.0);
        double hi = -1e300;
        for (std::size_t j = 0; j < n; ++j) {
          if (!mask.allows(i, j)) continue;
          double s = 0.0;
          for (std::size_t c = 0; c < d; ++c) s += proj(head.w_query, b, i, c) * proj(head.w_key, b, j, c);
          scores[j] = s / std::sqrt(static_cast<double>(d));
          hi = std::max(hi, scores[j]);
        }
        double total = 0.0;
        std::vector<double> weights(n, 0.0);
        for (std::size_t j = 0; j < n; ++j) {
          if (mask.allows(i, j)) total += (weights[j] = std::exp(scores[j] - hi));
        }
        for (std::size_t c = 0; c < d; ++c) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += weights[j] / total * proj(head.w_value, b, j, c);
          joined.push_back(acc);
        }
      }
      for (std::size_t c = 0; c < inner; ++c) {
        double acc = 0.0;
        for (std::size_t k = 0; k < joined.size(); ++k) acc += joined[k] * p.w_out.data()[k * inner + c];
        out[(b * n + i) * inner + c] = acc;
      }
    }
  }
  return out;
}

// Unmasked attention assembled from the same ops in the same order as the
// library, minus the masking step.
inline Tensor unmasked_attention(const Tensor& z, const AttentionParams& p) {
  const std::size_t batch = z.dim(0), n = z.dim(1), inner = z.dim(2);
  const Tensor rows = reshape(z, {batch * n, inner});
  std::vector<Tensor> heads;
  for (const auto& head : p.heads) {
    const std::size_t d = head.w_query.dim(1);
    const Tensor q = reshape(matmul(rows, head.w_query), {batch, n, d});
    const Tensor k = reshape(matmul(rows, head.w_key), {batch, n, d});
    const Tensor v = reshape(matmul(rows, head.w_value), {batch, n, d});
    const Tensor scores = scale(matmul(q, permute(k, {0, 2, 1})), 1.0 / std::sqrt(static_cast<double>(d)));
    heads.push_back(matmul(softmax_lastdim(scores), v));
  }
  const Tensor joined = heads.size() == 1 ? heads.front() : concatenate(heads, 2);
  return reshape(matmul(reshape(joined, {batch * n, joined.dim(2)}), p.w_out), {batch, n, inner});
}

}  // namespace oracle
