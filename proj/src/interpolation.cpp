#include "motiondiff/interpolation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "motiondiff/errors.hpp"

namespace motiondiff {

namespace {

void require_same(const Tensor& a, const Tensor& b, const char* where) {
  if (a.rank() != 2 || a.shape() != b.shape()) {
    throw DimensionError(std::string(where) + ": " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
}

// Distributes `value` onto the four pixels around (y, x).
void splat(std::vector<double>& acc, std::vector<double>& weight, std::size_t h, std::size_t w, double y,
           double x, double value) {
  const double fy0 = std::floor(y);
  const double fx0 = std::floor(x);
  const double fy = y - fy0;
  const double fx = x - fx0;
  const long y0 = static_cast<long>(fy0);
  const long x0 = static_cast<long>(fx0);
  for (int dy = 0; dy < 2; ++dy) {
    for (int dx = 0; dx < 2; ++dx) {
      const long ty = y0 + dy;
      const long tx = x0 + dx;
      if (ty < 0 || tx < 0 || ty >= static_cast<long>(h) || tx >= static_cast<long>(w)) continue;
      const double k = (dy ? fy : 1.0 - fy) * (dx ? fx : 1.0 - fx);
      if (k == 0.0) continue;
      const auto idx = static_cast<std::size_t>(ty) * w + static_cast<std::size_t>(tx);
      acc[idx] += k * value;
      weight[idx] += k;
    }
  }
}

}  // namespace

DistanceMap distance_map(const FlowField& to_last, const FlowField& to_next) {
  require_same(to_last.u, to_last.v, "distance_map");
  require_same(to_last.u, to_next.u, "distance_map");
  require_same(to_next.u, to_next.v, "distance_map");
  const std::size_t n = to_next.u.numel();
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double bu = to_next.u.data()[i], bv = to_next.v.data()[i];
    const double norm2 = bu * bu + bv * bv;
    if (std::sqrt(norm2) < kMinFlowNorm) {
      d[i] = 1.0;
    } else {
      d[i] = (to_last.u.data()[i] * bu + to_last.v.data()[i] * bv) / norm2;
    }
  }
  return DistanceMap{Tensor(to_next.u.shape(), std::move(d))};
}

Tensor step_weights(const DistanceMap& d) {
  std::vector<double> sorted(d.d.data().begin(), d.d.data().end());
  if (sorted.empty()) return Tensor(d.d.shape(), 1.0);
  const std::size_t mid = sorted.size() / 2;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(mid), sorted.end());
  double median = sorted[mid];
  if (sorted.size() % 2 == 0) {
    const double lower = *std::max_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(mid));
    median = 0.5 * (median + lower);
  }
  if (!(median > 0.0)) return Tensor(d.d.shape(), 1.0);
  std::vector<double> w(d.d.numel());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::clamp(d.d.data()[i] / median, 0.5, 1.5);
  return Tensor(d.d.shape(), std::move(w));
}

Tensor synthesize_midframe(const Tensor& i_t, const Tensor& i_t1, const FlowField& to_next,
                           const DistanceMap& d) {
  require_same(i_t, i_t1, "synthesize_midframe");
  require_same(i_t, to_next.u, "synthesize_midframe");
  require_same(i_t, to_next.v, "synthesize_midframe");
  require_same(i_t, d.d, "synthesize_midframe");
  const std::size_t h = i_t.dim(0), w = i_t.dim(1);
  const Tensor weights = step_weights(d);
  std::vector<double> acc(h * w, 0.0), total(h * w, 0.0);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t i = y * w + x;
      const double k = 0.5 * weights.data()[i];
      const double du = k * to_next.u.data()[i];
      const double dv = k * to_next.v.data()[i];
      const auto fy = static_cast<double>(y), fx = static_cast<double>(x);
      splat(acc, total, h, w, fy + dv, fx + du, i_t.data()[i]);
      splat(acc, total, h, w, fy - dv, fx - du, i_t1.data()[i]);
    }
  }
  std::vector<double> out(h * w);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = total[i] > 1e-6 ? acc[i] / total[i] : 0.5 * (i_t.data()[i] + i_t1.data()[i]);
  }
  return Tensor(Shape{h, w}, std::move(out));
}

std::vector<Tensor> interpolate_sequence(const std::vector<Tensor>& frames, const FlowConfig& cfg) {
  if (frames.size() < 2) throw ContractError("interpolate_sequence: need at least 2 frames");
  for (const auto& f : frames) require_same(frames.front(), f, "interpolate_sequence");
  const Tensor& last = frames.back();
  std::vector<Tensor> out;
  out.reserve(2 * frames.size() - 1);
  for (std::size_t t = 0; t + 1 < frames.size(); ++t) {
    const Tensor& a = frames[t];
    const Tensor& b = frames[t + 1];
    const FlowField to_next = estimate_flow(a, b, cfg);
    const FlowField to_last = t + 2 == frames.size() ? to_next : estimate_flow(a, last, cfg);
    out.push_back(a);
    out.push_back(synthesize_midframe(a, b, to_next, distance_map(to_last, to_next)));
  }
  out.push_back(last);
  return out;
}

double psnr(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape() || a.numel() == 0) {
    throw DimensionError("psnr: " + shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
  }
  double mse = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double e = a.data()[i] - b.data()[i];
    mse += e * e;
  }
  mse /= static_cast<double>(a.numel());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

}  // namespace motiondiff
