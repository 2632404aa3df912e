#include "motiondiff/flow.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "motiondiff/errors.hpp"

namespace motiondiff {

namespace {

// Smallest side a pyramid level may have.
constexpr std::size_t kMinLevelSize = 4;

struct Plane {
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<double> px;

  Plane() = default;
  Plane(std::size_t rows, std::size_t cols, double fill = 0.0) : h(rows), w(cols), px(rows * cols, fill) {}

  double& operator()(std::size_t y, std::size_t x) { return px[y * w + x]; }
  double operator()(std::size_t y, std::size_t x) const { return px[y * w + x]; }

  // Replicated border.
  double clamped(long y, long x) const {
    y = std::clamp<long>(y, 0, static_cast<long>(h) - 1);
    x = std::clamp<long>(x, 0, static_cast<long>(w) - 1);
    return px[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)];
  }

  double bilinear(double y, double x) const {
    y = std::clamp(y, 0.0, static_cast<double>(h - 1));
    x = std::clamp(x, 0.0, static_cast<double>(w - 1));
    const auto y0 = static_cast<long>(std::floor(y));
    const auto x0 = static_cast<long>(std::floor(x));
    const double fy = y - static_cast<double>(y0);
    const double fx = x - static_cast<double>(x0);
    return (1 - fy) * ((1 - fx) * clamped(y0, x0) + fx * clamped(y0, x0 + 1)) +
           fy * ((1 - fx) * clamped(y0 + 1, x0) + fx * clamped(y0 + 1, x0 + 1));
  }
};

Plane plane_from(const Tensor& t) {
  Plane p(t.dim(0), t.dim(1));
  std::copy(t.data().begin(), t.data().end(), p.px.begin());
  return p;
}

Tensor tensor_from(Plane p) { return Tensor(Shape{p.h, p.w}, std::move(p.px)); }

Plane downsample(const Plane& p) {
  Plane out((p.h + 1) / 2, (p.w + 1) / 2);
  for (std::size_t y = 0; y < out.h; ++y) {
    for (std::size_t x = 0; x < out.w; ++x) {
      const auto sy = static_cast<long>(2 * y);
      const auto sx = static_cast<long>(2 * x);
      out(y, x) = 0.25 * (p.clamped(sy, sx) + p.clamped(sy, sx + 1) + p.clamped(sy + 1, sx) +
                          p.clamped(sy + 1, sx + 1));
    }
  }
  return out;
}

// Bilinear resize on pixel centres, values multiplied by `gain`.
Plane resize(const Plane& p, std::size_t h, std::size_t w, double gain) {
  Plane out(h, w);
  const double sy = static_cast<double>(p.h) / static_cast<double>(h);
  const double sx = static_cast<double>(p.w) / static_cast<double>(w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      out(y, x) = gain * p.bilinear((static_cast<double>(y) + 0.5) * sy - 0.5, (static_cast<double>(x) + 0.5) * sx - 0.5);
    }
  }
  return out;
}

// Horn-Schunck neighbourhood average (1/6 edge neighbours, 1/12 corners).
double neighbour_mean(const Plane& p, std::size_t y, std::size_t x) {
  const auto Y = static_cast<long>(y);
  const auto X = static_cast<long>(x);
  return (p.clamped(Y - 1, X) + p.clamped(Y + 1, X) + p.clamped(Y, X - 1) + p.clamped(Y, X + 1)) / 6.0 +
         (p.clamped(Y - 1, X - 1) + p.clamped(Y - 1, X + 1) + p.clamped(Y + 1, X - 1) + p.clamped(Y + 1, X + 1)) / 12.0;
}

void refine_level(const Plane& a, const Plane& b, Plane& u, Plane& v, const FlowConfig& cfg) {
  const std::size_t h = a.h, w = a.w;
  Plane warped(h, w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      warped(y, x) = b.bilinear(static_cast<double>(y) + v(y, x), static_cast<double>(x) + u(y, x));
    }
  }
  Plane ix(h, w), iy(h, w), it(h, w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const auto Y = static_cast<long>(y);
      const auto X = static_cast<long>(x);
      ix(y, x) = 0.25 * (a.clamped(Y, X + 1) - a.clamped(Y, X - 1) + warped.clamped(Y, X + 1) - warped.clamped(Y, X - 1));
      iy(y, x) = 0.25 * (a.clamped(Y + 1, X) - a.clamped(Y - 1, X) + warped.clamped(Y + 1, X) - warped.clamped(Y - 1, X));
      it(y, x) = warped(y, x) - a(y, x);
    }
  }
  const Plane u0 = u, v0 = v;
  const double reg = cfg.smoothness * cfg.smoothness;
  Plane nu(h, w), nv(h, w);
  for (int iter = 0; iter < cfg.iterations; ++iter) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const double ub = neighbour_mean(u, y, x);
        const double vb = neighbour_mean(v, y, x);
        const double gx = ix(y, x), gy = iy(y, x);
        const double residual = gx * (ub - u0(y, x)) + gy * (vb - v0(y, x)) + it(y, x);
        const double k = residual / (reg + gx * gx + gy * gy);
        nu(y, x) = ub - gx * k;
        nv(y, x) = vb - gy * k;
      }
    }
    std::swap(u.px, nu.px);
    std::swap(v.px, nv.px);
  }
}

}  // namespace

FlowField estimate_flow(const Tensor& a, const Tensor& b, const FlowConfig& cfg) {
  if (a.rank() != 2 || a.shape() != b.shape()) {
    throw DimensionError("estimate_flow: frames " + shape_to_string(a.shape()) + " and " +
                         shape_to_string(b.shape()) + " must be equal [h, w]");
  }
  if (cfg.levels < 1 || cfg.iterations < 0 || !(cfg.smoothness > 0.0)) {
    throw ConfigError("estimate_flow: need levels >= 1, iterations >= 0, smoothness > 0");
  }
  std::vector<Plane> pyr_a{plane_from(a)};
  std::vector<Plane> pyr_b{plane_from(b)};
  while (static_cast<int>(pyr_a.size()) < cfg.levels && pyr_a.back().h / 2 >= kMinLevelSize &&
         pyr_a.back().w / 2 >= kMinLevelSize) {
    pyr_a.push_back(downsample(pyr_a.back()));
    pyr_b.push_back(downsample(pyr_b.back()));
  }

  Plane u(pyr_a.back().h, pyr_a.back().w), v(pyr_a.back().h, pyr_a.back().w);
  for (std::size_t level = pyr_a.size(); level-- > 0;) {
    const Plane& la = pyr_a[level];
    if (u.h != la.h || u.w != la.w) {
      const double gy = static_cast<double>(la.h) / static_cast<double>(u.h);
      const double gx = static_cast<double>(la.w) / static_cast<double>(u.w);
      u = resize(u, la.h, la.w, gx);
      v = resize(v, la.h, la.w, gy);
    }
    refine_level(la, pyr_b[level], u, v, cfg);
  }
  return FlowField{tensor_from(std::move(u)), tensor_from(std::move(v))};
}

}  // namespace motiondiff
