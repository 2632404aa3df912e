#include <doctest.h>

#include <cmath>
#include <random>

#include "motiondiff/diffusion.hpp"
#include "motiondiff/errors.hpp"
#include "support.hpp"

using namespace motiondiff;

TEST_CASE("linear schedule hits both endpoints") {
  const NoiseSchedule s = build_linear_schedule(1000, 0.00085, 0.012);
  CHECK(s.steps == 1000);
  CHECK(s.beta_at(1) == 0.00085);
  CHECK(s.beta_at(1000) == doctest::Approx(0.012).epsilon(1e-15));
  for (int t = 2; t <= 1000; ++t) CHECK(s.beta_at(t) > s.beta_at(t - 1));
}

TEST_CASE("single-step schedule holds beta_start") {
  const NoiseSchedule s = build_linear_schedule(1, 0.02, 0.3);
  REQUIRE(s.beta.size() == 1);
  CHECK(s.beta[0] == 0.02);
  CHECK(s.alpha_bar[0] == doctest::Approx(0.98));
}

TEST_CASE("three-step schedule: alpha_bar is the running product") {
  const NoiseSchedule s = build_linear_schedule(3, 0.1, 0.3);
  CHECK(s.beta_at(2) == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(std::abs(s.alpha_bar_at(3) - 0.9 * 0.8 * 0.7) < 1e-15);
  CHECK(std::abs(s.alpha_bar_at(3) - 0.504) < 1e-12);
}

TEST_CASE("alpha_bar matches a cumulative-product loop and decreases strictly") {
  const NoiseSchedule s = build_linear_schedule(1000, 0.00085, 0.012);
  double running = 1.0;
  for (int t = 1; t <= 1000; ++t) {
    running *= 1.0 - s.beta_at(t);
    CHECK(std::abs(s.alpha_at(t) - (1.0 - s.beta_at(t))) == 0.0);
    CHECK(std::abs(s.alpha_bar_at(t) - running) < 1e-12);
    CHECK(s.alpha_bar_at(t) > 0.0);
    CHECK(s.alpha_bar_at(t) < 1.0);
    if (t > 1) CHECK(s.alpha_bar_at(t) < s.alpha_bar_at(t - 1));
  }
  CHECK(s.alpha_bar_at(0) == 1.0);
}

TEST_CASE("schedule rejects bad arguments") {
  CHECK_THROWS_AS(build_linear_schedule(0, 0.1, 0.2), ConfigError);
  CHECK_THROWS_AS(build_linear_schedule(10, 0.0, 0.2), ConfigError);
  CHECK_THROWS_AS(build_linear_schedule(10, 0.3, 0.2), ConfigError);
  CHECK_THROWS_AS(build_linear_schedule(10, 0.1, 1.0), ConfigError);
}

TEST_CASE("forward_diffuse: scalar formula and degenerate cases") {
  // alpha_bar_1 = 0.25 when beta_1 = 0.75.
  const NoiseSchedule s = build_linear_schedule(1, 0.75, 0.75);
  const Tensor z = forward_diffuse(Tensor::scalar(1.0), 1, Tensor::scalar(1.0), s);
  CHECK(z.item() == doctest::Approx(0.5 + std::sqrt(0.75)).epsilon(1e-15));

  std::mt19937_64 rng(1);
  const Tensor z0 = support::random_tensor({2, 3}, rng);
  const Tensor zero_eps = forward_diffuse(z0, 1, Tensor::zeros({2, 3}), s);
  for (std::size_t i = 0; i < 6; ++i) CHECK(zero_eps.data()[i] == doctest::Approx(0.5 * z0.data()[i]));

  // A schedule whose betas are all tiny leaves the clip nearly untouched; with
  // beta exactly zero forbidden, the identity case is exercised via eps = z0.
  const NoiseSchedule tiny = build_linear_schedule(5, 1e-300, 1e-300);
  const Tensor same = forward_diffuse(z0, 5, support::random_tensor({2, 3}, rng), tiny);
  CHECK(support::bitwise_equal(same.data(), z0.data()));
}

TEST_CASE("forward_diffuse is linear in (z0, eps) and shape preserving") {
  const NoiseSchedule s = build_linear_schedule(100, 0.001, 0.02);
  std::mt19937_64 rng(2);
  const Tensor a0 = support::random_tensor({2, 2, 3}, rng), b0 = support::random_tensor({2, 2, 3}, rng);
  const Tensor ae = support::random_tensor({2, 2, 3}, rng), be = support::random_tensor({2, 2, 3}, rng);
  const Tensor lhs = forward_diffuse(add(scale(a0, 2.0), b0), 40, add(scale(ae, 2.0), be), s);
  const Tensor rhs = add(scale(forward_diffuse(a0, 40, ae, s), 2.0), forward_diffuse(b0, 40, be, s));
  CHECK(lhs.shape() == a0.shape());
  CHECK(support::max_abs_diff(lhs.data(), rhs.data()) < 1e-12);
}

TEST_CASE("forward_diffuse rejects out-of-range timesteps and shape mismatch") {
  const NoiseSchedule s = build_linear_schedule(10, 0.001, 0.02);
  CHECK_THROWS_AS(forward_diffuse(Tensor::scalar(1), 0, Tensor::scalar(1), s), IndexError);
  CHECK_THROWS_AS(forward_diffuse(Tensor::scalar(1), 11, Tensor::scalar(1), s), IndexError);
  CHECK_THROWS_AS(forward_diffuse(Tensor::zeros({2}), 1, Tensor::zeros({3}), s), DimensionError);
}

TEST_CASE("noised zero signal has variance 1 - alpha_bar") {
  const NoiseSchedule s = build_linear_schedule(1000, 0.00085, 0.012);
  std::mt19937_64 rng(17);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int t = 300;
  std::vector<double> eps(10000);
  for (double& e : eps) e = normal(rng);
  const Tensor z = forward_diffuse(Tensor::zeros({10000}), t, Tensor(Shape{10000}, eps), s);
  double mu = 0.0, var = 0.0;
  for (double v : z.data()) mu += v / 10000.0;
  for (double v : z.data()) var += (v - mu) * (v - mu) / 9999.0;
  const double expected = 1.0 - s.alpha_bar_at(t);
  CHECK(std::abs(var - expected) / expected < 0.05);
}

TEST_CASE("diffusion_loss is the mean squared error") {
  std::mt19937_64 rng(3);
  const Tensor a = support::random_tensor({8}, rng), b = support::random_tensor({8}, rng);
  double expected = 0.0;
  for (std::size_t i = 0; i < 8; ++i) expected += (a.data()[i] - b.data()[i]) * (a.data()[i] - b.data()[i]) / 8.0;
  CHECK(std::abs(diffusion_loss(a, b).item() - expected) < 1e-12);
  CHECK(diffusion_loss(a, a).item() == 0.0);
  CHECK(diffusion_loss(Tensor::zeros({2, 3}), Tensor::ones({2, 3})).item() == 1.0);
  CHECK_THROWS_AS(diffusion_loss(Tensor::zeros({2}), Tensor::zeros({3})), DimensionError);
}

TEST_CASE("ddim_step hand-evaluated scalar case") {
  // beta_1 = 0.36 -> alpha_bar_1 = 0.64; beta_2 chosen so alpha_bar_2 = 0.25.
  NoiseSchedule s = build_linear_schedule(2, 0.36, 0.36);
  s.alpha_bar[1] = 0.25;
  const Tensor z = ddim_step(Tensor::scalar(1.0), Tensor::scalar(0.5), 2, 1, s);
  const double expected = 0.8 * (1.0 - std::sqrt(0.75) * 0.5) / 0.5 + 0.6 * 0.5;
  CHECK(z.item() == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("ddim_step identities hold exactly") {
  const NoiseSchedule s = build_linear_schedule(1000, 0.00085, 0.012);
  std::mt19937_64 rng(4);
  const Tensor z = support::random_tensor({3, 4}, rng);
  const Tensor zero = Tensor::zeros({3, 4});
  const Tensor collapsed = ddim_step(z, zero, 700, 300, s);
  const double ratio = std::sqrt(s.alpha_bar_at(300) / s.alpha_bar_at(700));
  for (std::size_t i = 0; i < z.numel(); ++i) CHECK(collapsed.data()[i] == z.data()[i] * ratio);

  NoiseSchedule flat = s;
  flat.alpha_bar[299] = flat.alpha_bar[699];
  const Tensor same = ddim_step(z, support::random_tensor({3, 4}, rng), 700, 300, flat);
  CHECK(support::bitwise_equal(same.data(), z.data()));
}

TEST_CASE("ddim_step inverts re-noising with the same eps") {
  const NoiseSchedule s = build_linear_schedule(1000, 0.00085, 0.012);
  std::mt19937_64 rng(5);
  const Tensor z0 = support::random_tensor({5}, rng), eps = support::random_tensor({5}, rng);
  const Tensor z_t = forward_diffuse(z0, 800, eps, s);
  const Tensor z_prev = ddim_step(z_t, eps, 800, 250, s);
  const Tensor renoised = forward_diffuse(z0, 250, eps, s);
  CHECK(support::max_abs_diff(z_prev.data(), renoised.data()) < 1e-12);
  const Tensor clean = ddim_step(z_t, eps, 800, 0, s);
  CHECK(support::max_abs_diff(clean.data(), z0.data()) < 1e-12);
}

TEST_CASE("ddim_step rejects a non-decreasing pair") {
  const NoiseSchedule s = build_linear_schedule(10, 0.001, 0.02);
  CHECK_THROWS_AS(ddim_step(Tensor::scalar(1), Tensor::scalar(0), 5, 5, s), ContractError);
  CHECK_THROWS_AS(ddim_step(Tensor::scalar(1), Tensor::scalar(0), 5, -1, s), ContractError);
}

TEST_CASE("DDIM ladder: 25 of 1000 by stride 40, largest first") {
  const auto ladder = ddim_timesteps(1000, 25);
  REQUIRE(ladder.size() == 25);
  for (int i = 0; i < 25; ++i) CHECK(ladder[static_cast<std::size_t>(i)] == 1000 - 40 * i);
  CHECK(ladder.back() == 40);
  CHECK(ddim_timesteps(1000, 1) == std::vector<int>{1000});
  CHECK(ddim_timesteps(10, 3) == std::vector<int>{10, 7, 4});
  CHECK_THROWS_AS(ddim_timesteps(10, 11), ConfigError);
  CHECK_THROWS_AS(ddim_timesteps(10, 0), ConfigError);
}

TEST_CASE("ddim_sample visits the ladder, ends at alpha_bar_0 and is deterministic") {
  const NoiseSchedule s = build_linear_schedule(1000, 0.00085, 0.012);
  std::mt19937_64 rng(6);
  const Tensor z_T = support::random_tensor({1, 2, 3, 2, 2}, rng);
  std::vector<int> seen;
  const Denoiser denoiser = [&seen](const Tensor& z, int t, int cond) {
    seen.push_back(t);
    return scale(z, 0.1 * (cond + 1));
  };
  const Tensor a = ddim_sample(denoiser, z_T, 25, 1, s);
  CHECK(seen == ddim_timesteps(1000, 25));

  // Oracle: the same updates written as scalar loops.
  std::vector<double> z(z_T.data().begin(), z_T.data().end());
  const auto ladder = ddim_timesteps(1000, 25);
  for (std::size_t i = 0; i < ladder.size(); ++i) {
    const double ab = s.alpha_bar_at(ladder[i]);
    const double ab_prev = i + 1 < ladder.size() ? s.alpha_bar_at(ladder[i + 1]) : 1.0;
    for (double& v : z) {
      const double e = 0.2 * v;
      v = std::sqrt(ab_prev) * (v - std::sqrt(1.0 - ab) * e) / std::sqrt(ab) + std::sqrt(1.0 - ab_prev) * e;
    }
  }
  CHECK(support::max_abs_diff(a.data(), z) < 1e-9);

  const Tensor b = ddim_sample(denoiser, z_T, 25, 1, s);
  CHECK(support::bitwise_equal(a.data(), b.data()));

  seen.clear();
  (void)ddim_sample(denoiser, z_T, 1, 0, s);
  CHECK(seen == std::vector<int>{1000});
  CHECK_THROWS_AS(ddim_sample(denoiser, z_T, 1001, 0, s), ConfigError);
}
