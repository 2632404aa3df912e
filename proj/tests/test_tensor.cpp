#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <random>
#include <sstream>

#include "motiondiff/errors.hpp"
#include "motiondiff/gradcheck.hpp"
#include "motiondiff/tensor.hpp"
#include "motiondiff/tensor_io.hpp"
#include "support.hpp"

using namespace motiondiff;

namespace {

// Row-major triple loop over a[m, k] x b[k, n].
std::vector<double> naive_matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a.data()[i * k + p] * b.data()[p * n + j];
      out[i * n + j] = acc;
    }
  }
  return out;
}

std::vector<double> naive_softmax(std::vector<double> row) {
  double hi = row[0];
  for (double v : row) hi = std::max(hi, v);
  double total = 0.0;
  for (double& v : row) total += (v = std::exp(v - hi));
  for (double& v : row) v /= total;
  return row;
}

}  // namespace

TEST_CASE("matmul: identity, hand example and empty contraction") {
  const Tensor x = Tensor::matrix({{1.5, -2.0}, {0.25, 3.0}});
  const Tensor eye = Tensor::matrix({{1, 0}, {0, 1}});
  CHECK(support::bitwise_equal(matmul(eye, x).data(), x.data()));

  const Tensor prod = matmul(Tensor::matrix({{1, 2}, {3, 4}}), Tensor::matrix({{5}, {6}}));
  CHECK(prod.shape() == Shape{2, 1});
  CHECK(prod.at({0, 0}) == 17.0);
  CHECK(prod.at({1, 0}) == 39.0);

  const Tensor empty = matmul(Tensor::zeros({3, 0}), Tensor::zeros({0, 4}));
  CHECK(empty.shape() == Shape{3, 4});
  for (double v : empty.data()) CHECK(v == 0.0);
}

TEST_CASE("matmul agrees with a triple-loop oracle on random shapes") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::size_t> size(1, 16);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t m = size(rng), k = size(rng), n = size(rng);
    const Tensor a = support::random_tensor({m, k}, rng);
    const Tensor b = support::random_tensor({k, n}, rng);
    CHECK(support::max_abs_diff(matmul(a, b).data(), naive_matmul(a, b)) < 1e-12);
  }
}

TEST_CASE("matmul shape mismatch names both shapes") {
  try {
    (void)matmul(Tensor::zeros({2, 3}), Tensor::zeros({4, 5}));
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string what = e.what();
    CHECK(what.find("[2, 3]") != std::string::npos);
    CHECK(what.find("[4, 5]") != std::string::npos);
  }
}

TEST_CASE("softmax: symmetric, single entry and loop oracle") {
  const Tensor uniform = softmax_lastdim(Tensor::vector({0, 0, 0}));
  for (double v : uniform.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(softmax_lastdim(Tensor::vector({42.0})).item() == 1.0);

  const auto expected = naive_softmax({1, 2, 3});
  CHECK(support::max_abs_diff(softmax_lastdim(Tensor::vector({1, 2, 3})).data(), expected) < 1e-12);
}

TEST_CASE("softmax rows sum to one for random inputs") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor x = support::random_tensor({4, 3, 7}, rng, -30.0, 30.0);
    const Tensor y = softmax_lastdim(x);
    for (std::size_t row = 0; row < 12; ++row) {
      double total = 0.0;
      for (std::size_t j = 0; j < 7; ++j) {
        const double v = y.data()[row * 7 + j];
        CHECK(v >= 0.0);
        total += v;
      }
      CHECK(std::abs(total - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("softmax rejects non-finite input") {
  CHECK_THROWS_AS(softmax_lastdim(Tensor::vector({0.0, std::numeric_limits<double>::quiet_NaN()})), NumericError);
}

TEST_CASE("masked fill: all-ones mask is a no-op") {
  std::mt19937_64 rng(5);
  const Tensor scores = support::random_tensor({2, 3, 3}, rng);
  CHECK(support::bitwise_equal(masked_neg_inf_fill(scores, Tensor::ones({3, 3})).data(), scores.data()));
}

TEST_CASE("masked fill: an all-zero row softmaxes to uniform") {
  const Tensor scores = Tensor::matrix({{0.3, -1.2, 2.0}, {1, 2, 3}, {0, 0, 0}});
  const Tensor mask = Tensor::matrix({{0, 0, 0}, {1, 1, 1}, {1, 1, 1}});
  const Tensor p = softmax_lastdim(masked_neg_inf_fill(scores, mask));
  for (std::size_t j = 0; j < 3; ++j) CHECK(p.at({0, j}) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("masked fill: previous-frame mask on 3x3 leaves one-hot rows") {
  // Row 0 keeps itself; row 1 keeps column 0; row 2 keeps column 1.
  const Tensor mask = Tensor::matrix({{1, 0, 0}, {1, 0, 0}, {0, 1, 0}});
  const Tensor scores = Tensor::matrix({{0.5, 4.0, -2.0}, {-3.0, 9.0, 1.0}, {7.0, -1.0, 3.0}});
  const Tensor filled = masked_neg_inf_fill(scores, mask);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      if (mask.at({i, j}) == 1.0) {
        CHECK(filled.at({i, j}) == scores.at({i, j}));
      } else {
        CHECK(filled.at({i, j}) == kMaskSentinel);
      }
    }
  }
  const Tensor p = softmax_lastdim(filled);
  CHECK(p.at({1, 0}) == 1.0);
  CHECK(p.at({2, 1}) == 1.0);
  CHECK(p.at({1, 1}) < 1e-12);
  CHECK(p.at({1, 2}) < 1e-12);
  CHECK(p.at({2, 0}) < 1e-12);
  CHECK(p.at({2, 2}) < 1e-12);
}

TEST_CASE("masked fill rejects a mask of the wrong shape") {
  CHECK_THROWS_AS(masked_neg_inf_fill(Tensor::zeros({3, 3}), Tensor::ones({2, 2})), DimensionError);
}

TEST_CASE("backward of sum gives all-ones") {
  std::mt19937_64 rng(7);
  Tensor x = support::random_tensor({2, 3, 4}, rng);
  x.set_requires_grad(true);
  sum(x).backward();
  for (double g : x.grad()) CHECK(g == 1.0);
}

TEST_CASE("backward of mean squared offset is 2(x - c) / n") {
  std::mt19937_64 rng(8);
  Tensor x = support::random_tensor({3, 5}, rng);
  const Tensor c = support::random_tensor({3, 5}, rng);
  x.set_requires_grad(true);
  mean(square(sub(x, c))).backward();
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double expected = 2.0 * (x.data()[i] - c.data()[i]) / 15.0;
    CHECK(x.grad()[i] == doctest::Approx(expected).epsilon(1e-14));
  }
}

TEST_CASE("backward requires a scalar and leaves unreachable tensors alone") {
  Tensor x = Tensor::vector({1, 2, 3});
  x.set_requires_grad(true);
  CHECK_THROWS_AS(scale(x, 2.0).backward(), ContractError);

  Tensor unrelated = Tensor::vector({4, 5});
  unrelated.set_requires_grad(true);
  sum(x).backward();
  CHECK_FALSE(unrelated.has_grad());
}

TEST_CASE("gradients accumulate when a tensor is used twice") {
  Tensor x = Tensor::vector({1.0, -2.0});
  x.set_requires_grad(true);
  sum(mul(x, x)).backward();
  CHECK(x.grad()[0] == 2.0);
  CHECK(x.grad()[1] == -4.0);
}

TEST_CASE("finite_diff_check: sum of squares is exact to 1e-8") {
  std::mt19937_64 rng(9);
  Tensor a = support::random_tensor({3, 4}, rng);
  Tensor b = support::random_tensor({5}, rng);
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  const double err = finite_diff_check([&] { return add(sum(square(a)), sum(square(b))); }, {a, b});
  CHECK(err < 1e-8);
}

TEST_CASE("finite_diff_check rejects eps <= 0 and non-finite losses") {
  Tensor a = Tensor::vector({1.0});
  a.set_requires_grad(true);
  CHECK_THROWS_AS(finite_diff_check([&] { return sum(a); }, {a}, 0.0), ContractError);
  CHECK_THROWS_AS(
      finite_diff_check([&] { return scale(sum(a), std::numeric_limits<double>::infinity()); }, {a}),
      NumericError);
}

TEST_CASE("every differentiable op passes a randomized gradient check") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor a = support::random_tensor({2, 3, 4}, rng);
    Tensor b = support::random_tensor({4, 3}, rng);
    Tensor c = support::random_tensor({3, 4}, rng);
    Tensor pos = support::random_tensor({2, 3, 4}, rng, 0.5, 2.0);
    for (Tensor* t : {&a, &b, &c, &pos}) t->set_requires_grad(true);
    const Tensor mask = Tensor::matrix({{1, 0, 1}, {1, 1, 0}, {0, 1, 1}});
    const Tensor weights = support::random_tensor({2, 3, 4}, rng);
    const Tensor weights33 = support::random_tensor({2, 3, 3}, rng);

    // Each loss exercises a small group of ops; weights make sum-like losses
    // sensitive to every output entry.
    const std::vector<std::pair<const char*, std::function<Tensor()>>> losses = {
        {"matmul", [&] { return sum(mul(matmul(a, b), weights33)); }},
        {"add/scale/mul", [&] { return sum(mul(add(scale(a, -0.7), c), weights)); }},
        {"reshape/permute", [&] { return sum(mul(permute(reshape(a, {6, 4}), {1, 0}), reshape(weights, {4, 6}))); }},
        {"softmax", [&] { return sum(mul(softmax_lastdim(a), weights)); }},
        {"log_softmax", [&] { return sum(mul(log_softmax_lastdim(a), weights)); }},
        {"masked fill",
         [&] {
           const Tensor scores = matmul(slice(a, 2, 0, 3), permute(slice(c, 1, 0, 3), {1, 0}));
           return sum(mul(softmax_lastdim(masked_neg_inf_fill(scores, mask)), weights33));
         }},
        {"mean/square/sqrt", [&] { return add(mean(square(a)), sum(mul(sqrt(pos), weights))); }},
        {"concatenate/slice",
         [&] { return sum(mul(slice(concatenate({a, pos}, 2), 2, 2, 4), weights)); }},
        {"cosine normalize", [&] { return sum(mul(cosine_normalize_lastdim(a), weights)); }},
    };
    for (const auto& [name, loss] : losses) {
      CAPTURE(name);
      CHECK(finite_diff_check(loss, {a, b, c, pos}) < 1e-4);
    }
  }
}

TEST_CASE("cosine normalize maps zero rows to zero") {
  const Tensor y = cosine_normalize_lastdim(Tensor::matrix({{0, 0}, {3, 4}}));
  CHECK(y.at({0, 0}) == 0.0);
  CHECK(y.at({0, 1}) == 0.0);
  CHECK(y.at({1, 0}) == doctest::Approx(0.6));
  CHECK(y.at({1, 1}) == doctest::Approx(0.8));
}

TEST_CASE("composite attention graph matches finite differences") {
  std::mt19937_64 rng(4);
  Tensor z = support::random_tensor({2, 4, 3}, rng);
  Tensor wq = support::random_tensor({3, 3}, rng);
  Tensor wk = support::random_tensor({3, 3}, rng);
  Tensor wv = support::random_tensor({3, 3}, rng);
  const Tensor target = support::random_tensor({2, 4, 3}, rng);
  const Tensor mask = Tensor::matrix({{1, 0, 0, 0}, {1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}});
  for (Tensor* t : {&z, &wq, &wk, &wv}) t->set_requires_grad(true);
  const auto loss = [&] {
    const Tensor q = matmul(z, wq), k = matmul(z, wk), v = matmul(z, wv);
    const Tensor scores = scale(matmul(q, permute(k, {0, 2, 1})), 1.0 / std::sqrt(3.0));
    const Tensor out = matmul(softmax_lastdim(masked_neg_inf_fill(scores, mask)), v);
    return mean(square(sub(out, target)));
  };
  CHECK(finite_diff_check(loss, {z, wq, wk, wv}) < 1e-4);
}

TEST_CASE("an injected gradient fault is caught by the checker") {
  std::mt19937_64 rng(6);
  Tensor a = support::random_tensor({3, 4}, rng);
  a.set_requires_grad(true);
  const Tensor w = support::random_tensor({3, 4}, rng);
  const auto loss = [&] { return sum(mul(softmax_lastdim(a), w)); };
  CHECK(finite_diff_check(loss, {a}) < 1e-6);
  testing::inject_gradient_fault("softmax");
  const double corrupted = finite_diff_check(loss, {a});
  testing::clear_gradient_faults();
  CHECK(corrupted > 1e-4);
}

TEST_CASE("reshape and permute round trips preserve data") {
  std::mt19937_64 rng(12);
  const Tensor x = support::random_tensor({2, 3, 4, 5}, rng);
  CHECK(support::bitwise_equal(reshape(reshape(x, {6, 20}), {2, 3, 4, 5}).data(), x.data()));
  const std::vector<std::size_t> order{2, 0, 3, 1};
  std::vector<std::size_t> inverse(4);
  for (std::size_t i = 0; i < 4; ++i) inverse[order[i]] = i;
  const Tensor there = permute(x, order);
  CHECK(there.shape() == Shape{4, 2, 5, 3});
  // Element (i0,i1,i2,i3) of x lands at (i2,i0,i3,i1).
  CHECK(there.at({3, 1, 4, 2}) == x.at({1, 2, 3, 4}));
  CHECK(support::bitwise_equal(permute(there, inverse).data(), x.data()));
  CHECK_THROWS_AS(reshape(x, {7, 7}), DimensionError);
}

TEST_CASE("LMT1 encoding matches the byte layout") {
  const Tensor x(Shape{2, 1}, std::vector<double>{1.0, -0.5});
  std::ostringstream out(std::ios::binary);
  write_tensor(out, x);
  const std::string bytes = out.str();

  std::string expected = "LMT1";
  const auto put = [&expected](const void* p, std::size_t n) {
    // Little-endian host assumed by the oracle; the test machine is x86-64.
    expected.append(static_cast<const char*>(p), n);
  };
  const std::uint32_t rank = 2;
  const std::uint64_t dims[2] = {2, 1};
  const double values[2] = {1.0, -0.5};
  put(&rank, 4);
  put(dims, 16);
  put(values, 16);
  CHECK(bytes == expected);
}

TEST_CASE("LMT1 round trip is bit exact, including awkward values") {
  std::mt19937_64 rng(13);
  Tensor x = support::random_tensor({3, 2, 4}, rng, -1e300, 1e300);
  auto data = x.mutable_data();
  data[0] = -0.0;
  data[1] = std::numeric_limits<double>::denorm_min();
  data[2] = std::numeric_limits<double>::infinity();
  const auto path = support::scratch_dir("lmt") / "x.lmt";
  save_tensor(path, x);
  const Tensor y = load_tensor(path);
  CHECK(y.shape() == x.shape());
  CHECK(support::bitwise_equal(y.data(), x.data()));

  const Tensor s = Tensor::scalar(3.25);
  save_tensor(path, s);
  CHECK(load_tensor(path).item() == 3.25);
}

TEST_CASE("LMT1 reader rejects bad magic and truncation") {
  std::istringstream bad_magic(std::string("LMT2\x00\x00\x00\x00", 8));
  CHECK_THROWS_AS(read_tensor(bad_magic), FormatError);

  std::ostringstream out(std::ios::binary);
  write_tensor(out, Tensor::vector({1, 2, 3}));
  const std::string full = out.str();
  std::istringstream truncated(full.substr(0, full.size() - 3));
  CHECK_THROWS_AS(read_tensor(truncated), FormatError);
  CHECK_THROWS_AS(load_tensor("/nonexistent/dir/x.lmt"), FormatError);
}
