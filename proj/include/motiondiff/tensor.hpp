#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace motiondiff {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  // Empty until something accumulates into it.
  std::vector<double> grad;
  bool requires_grad = false;
  std::string_view op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(const Node&)> backward;

  void ensure_grad();
};

}  // namespace detail

/// Dense row-major tensor of doubles with an optional gradient slot.
///
/// Copies share the underlying storage, the same way a graph handle does in
/// most autodiff libraries. Operations on tensors that require gradients are
/// recorded so that `backward()` can replay them in reverse topological order.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value);
  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor vector(std::initializer_list<double> values);

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  /// Direct write access. Only meaningful on leaves; writing into a recorded
  /// intermediate does not re-run its consumers.
  std::span<double> mutable_data();
  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool flag);
  bool has_grad() const;
  /// Gradient entries; empty span when nothing has been accumulated.
  std::span<const double> grad() const;
  void zero_grad();

  /// Reverse-mode sweep from a rank-0 tensor.
  void backward() const;

  /// Fresh leaf holding a copy of the values, detached from any graph.
  Tensor detach() const;
  bool defined() const { return node_ != nullptr; }
  bool same_storage(const Tensor& other) const { return node_ == other.node_; }

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node);

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Sentinel written into masked attention scores.
inline constexpr double kMaskSentinel = -1e9;

// ---- recorded operations ----

/// a[..., m, k] x b[k, n] or a[..., m, k] x b[..., k, n] (equal batch dims).
Tensor matmul(const Tensor& a, const Tensor& b);
/// Elementwise sum. `b` may also have a shape equal to a trailing suffix of
/// `a`'s shape, in which case it is repeated over the leading dims.
Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& order);
Tensor softmax_lastdim(const Tensor& x);
Tensor log_softmax_lastdim(const Tensor& x);
/// Replaces entries of scores[..., n, n] where mask[n, n] == 0 with
/// kMaskSentinel. No gradient flows to replaced positions.
Tensor masked_neg_inf_fill(const Tensor& scores, const Tensor& mask);
Tensor mean(const Tensor& x);
Tensor sum(const Tensor& x);
Tensor square(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor concatenate(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length);
/// Rows scaled to unit L2 norm along the last dim. Zero rows map to zero.
Tensor cosine_normalize_lastdim(const Tensor& x);

inline Tensor sub(const Tensor& a, const Tensor& b) { return add(a, scale(b, -1.0)); }

namespace testing {

/// Makes the gradient rule of every node produced by `op` wrong (its upstream
/// gradient is scaled by 1.5 before propagation). Used to prove that the
/// gradient checker catches broken rules.
void inject_gradient_fault(std::string_view op);
void clear_gradient_faults();

}  // namespace testing

}  // namespace motiondiff
