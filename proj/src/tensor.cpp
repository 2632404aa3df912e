#include "motiondiff/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "motiondiff/errors.hpp"

namespace motiondiff {

namespace {

thread_local bool t_grad_enabled = true;

std::string g_fault_op;

using NodePtr = std::shared_ptr<detail::Node>;

// Builds the result node. Parents and the backward closure are only kept when
// recording is on and at least one input wants a gradient.
Tensor make_result(Shape shape, std::vector<double> data, std::vector<NodePtr> parents,
                   std::function<void(const detail::Node&)> backward, std::string_view op) {
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = op;
  const bool needs = t_grad_enabled && std::any_of(parents.begin(), parents.end(),
                                                   [](const NodePtr& p) { return p->requires_grad; });
  if (needs) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

void check_finite(std::span<const double> values, std::string_view op) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(op) + ": non-finite input");
    }
  }
}

std::vector<std::size_t> strides_of(const Shape& shape) {
  std::vector<std::size_t> strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) {
    strides[i - 1] = strides[i] * shape[i];
  }
  return strides;
}

bool is_suffix(const Shape& full, const Shape& tail) {
  if (tail.size() > full.size()) return false;
  return std::equal(tail.begin(), tail.end(), full.end() - static_cast<std::ptrdiff_t>(tail.size()));
}

// Rows of the last dim: (number of rows, row length).
std::pair<std::size_t, std::size_t> lastdim_rows(const Tensor& x, std::string_view op) {
  if (x.rank() == 0) {
    throw DimensionError(std::string(op) + ": expected rank >= 1, got scalar");
  }
  const std::size_t n = x.shape().back();
  if (n == 0) {
    throw ContractError(std::string(op) + ": last dimension must be >= 1");
  }
  return {x.numel() / n, n};
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ", ";
    out << shape[i];
  }
  out << ']';
  return out.str();
}

void detail::Node::ensure_grad() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
}

// ---- Tensor ----

Tensor::Tensor() : Tensor(Shape{}, 0.0) {}

Tensor::Tensor(Shape shape, double fill) : node_(std::make_shared<detail::Node>()) {
  node_->data.assign(shape_numel(shape), fill);
  node_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : node_(std::make_shared<detail::Node>()) {
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("tensor: shape " + shape_to_string(shape) + " needs " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(data.size()));
  }
  node_->shape = std::move(shape);
  node_->data = std::move(data);
}

Tensor::Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t m = rows.size();
  const std::size_t n = m ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(m * n);
  for (const auto& row : rows) {
    if (row.size() != n) throw DimensionError("matrix: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor(Shape{m, n}, std::move(data));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor(Shape{values.size()}, std::vector<double>(values));
}

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw IndexError("dim: axis " + std::to_string(axis) + " out of range for shape " +
                     shape_to_string(shape()));
  }
  return node_->shape[axis];
}

std::size_t Tensor::numel() const { return node_->data.size(); }

std::span<const double> Tensor::data() const { return node_->data; }

std::span<double> Tensor::mutable_data() { return node_->data; }

double Tensor::item() const {
  if (numel() != 1) {
    throw ContractError("item: tensor of shape " + shape_to_string(shape()) + " is not a scalar");
  }
  return node_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  if (index.size() != rank()) throw DimensionError("at: index rank mismatch");
  const auto strides = strides_of(shape());
  std::size_t offset = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    if (i >= shape()[axis]) throw IndexError("at: index out of range");
    offset += i * strides[axis++];
  }
  return node_->data[offset];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool flag) {
  node_->requires_grad = flag;
  return *this;
}

bool Tensor::has_grad() const { return !node_->grad.empty(); }

std::span<const double> Tensor::grad() const { return node_->grad; }

void Tensor::zero_grad() { node_->grad.clear(); }

Tensor Tensor::detach() const { return Tensor(shape(), node_->data); }

void Tensor::backward() const {
  if (rank() != 0) {
    throw ContractError("backward: loss must be rank-0, got shape " + shape_to_string(shape()));
  }
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order (inputs before users).
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  node_->ensure_grad();
  node_->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (!node->backward || node->grad.empty()) continue;
    if (!g_fault_op.empty() && node->op == g_fault_op) {
      auto saved = node->grad;
      for (double& g : node->grad) g *= 1.5;
      node->backward(*node);
      node->grad = std::move(saved);
    } else {
      node->backward(*node);
    }
  }
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

bool grad_enabled() { return t_grad_enabled; }

namespace testing {
void inject_gradient_fault(std::string_view op) { g_fault_op = op; }
void clear_gradient_faults() { g_fault_op.clear(); }
}  // namespace testing

// ---- operations ----

Tensor matmul(const Tensor& a, const Tensor& b) {
  const auto fail = [&] {
    return DimensionError("matmul: incompatible shapes " + shape_to_string(a.shape()) + " and " +
                          shape_to_string(b.shape()));
  };
  if (a.rank() < 2 || b.rank() < 2) throw fail();
  const bool shared_rhs = b.rank() == 2;
  if (!shared_rhs && b.rank() != a.rank()) throw fail();
  const std::size_t m = a.shape()[a.rank() - 2];
  const std::size_t k = a.shape().back();
  const std::size_t n = b.shape().back();
  if (b.shape()[b.rank() - 2] != k) throw fail();
  if (!shared_rhs && !std::equal(a.shape().begin(), a.shape().end() - 2, b.shape().begin())) {
    throw fail();
  }
  const std::size_t batch = shape_numel(Shape(a.shape().begin(), a.shape().end() - 2));

  Shape out_shape(a.shape().begin(), a.shape().end() - 2);
  out_shape.push_back(m);
  out_shape.push_back(n);
  std::vector<double> out(batch * m * n, 0.0);
  const auto& ad = a.node()->data;
  const auto& bd = b.node()->data;
  for (std::size_t s = 0; s < batch; ++s) {
    const double* A = ad.data() + s * m * k;
    const double* B = bd.data() + (shared_rhs ? 0 : s * k * n);
    double* C = out.data() + s * m * n;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t p = 0; p < k; ++p) {
        const double av = A[i * k + p];
        for (std::size_t j = 0; j < n; ++j) C[i * n + j] += av * B[p * n + j];
      }
    }
  }

  NodePtr an = a.node(), bn = b.node();
  return make_result(
      std::move(out_shape), std::move(out), {an, bn},
      [an, bn, batch, m, k, n, shared_rhs](const detail::Node& self) {
        const double* G = self.grad.data();
        if (an->requires_grad) {
          an->ensure_grad();
          for (std::size_t s = 0; s < batch; ++s) {
            const double* B = bn->data.data() + (shared_rhs ? 0 : s * k * n);
            const double* Gs = G + s * m * n;
            double* dA = an->grad.data() + s * m * k;
            for (std::size_t i = 0; i < m; ++i) {
              for (std::size_t p = 0; p < k; ++p) {
                double acc = 0.0;
                for (std::size_t j = 0; j < n; ++j) acc += Gs[i * n + j] * B[p * n + j];
                dA[i * k + p] += acc;
              }
            }
          }
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (std::size_t s = 0; s < batch; ++s) {
            const double* A = an->data.data() + s * m * k;
            const double* Gs = G + s * m * n;
            double* dB = bn->grad.data() + (shared_rhs ? 0 : s * k * n);
            for (std::size_t i = 0; i < m; ++i) {
              for (std::size_t p = 0; p < k; ++p) {
                const double av = A[i * k + p];
                for (std::size_t j = 0; j < n; ++j) dB[p * n + j] += av * Gs[i * n + j];
              }
            }
          }
        }
      },
      "matmul");
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (!is_suffix(a.shape(), b.shape())) {
    throw DimensionError("add: shape " + shape_to_string(b.shape()) +
                         " does not match or trail shape " + shape_to_string(a.shape()));
  }
  const std::size_t period = b.numel();
  std::vector<double> out(a.data().begin(), a.data().end());
  if (period > 0) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.data()[i % period];
  }
  NodePtr an = a.node(), bn = b.node();
  return make_result(
      a.shape(), std::move(out), {an, bn},
      [an, bn, period](const detail::Node& self) {
        if (an->requires_grad) {
          an->ensure_grad();
          for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
        }
        if (bn->requires_grad && period > 0) {
          bn->ensure_grad();
          for (std::size_t i = 0; i < self.grad.size(); ++i) bn->grad[i % period] += self.grad[i];
        }
      },
      "add");
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (double& v : out) v *= factor;
  NodePtr xn = x.node();
  return make_result(
      x.shape(), std::move(out), {xn},
      [xn, factor](const detail::Node& self) {
        xn->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += factor * self.grad[i];
      },
      "scale");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("mul: shapes " + shape_to_string(a.shape()) + " and " +
                         shape_to_string(b.shape()) + " differ");
  }
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  NodePtr an = a.node(), bn = b.node();
  return make_result(
      a.shape(), std::move(out), {an, bn},
      [an, bn](const detail::Node& self) {
        if (an->requires_grad) {
          an->ensure_grad();
          for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * bn->data[i];
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (std::size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] += self.grad[i] * an->data[i];
        }
      },
      "mul");
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_to_string(x.shape()) + " as " +
                         shape_to_string(shape));
  }
  NodePtr xn = x.node();
  return make_result(
      std::move(shape), xn->data, {xn},
      [xn](const detail::Node& self) {
        xn->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i];
      },
      "reshape");
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& order) {
  const std::size_t r = x.rank();
  std::vector<bool> used(r, false);
  bool valid = order.size() == r;
  for (std::size_t i = 0; valid && i < r; ++i) {
    valid = order[i] < r && !used[order[i]];
    if (valid) used[order[i]] = true;
  }
  if (!valid) throw DimensionError("permute: invalid axis order for shape " + shape_to_string(x.shape()));

  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = x.shape()[order[i]];
  const auto in_strides = strides_of(x.shape());
  // source offset for every output position, in output order
  std::vector<std::size_t> gather(x.numel());
  std::vector<std::size_t> idx(r, 0);
  for (std::size_t pos = 0; pos < gather.size(); ++pos) {
    std::size_t src = 0;
    for (std::size_t i = 0; i < r; ++i) src += idx[i] * in_strides[order[i]];
    gather[pos] = src;
    for (std::size_t i = r; i-- > 0;) {
      if (++idx[i] < out_shape[i]) break;
      idx[i] = 0;
    }
  }
  std::vector<double> out(gather.size());
  for (std::size_t pos = 0; pos < gather.size(); ++pos) out[pos] = x.data()[gather[pos]];

  NodePtr xn = x.node();
  return make_result(
      std::move(out_shape), std::move(out), {xn},
      [xn, gather = std::move(gather)](const detail::Node& self) {
        xn->ensure_grad();
        for (std::size_t pos = 0; pos < gather.size(); ++pos) xn->grad[gather[pos]] += self.grad[pos];
      },
      "permute");
}

Tensor softmax_lastdim(const Tensor& x) {
  const auto [rows, n] = lastdim_rows(x, "softmax");
  check_finite(x.data(), "softmax");
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data().data() + r * n;
    double* y = out.data() + r * n;
    const double peak = *std::max_element(in, in + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      y[j] = std::exp(in[j] - peak);
      total += y[j];
    }
    for (std::size_t j = 0; j < n; ++j) y[j] /= total;
  }
  NodePtr xn = x.node();
  return make_result(
      x.shape(), std::move(out), {xn},
      [xn, rows = rows, n = n](const detail::Node& self) {
        xn->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
          const double* y = self.data.data() + r * n;
          const double* g = self.grad.data() + r * n;
          double dot = 0.0;
          for (std::size_t j = 0; j < n; ++j) dot += g[j] * y[j];
          for (std::size_t j = 0; j < n; ++j) xn->grad[r * n + j] += y[j] * (g[j] - dot);
        }
      },
      "softmax");
}

Tensor log_softmax_lastdim(const Tensor& x) {
  const auto [rows, n] = lastdim_rows(x, "log_softmax");
  check_finite(x.data(), "log_softmax");
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data().data() + r * n;
    double* y = out.data() + r * n;
    const double peak = *std::max_element(in, in + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += std::exp(in[j] - peak);
    const double lse = peak + std::log(total);
    for (std::size_t j = 0; j < n; ++j) y[j] = in[j] - lse;
  }
  NodePtr xn = x.node();
  return make_result(
      x.shape(), std::move(out), {xn},
      [xn, rows = rows, n = n](const detail::Node& self) {
        xn->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
          const double* y = self.data.data() + r * n;
          const double* g = self.grad.data() + r * n;
          double total = 0.0;
          for (std::size_t j = 0; j < n; ++j) total += g[j];
          for (std::size_t j = 0; j < n; ++j) xn->grad[r * n + j] += g[j] - std::exp(y[j]) * total;
        }
      },
      "log_softmax");
}

Tensor masked_neg_inf_fill(const Tensor& scores, const Tensor& mask) {
  if (mask.rank() != 2 || mask.dim(0) != mask.dim(1) || scores.rank() < 2 ||
      scores.shape()[scores.rank() - 1] != mask.dim(1) ||
      scores.shape()[scores.rank() - 2] != mask.dim(0)) {
    throw DimensionError("masked_neg_inf_fill: mask " + shape_to_string(mask.shape()) +
                         " does not match scores " + shape_to_string(scores.shape()));
  }
  for (double v : mask.data()) {
    if (v != 0.0 && v != 1.0) throw ContractError("masked_neg_inf_fill: mask entries must be 0 or 1");
  }
  const std::size_t period = mask.numel();
  std::vector<bool> keep(period);
  for (std::size_t i = 0; i < period; ++i) keep[i] = mask.data()[i] != 0.0;
  std::vector<double> out(scores.data().begin(), scores.data().end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!keep[i % period]) out[i] = kMaskSentinel;
  }
  NodePtr sn = scores.node();
  return make_result(
      scores.shape(), std::move(out), {sn},
      [sn, keep = std::move(keep), period](const detail::Node& self) {
        sn->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
          if (keep[i % period]) sn->grad[i] += self.grad[i];
        }
      },
      "masked_fill");
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  NodePtr xn = x.node();
  return make_result(
      Shape{}, {total}, {xn},
      [xn](const detail::Node& self) {
        xn->ensure_grad();
        for (double& g : xn->grad) g += self.grad[0];
      },
      "sum");
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw ContractError("mean: empty tensor");
  const double inv = 1.0 / static_cast<double>(x.numel());
  double total = 0.0;
  for (double v : x.data()) total += v;
  NodePtr xn = x.node();
  return make_result(
      Shape{}, {total * inv}, {xn},
      [xn, inv](const detail::Node& self) {
        xn->ensure_grad();
        for (double& g : xn->grad) g += self.grad[0] * inv;
      },
      "mean");
}

Tensor square(const Tensor& x) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * x.data()[i];
  NodePtr xn = x.node();
  return make_result(
      x.shape(), std::move(out), {xn},
      [xn](const detail::Node& self) {
        xn->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += 2.0 * xn->data[i] * self.grad[i];
      },
      "square");
}

Tensor sqrt(const Tensor& x) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!(x.data()[i] >= 0.0)) throw NumericError("sqrt: negative or non-finite input");
    out[i] = std::sqrt(x.data()[i]);
  }
  NodePtr xn = x.node();
  return make_result(
      x.shape(), std::move(out), {xn},
      [xn](const detail::Node& self) {
        xn->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
          xn->grad[i] += self.grad[i] / (2.0 * self.data[i]);
        }
      },
      "sqrt");
}

Tensor concatenate(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concatenate: no inputs");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw DimensionError("concatenate: axis out of range");
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    bool ok = p.rank() == first.size();
    for (std::size_t i = 0; ok && i < first.size(); ++i) ok = i == axis || p.shape()[i] == first[i];
    if (!ok) {
      throw DimensionError("concatenate: shape " + shape_to_string(p.shape()) +
                           " incompatible with " + shape_to_string(first));
    }
    out_shape[axis] += p.shape()[axis];
  }
  const std::size_t outer = shape_numel(Shape(first.begin(), first.begin() + static_cast<std::ptrdiff_t>(axis)));
  const std::size_t inner = shape_numel(Shape(first.begin() + static_cast<std::ptrdiff_t>(axis) + 1, first.end()));
  const std::size_t out_row = out_shape[axis] * inner;

  std::vector<double> out(shape_numel(out_shape));
  std::vector<NodePtr> nodes;
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t row = p.shape()[axis] * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(p.data().begin() + static_cast<std::ptrdiff_t>(o * row), row,
                  out.begin() + static_cast<std::ptrdiff_t>(o * out_row + offset));
    }
    nodes.push_back(p.node());
    offsets.push_back(offset);
    offset += row;
  }
  auto parents = nodes;
  return make_result(
      std::move(out_shape), std::move(out), std::move(parents),
      [nodes, offsets, outer, out_row, inner, axis](const detail::Node& self) {
        for (std::size_t q = 0; q < nodes.size(); ++q) {
          auto& pn = nodes[q];
          if (!pn->requires_grad) continue;
          pn->ensure_grad();
          const std::size_t row = pn->shape[axis] * inner;
          for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t i = 0; i < row; ++i) {
              pn->grad[o * row + i] += self.grad[o * out_row + offsets[q] + i];
            }
          }
        }
      },
      "concatenate");
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length) {
  if (axis >= x.rank()) throw DimensionError("slice: axis out of range for " + shape_to_string(x.shape()));
  if (start + length > x.shape()[axis]) {
    throw IndexError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                     ") exceeds dim " + std::to_string(x.shape()[axis]));
  }
  const Shape& s = x.shape();
  const std::size_t outer = shape_numel(Shape(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(axis)));
  const std::size_t inner = shape_numel(Shape(s.begin() + static_cast<std::ptrdiff_t>(axis) + 1, s.end()));
  const std::size_t in_row = s[axis] * inner;
  const std::size_t out_row = length * inner;
  Shape out_shape = s;
  out_shape[axis] = length;
  std::vector<double> out(outer * out_row);
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(x.data().begin() + static_cast<std::ptrdiff_t>(o * in_row + start * inner), out_row,
                out.begin() + static_cast<std::ptrdiff_t>(o * out_row));
  }
  NodePtr xn = x.node();
  return make_result(
      std::move(out_shape), std::move(out), {xn},
      [xn, outer, in_row, out_row, start, inner](const detail::Node& self) {
        xn->ensure_grad();
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t i = 0; i < out_row; ++i) {
            xn->grad[o * in_row + start * inner + i] += self.grad[o * out_row + i];
          }
        }
      },
      "slice");
}

Tensor cosine_normalize_lastdim(const Tensor& x) {
  const auto [rows, n] = lastdim_rows(x, "cosine_normalize");
  std::vector<double> out(x.numel(), 0.0);
  std::vector<double> norms(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data().data() + r * n;
    double sq = 0.0;
    for (std::size_t j = 0; j < n; ++j) sq += in[j] * in[j];
    norms[r] = std::sqrt(sq);
    if (norms[r] > 0.0) {
      for (std::size_t j = 0; j < n; ++j) out[r * n + j] = in[j] / norms[r];
    }
  }
  NodePtr xn = x.node();
  return make_result(
      x.shape(), std::move(out), {xn},
      [xn, norms = std::move(norms), rows = rows, n = n](const detail::Node& self) {
        xn->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
          if (norms[r] == 0.0) continue;
          const double* y = self.data.data() + r * n;
          const double* g = self.grad.data() + r * n;
          double dot = 0.0;
          for (std::size_t j = 0; j < n; ++j) dot += y[j] * g[j];
          for (std::size_t j = 0; j < n; ++j) xn->grad[r * n + j] += (g[j] - y[j] * dot) / norms[r];
        }
      },
      "cosine_normalize");
}

}  // namespace motiondiff
