#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "minusformer/rng.hpp"

namespace minusformer {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape) noexcept;
std::string shape_string(const Shape& shape);

namespace detail {

// One vertex of the dynamic autodiff graph. Ids are handed out from a
// process-wide monotonic counter, so every parent has a smaller id than its
// child and sorting by id descending is a valid reverse topological order.
struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    std::uint64_t id = 0;
    std::vector<std::shared_ptr<Node>> parents;
    // Reads self.grad and accumulates into parents' grads.
    std::function<void(Node& self)> backward;

    bool is_leaf() const noexcept { return parents.empty(); }
    std::vector<double>& ensure_grad();
};

}  // namespace detail

/// Dense row-major tensor of doubles with an optional autodiff node.
///
/// A Tensor is a cheap handle: copies share the underlying node. Values of
/// leaf tensors may be mutated in place (parameter updates, initialisation);
/// values of op outputs should be treated as immutable.
class Tensor {
public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor ones(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    static Tensor uniform(Shape shape, double lo, double hi, SeededRng& rng,
                          bool requires_grad = false);

    bool defined() const noexcept { return static_cast<bool>(node_); }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    /// Negative indices count from the back.
    std::size_t dim(int axis) const;
    std::size_t numel() const { return values().size(); }

    std::span<const double> values() const;
    std::span<double> mutable_values();
    double item() const;
    double at(std::initializer_list<std::size_t> index) const;

    bool requires_grad() const;
    void set_requires_grad(bool flag);
    /// Gradient after backward(); all zeros if nothing flowed here.
    std::span<const double> grad() const;
    std::span<double> mutable_grad();
    void zero_grad();

    std::uint64_t node_id() const;
    /// Value copy with no graph attachment.
    Tensor detach() const;

    // Internal: op implementations build graph nodes directly.
    const std::shared_ptr<detail::Node>& node() const { return node_; }
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<detail::Node> node_;
};

/// Disables graph recording for ops on this thread while alive.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled() noexcept;

// ---------------------------------------------------------------------------
// Operations. Every op registers a backward closure when any input requires
// grad and recording is enabled.

/// Batched matrix product over the last two axes. Batch axes are aligned
/// from the right and must be equal or 1 (a missing axis counts as 1).
Tensor matmul(const Tensor& a, const Tensor& b);

// Binary pointwise ops. `b` must have the same shape as `a` or a shape equal
// to a trailing suffix of a's shape, in which case it repeats over the
// leading axes (bias and per-feature scale).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& x, double factor);
Tensor neg(const Tensor& x);
Tensor square(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
/// Exact GELU, x·Φ(x).
Tensor gelu(const Tensor& x);

Tensor softmax_last(const Tensor& x);

enum class ReduceKind { mean, var };
/// Reduces over one axis and drops it. `var` is the population variance.
Tensor reduce(ReduceKind kind, const Tensor& x, int axis);
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes);
Tensor transpose_last2(const Tensor& x);
Tensor concat_last(const Tensor& a, const Tensor& b);

/// Normalises each slice along the last axis then applies gamma/beta, which
/// are both shaped like that axis.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);

/// Reverse-mode sweep from a scalar. Leaf gradients accumulate across calls;
/// interior gradients are reset on every call.
void backward(const Tensor& loss);

}  // namespace minusformer
