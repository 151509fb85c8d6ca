// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mowe {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

/// One vertex of the dynamic gradient graph. `backward` reads this node's
/// grad and accumulates into the parents that require grad.
struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;
    bool requires_grad = false;
    bool is_leaf = true;
    std::uint64_t id = 0;
    const char* op = "leaf";

    std::vector<double>& ensure_grad();
};

}  // namespace detail

class Tensor;

/// Disables graph recording on the current thread for its lifetime.
/// Results computed under the guard are constants.
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

/// Dense row-major double-precision array with optional participation in
/// reverse-mode differentiation. Copies share storage (handle semantics);
/// use `clone()` for a deep copy.
class Tensor {
public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    static Tensor identity(std::size_t n, bool requires_grad = false);

    bool defined() const noexcept { return static_cast<bool>(node_); }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const;
    /// Leading extent of a rank-2 tensor.
    std::size_t rows() const;
    /// Trailing extent of a rank-2 tensor (length of a rank-1 tensor).
    std::size_t cols() const;

    std::span<const double> data() const;
    /// Writable view. Only meaningful on leaves (parameters, inputs).
    std::span<double> mutable_data();
    double operator[](std::size_t i) const { return data()[i]; }
    double at(std::size_t r, std::size_t c) const;
    double item() const;

    bool requires_grad() const;
    void set_requires_grad(bool on);
    bool has_grad() const;
    /// Gradient after `backward()`; an all-zero view when none was populated.
    std::span<const double> grad() const;
    void zero_grad();

    /// Reverse pass from a single-element root. Interior gradients are reset,
    /// leaf gradients accumulate.
    void backward() const;

    /// Same values, cut from the graph.
    Tensor detach() const;
    /// Deep copy of the values as a new leaf.
    Tensor clone(bool requires_grad = false) const;

    std::uint64_t id() const;
    const char* op_name() const;

    const std::shared_ptr<detail::Node>& node() const { return node_; }
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<detail::Node> node_;
};

/// Builds the result of a differentiable op. When grad mode is off or no
/// parent requires grad, the result is a constant and `backward` is dropped.
Tensor make_result(Shape shape, std::vector<double> values, std::vector<Tensor> parents,
                   std::function<void(detail::Node&)> backward, const char* op);

}  // namespace mowe
