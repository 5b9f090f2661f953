#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace hyperfuse {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape) noexcept;
std::string shape_to_string(const Shape& shape);

class Tensor;

namespace detail {

struct Node;

// Receives the node's own output value, the gradient flowing into it and one
// gradient buffer per parent (null when that parent is not differentiable).
using BackwardFn = std::function<void(const Node& self, std::span<const double> grad_out,
                                      std::span<std::vector<double>*> grad_in)>;

struct Node {
    Shape shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::string op = "leaf";
    std::vector<std::shared_ptr<const Node>> parents;
    BackwardFn backward;
};

// Builds the result of an op; attaches the backward closure only when one of
// the parents is differentiable. Throws NonFinite if any output is not finite.
Tensor make_result(std::string op, Shape shape, std::vector<double> data,
                   std::vector<Tensor> parents, BackwardFn backward);

}  // namespace detail

// Dense row-major 64-bit tensor of rank 0..4. Immutable after construction;
// copies share storage. Ops that consume differentiable tensors record their
// inputs so backward() can walk the graph.
class Tensor {
public:
    Tensor();
    Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

    static Tensor zeros(const Shape& shape);
    static Tensor full(const Shape& shape, double value);
    static Tensor scalar(double value, bool requires_grad = false);
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor vector(std::initializer_list<double> values);

    const Shape& shape() const noexcept { return node_->shape; }
    std::size_t rank() const noexcept { return node_->shape.size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const noexcept { return node_->data.size(); }
    std::span<const double> data() const noexcept { return node_->data; }
    double operator[](std::size_t flat) const { return node_->data[flat]; }
    double at(std::initializer_list<std::size_t> index) const;
    double item() const;

    bool requires_grad() const noexcept { return node_->requires_grad; }
    const std::string& op() const noexcept { return node_->op; }

    // Same values, new leaf with the requested grad flag and no history.
    Tensor detach(bool requires_grad = false) const;
    Tensor with_value(std::size_t flat, double value) const;

    bool same_node(const Tensor& other) const noexcept { return node_ == other.node_; }

private:
    explicit Tensor(std::shared_ptr<const detail::Node> node) : node_(std::move(node)) {}

    std::shared_ptr<const detail::Node> node_;

    friend Tensor detail::make_result(std::string, Shape, std::vector<double>, std::vector<Tensor>,
                                      detail::BackwardFn);
    friend class GradTape;
};

// Exact equality of shape and every value bit.
bool bitwise_equal(const Tensor& a, const Tensor& b) noexcept;
double max_abs_diff(const Tensor& a, const Tensor& b);

// Reverse topological order of the differentiable part of the graph
// that produced a scalar loss. Each recorded op appears exactly once.
class GradTape {
public:
    explicit GradTape(const Tensor& loss);

    std::size_t size() const noexcept { return order_.size(); }
    std::vector<std::string> op_names() const;
    bool contains(const Tensor& t) const noexcept;

    std::vector<Tensor> gradients(std::span<const Tensor> wrt) const;

private:
    Tensor loss_;
    std::vector<const detail::Node*> order_;
};

// d(loss)/d(t) for every t in wrt. Fan-out contributions are summed.
std::vector<Tensor> backward(const Tensor& loss, std::span<const Tensor> wrt);
Tensor backward(const Tensor& loss, const Tensor& wrt);

// Internal data parallelism. Every output element is always produced by one
// thread with a fixed reduction order, so results do not depend on this value.
void set_num_threads(int n);
int num_threads() noexcept;

}  // namespace hyperfuse
