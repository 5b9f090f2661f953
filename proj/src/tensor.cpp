#include "hyperfuse/tensor.hpp"

#include "hyperfuse/error.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <unordered_map>
#include <unordered_set>

namespace hyperfuse {

std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::EmptyRow: return "EmptyRow";
    case ErrorKind::OddExtent: return "OddExtent";
    case ErrorKind::NotOnTape: return "NotOnTape";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::EmptyHyperedge: return "EmptyHyperedge";
    case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::EmptyNodeSet: return "EmptyNodeSet";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::InstanceTooLarge: return "InstanceTooLarge";
    case ErrorKind::NonFiniteEvaluation: return "NonFiniteEvaluation";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::IoError: return "IoError";
    }
    return "Unknown";
}

std::size_t shape_numel(const Shape& shape) noexcept {
    std::size_t n = 1;
    for (auto e : shape) n *= e;
    return n;
}

std::string shape_to_string(const Shape& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

namespace {

void check_rank(const Shape& shape) {
    if (shape.size() > 4) throw Error(ErrorKind::ShapeMismatch, "rank > 4: " + shape_to_string(shape));
}

void check_finite(const std::vector<double>& data, const std::string& op) {
    for (double v : data)
        if (!std::isfinite(v)) throw Error(ErrorKind::NonFinite, "non-finite value produced by " + op);
}

std::atomic<int> g_num_threads{1};

}  // namespace

void set_num_threads(int n) { g_num_threads.store(std::max(1, n)); }
int num_threads() noexcept { return g_num_threads.load(); }

Tensor::Tensor() : Tensor(Shape{0}, {}) {}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
    check_rank(shape);
    if (shape_numel(shape) != data.size())
        throw Error(ErrorKind::ShapeMismatch, "shape " + shape_to_string(shape) + " does not hold " +
                                                  std::to_string(data.size()) + " values");
    check_finite(data, "constructor");
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->requires_grad = requires_grad;
    node_ = std::move(node);
}

Tensor Tensor::zeros(const Shape& shape) { return full(shape, 0.0); }

Tensor Tensor::full(const Shape& shape, double value) {
    return Tensor(shape, std::vector<double>(shape_numel(shape), value));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({}, {value}, requires_grad); }

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t n = rows.size();
    const std::size_t m = n ? rows.begin()->size() : 0;
    std::vector<double> data;
    data.reserve(n * m);
    for (const auto& row : rows) {
        if (row.size() != m) throw Error(ErrorKind::ShapeMismatch, "ragged matrix literal");
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({n, m}, std::move(data));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
    return Tensor({values.size()}, std::vector<double>(values));
}

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= rank()) throw Error(ErrorKind::IndexOutOfRange, "axis out of range");
    return node_->shape[axis];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
    if (index.size() != rank()) throw Error(ErrorKind::IndexOutOfRange, "index rank mismatch");
    std::size_t flat = 0;
    std::size_t axis = 0;
    for (auto i : index) {
        if (i >= node_->shape[axis]) throw Error(ErrorKind::IndexOutOfRange, "index out of range");
        flat = flat * node_->shape[axis] + i;
        ++axis;
    }
    return node_->data[flat];
}

double Tensor::item() const {
    if (numel() != 1) throw Error(ErrorKind::ShapeMismatch, "item() on " + shape_to_string(shape()));
    return node_->data[0];
}

Tensor Tensor::detach(bool requires_grad) const { return Tensor(shape(), node_->data, requires_grad); }

Tensor Tensor::with_value(std::size_t flat, double value) const {
    if (flat >= numel()) throw Error(ErrorKind::IndexOutOfRange, "flat index out of range");
    auto data = node_->data;
    data[flat] = value;
    return Tensor(shape(), std::move(data), requires_grad());
}

bool bitwise_equal(const Tensor& a, const Tensor& b) noexcept {
    if (a.shape() != b.shape()) return false;
    for (std::size_t i = 0; i < a.numel(); ++i)
        if (std::bit_cast<std::uint64_t>(a[i]) != std::bit_cast<std::uint64_t>(b[i])) return false;
    return true;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw Error(ErrorKind::ShapeMismatch, shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
    double worst = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    return worst;
}

namespace detail {

Tensor make_result(std::string op, Shape shape, std::vector<double> data, std::vector<Tensor> parents,
                   BackwardFn backward) {
    check_rank(shape);
    check_finite(data, op);
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->op = std::move(op);
    const bool any = std::any_of(parents.begin(), parents.end(), [](const Tensor& t) { return t.requires_grad(); });
    if (any) {
        node->requires_grad = true;
        node->parents.reserve(parents.size());
        for (auto& p : parents) node->parents.push_back(p.node_);
        node->backward = std::move(backward);
    }
    return Tensor(std::shared_ptr<const Node>(std::move(node)));
}

}  // namespace detail

GradTape::GradTape(const Tensor& loss) : loss_(loss) {
    if (loss.numel() != 1) throw Error(ErrorKind::ShapeMismatch, "loss must be a scalar");
    if (!loss.requires_grad()) return;

    // Iterative post-order DFS; reversing it gives a valid reverse topological order.
    std::vector<const detail::Node*> post;
    std::unordered_set<const detail::Node*> seen;
    std::vector<std::pair<const detail::Node*, std::size_t>> stack;
    stack.emplace_back(loss.node_.get(), 0);
    seen.insert(loss.node_.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            const detail::Node* parent = node->parents[next++].get();
            if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
        } else {
            post.push_back(node);
            stack.pop_back();
        }
    }
    order_.assign(post.rbegin(), post.rend());
}

std::vector<std::string> GradTape::op_names() const {
    std::vector<std::string> names;
    names.reserve(order_.size());
    for (const auto* node : order_) names.push_back(node->op);
    return names;
}

bool GradTape::contains(const Tensor& t) const noexcept {
    return std::find(order_.begin(), order_.end(), t.node_.get()) != order_.end();
}

std::vector<Tensor> GradTape::gradients(std::span<const Tensor> wrt) const {
    for (const auto& t : wrt)
        if (!t.requires_grad() || !contains(t))
            throw Error(ErrorKind::NotOnTape, "tensor did not participate in the recorded computation");

    std::unordered_map<const detail::Node*, std::vector<double>> grads;
    grads[order_.front()] = std::vector<double>(1, 1.0);

    for (const auto* node : order_) {
        auto it = grads.find(node);
        if (it == grads.end() || !node->backward) continue;
        const std::vector<double>& gout = it->second;
        std::vector<std::vector<double>*> gin(node->parents.size(), nullptr);
        for (std::size_t i = 0; i < node->parents.size(); ++i) {
            const auto* parent = node->parents[i].get();
            if (!parent->requires_grad) continue;
            auto& buf = grads[parent];
            if (buf.empty()) buf.assign(parent->data.size(), 0.0);
            gin[i] = &buf;
        }
        node->backward(*node, gout, gin);
    }

    std::vector<Tensor> out;
    out.reserve(wrt.size());
    for (const auto& t : wrt) {
        auto it = grads.find(t.node_.get());
        std::vector<double> g = it == grads.end() ? std::vector<double>(t.numel(), 0.0) : it->second;
        out.emplace_back(t.shape(), std::move(g));
    }
    return out;
}

std::vector<Tensor> backward(const Tensor& loss, std::span<const Tensor> wrt) {
    return GradTape(loss).gradients(wrt);
}

Tensor backward(const Tensor& loss, const Tensor& wrt) {
    return backward(loss, std::span<const Tensor>(&wrt, 1)).front();
}

}  // namespace hyperfuse
