#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace stattn {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << 'x';
        os << s[i];
    }
    return s.empty() ? "scalar" : os.str();
}

namespace detail {

inline std::uint64_t next_node_id() {
    static std::atomic<std::uint64_t> counter{0};
    return counter.fetch_add(1, std::memory_order_relaxed);
}

struct Node {
    std::uint64_t id = 0;
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad; // same size as data once allocated
    std::vector<std::shared_ptr<Node>> parents;
    // Accumulates into parents' grads; receives the node itself so closures
    // never have to capture it (keeps the graph cycle-free).
    std::function<void(Node&)> backprop;

    void ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), 0.0);
    }
    bool is_leaf() const { return parents.empty(); }
};

} // namespace detail

/// Dense 64-bit float array participating in a reverse-mode computation
/// graph. Value semantics: copies share the underlying node.
class Tensor {
public:
    Tensor() = default;

    static Tensor from_data(Shape shape, std::vector<double> data) {
        if (shape_size(shape) != data.size()) {
            throw std::invalid_argument("tensor: shape " + shape_str(shape) +
                                        " does not match data size " + std::to_string(data.size()));
        }
        return make(std::move(shape), std::move(data), {}, nullptr);
    }

    static Tensor zeros(Shape shape) {
        std::vector<double> d(shape_size(shape), 0.0);
        return make(std::move(shape), std::move(d), {}, nullptr);
    }

    static Tensor full(Shape shape, double value) {
        std::vector<double> d(shape_size(shape), value);
        return make(std::move(shape), std::move(d), {}, nullptr);
    }

    static Tensor scalar(double value) { return from_data({1}, {value}); }

    bool defined() const { return n_ != nullptr; }

    const Shape& shape() const { return node().shape; }
    std::size_t rank() const { return node().shape.size(); }
    std::size_t size() const { return node().data.size(); }
    std::uint64_t id() const { return node().id; }

    /// Scalar value; requires size() == 1.
    double value() const {
        if (size() != 1) {
            throw std::invalid_argument("tensor: value() on non-scalar shape " + shape_str(shape()));
        }
        return node().data[0];
    }

    std::vector<double>& data() { return node().data; }
    const std::vector<double>& data() const { return node().data; }

    double operator[](std::size_t i) const { return node().data[i]; }

    bool has_grad() const { return !node().grad.empty(); }

    /// Gradient buffer, allocated (zeroed) on first access.
    std::vector<double>& grad() {
        node().ensure_grad();
        return node().grad;
    }
    const std::vector<double>& grad() const {
        const_cast<detail::Node&>(node()).ensure_grad();
        return node().grad;
    }

    void zero_grad() {
        auto& g = node().grad;
        g.assign(node().data.size(), 0.0);
    }

    std::shared_ptr<detail::Node> node_ptr() const { return n_; }

    static Tensor make(Shape shape, std::vector<double> data,
                       std::vector<std::shared_ptr<detail::Node>> parents,
                       std::function<void(detail::Node&)> backprop) {
        Tensor t;
        t.n_ = std::make_shared<detail::Node>();
        t.n_->id = detail::next_node_id();
        t.n_->shape = std::move(shape);
        t.n_->data = std::move(data);
        t.n_->parents = std::move(parents);
        t.n_->backprop = std::move(backprop);
        return t;
    }

private:
    detail::Node& node() {
        if (!n_) throw std::logic_error("tensor: use of default-constructed tensor");
        return *n_;
    }
    const detail::Node& node() const {
        if (!n_) throw std::logic_error("tensor: use of default-constructed tensor");
        return *n_;
    }

    std::shared_ptr<detail::Node> n_;
};

/// Reverse-mode sweep from a scalar loss. Each reachable node is visited
/// exactly once, in descending creation order (parents always precede their
/// children in creation order, so this is a topological order). Leaf
/// gradients accumulate across calls; interior gradients are reset per call.
inline void backward(const Tensor& loss) {
    if (loss.size() != 1) {
        throw std::invalid_argument("backward: loss must be scalar-shaped, got " +
                                    shape_str(loss.shape()));
    }

    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> seen;
    std::vector<detail::Node*> stack{loss.node_ptr().get()};
    seen.insert(stack.back());
    while (!stack.empty()) {
        detail::Node* n = stack.back();
        stack.pop_back();
        order.push_back(n);
        for (const auto& p : n->parents) {
            if (seen.insert(p.get()).second) stack.push_back(p.get());
        }
    }
    std::sort(order.begin(), order.end(),
              [](const detail::Node* a, const detail::Node* b) { return a->id > b->id; });

    for (detail::Node* n : order) {
        if (!n->is_leaf()) n->grad.assign(n->data.size(), 0.0);
    }
    loss.node_ptr()->ensure_grad();
    loss.node_ptr()->grad[0] = 1.0;

    for (detail::Node* n : order) {
        if (n->backprop) n->backprop(*n);
    }
}

} // namespace stattn
