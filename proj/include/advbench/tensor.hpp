#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace advbench::autodiff {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? " x " : "") << s[i];
    os << "]";
    return os.str();
}

/// Probe counters used by the black-box purity tests: black-box attacks must
/// never trigger a backward pass.
struct Counters {
    std::atomic<std::uint64_t> backward_passes{0};
};

inline Counters& counters() {
    static Counters c;
    return c;
}

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// One tape record: the produced value plus the closure that pushes its
/// output gradient into the operands. Leaves have no parents and no backfn.
struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // sized lazily during backward
    bool requires_grad = false;
    bool consumed = false;  // a backward pass already ran from this node
    std::vector<NodePtr> parents;
    std::function<void(Node&)> backfn;
    const char* op = "leaf";

    std::size_t size() const { return data.size(); }
    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }
};

/// Dense 64-bit float tensor. Copying a Tensor copies the handle, not the
/// buffer; detached() makes an independent leaf.
class Tensor {
public:
    Tensor() = default;

    Tensor(Shape shape, std::vector<double> data, bool requires_grad = false) {
        if (numel(shape) != data.size())
            throw std::invalid_argument("tensor: shape " + shape_str(shape) + " does not match buffer of length " +
                                        std::to_string(data.size()));
        node_ = std::make_shared<Node>();
        node_->shape = std::move(shape);
        node_->data = std::move(data);
        node_->requires_grad = requires_grad;
    }

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        return full(std::move(shape), 0.0, requires_grad);
    }

    static Tensor ones(Shape shape, bool requires_grad = false) {
        return full(std::move(shape), 1.0, requires_grad);
    }

    static Tensor full(Shape shape, double value, bool requires_grad = false) {
        std::vector<double> d(numel(shape), value);
        return Tensor(std::move(shape), std::move(d), requires_grad);
    }

    static Tensor scalar(double value, bool requires_grad = false) {
        return Tensor({1}, {value}, requires_grad);
    }

    static Tensor identity(std::size_t n) {
        Tensor t = zeros({n, n});
        for (std::size_t i = 0; i < n; ++i) t.data()[i * n + i] = 1.0;
        return t;
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t size() const { return node_->data.size(); }
    std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
    std::size_t rank() const { return node_->shape.size(); }

    std::vector<double>& data() { return node_->data; }
    const std::vector<double>& data() const { return node_->data; }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool v) { node_->requires_grad = v; }

    bool has_grad() const { return node_->grad.size() == node_->data.size(); }

    /// Gradient buffer; zeros if backward never reached this tensor.
    std::vector<double> grad() const {
        if (!has_grad()) return std::vector<double>(node_->data.size(), 0.0);
        return node_->grad;
    }

    void zero_grad() { node_->grad.clear(); }

    double item() const {
        if (size() != 1)
            throw std::invalid_argument("item: tensor " + shape_str(shape()) + " is not scalar");
        return node_->data[0];
    }

    /// Independent leaf copy of the current values (no tape history).
    Tensor detached(bool requires_grad = false) const {
        return Tensor(node_->shape, node_->data, requires_grad);
    }

    const NodePtr& node() const { return node_; }

private:
    NodePtr node_;
};

/// Make an op result node. `backfn` receives the result node with its grad
/// populated and must accumulate (+=) into the parents' grads.
inline Tensor make_op(const char* op, Shape shape, std::vector<double> data,
                      std::vector<Tensor> inputs, std::function<void(Node&)> backfn) {
    bool needs = false;
    for (const auto& t : inputs) needs = needs || t.requires_grad();
    Tensor out(std::move(shape), std::move(data), needs);
    if (needs) {
        auto& n = *out.node();
        n.op = op;
        n.parents.reserve(inputs.size());
        for (auto& t : inputs) n.parents.push_back(t.node());
        n.backfn = std::move(backfn);
    }
    return out;
}

/// Reverse-mode sweep from a scalar loss. Visits the recorded ops in reverse
/// topological order exactly once and accumulates gradients into every
/// requires_grad ancestor.
inline void backward(const Tensor& loss) {
    if (!loss.defined() || loss.size() != 1)
        throw std::invalid_argument("backward: loss must be scalar, got " +
                                    (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
    Node* root = loss.node().get();
    if (!root->requires_grad || root->parents.empty())
        throw std::invalid_argument("backward: loss has no recorded tape (nothing requires grad)");
    if (root->consumed)
        throw std::logic_error("backward: tape already consumed by a previous backward call");

    // iterative post-order DFS; creation order is not stored, but post-order
    // of the DAG gives a valid topological order
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root, 0);
    seen.insert(root);
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* p = node->parents[idx++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    // leaves accumulate across backward calls; interior grads are per-pass
    for (Node* n : order) {
        if (n->parents.empty())
            n->ensure_grad();
        else
            n->grad.assign(n->data.size(), 0.0);
    }
    root->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backfn) n->backfn(*n);
    }
    root->consumed = true;
    counters().backward_passes.fetch_add(1, std::memory_order_relaxed);
}

}  // namespace advbench::autodiff
