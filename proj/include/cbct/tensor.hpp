#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_set>
#include <vector>

#include "cbct/errors.hpp"
#include "cbct/rng.hpp"

namespace cbct::ad {

// One record of the computation graph. The graph is the web of `parents`
// links; backward() recovers a topological order by depth-first search and
// sweeps it in reverse, so each node's backward closure runs exactly once.
template <typename T>
struct Node {
    std::vector<int64_t> shape;
    std::vector<T> value;
    std::vector<T> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node<T>>> parents;
    // Propagates this node's grad into parents' grads (additive).
    std::function<void(Node<T>&)> backward_op;

    int64_t size() const {
        int64_t n = 1;
        for (int64_t s : shape) n *= s;
        return n;
    }

    void ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), T(0));
    }
};

// Value-semantics handle onto a graph node. Copies share the node.
template <typename T>
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node<T>> n) : n_(std::move(n)) {}

    static Tensor zeros(const std::vector<int64_t>& shape, bool requires_grad = false) {
        return filled(shape, T(0), requires_grad);
    }

    static Tensor filled(const std::vector<int64_t>& shape, T v, bool requires_grad = false) {
        auto n = std::make_shared<Node<T>>();
        n->shape = shape;
        n->value.assign(count(shape), v);
        n->requires_grad = requires_grad;
        return Tensor(std::move(n));
    }

    static Tensor from_data(const std::vector<int64_t>& shape, std::vector<T> data,
                            bool requires_grad = false) {
        if (int64_t(data.size()) != count(shape))
            throw ShapeError("data length " + std::to_string(data.size()) +
                             " does not match shape product " + std::to_string(count(shape)));
        auto n = std::make_shared<Node<T>>();
        n->shape = shape;
        n->value = std::move(data);
        n->requires_grad = requires_grad;
        return Tensor(std::move(n));
    }

    static Tensor scalar(T v, bool requires_grad = false) { return filled({1}, v, requires_grad); }

    // Gaussian init, deterministic through the supplied generator.
    static Tensor randn(const std::vector<int64_t>& shape, Rng& rng, double stddev,
                        bool requires_grad = false) {
        auto t = zeros(shape, requires_grad);
        for (auto& v : t.data()) v = T(rng.normal(0.0, stddev));
        return t;
    }

    bool defined() const { return n_ != nullptr; }
    const std::vector<int64_t>& shape() const { return n_->shape; }
    int64_t size() const { return n_->size(); }
    std::vector<T>& data() { return n_->value; }
    const std::vector<T>& data() const { return n_->value; }
    std::vector<T>& grad() { return n_->grad; }
    const std::vector<T>& grad() const { return n_->grad; }
    bool requires_grad() const { return n_->requires_grad; }
    void set_requires_grad(bool r) { n_->requires_grad = r; }

    T item() const {
        if (n_->size() != 1) throw ContractError("item() on non-scalar tensor");
        return n_->value[0];
    }

    void zero_grad() { n_->grad.clear(); }

    std::shared_ptr<Node<T>> node() const { return n_; }

    static int64_t count(const std::vector<int64_t>& shape) {
        int64_t n = 1;
        for (int64_t s : shape) {
            if (s <= 0) throw ShapeError("non-positive dimension " + std::to_string(s));
            n *= s;
        }
        return n;
    }

  private:
    std::shared_ptr<Node<T>> n_;
};

// Reverse-mode sweep from a scalar loss. Gradients accumulate additively
// into every reachable requires_grad node; call zero_grad between steps.
template <typename T>
void backward(const Tensor<T>& loss) {
    if (loss.size() != 1) throw ContractError("backward() requires a scalar loss");
    // Iterative post-order DFS for the topological order.
    std::vector<Node<T>*> topo;
    std::unordered_set<Node<T>*> visited;
    struct Frame {
        Node<T>* node;
        size_t next_parent;
    };
    std::vector<Frame> stack;
    Node<T>* root = loss.node().get();
    if (!root->requires_grad) return;
    stack.push_back({root, 0});
    visited.insert(root);
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent < f.node->parents.size()) {
            Node<T>* p = f.node->parents[f.next_parent++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            topo.push_back(f.node);
            stack.pop_back();
        }
    }
    root->ensure_grad();
    root->grad[0] += T(1);
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        Node<T>* n = *it;
        if (n->backward_op && !n->grad.empty()) n->backward_op(*n);
    }
}

template <typename T>
void zero_grad(std::vector<Tensor<T>>& params) {
    for (auto& p : params) p.zero_grad();
}

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace cbct::ad
