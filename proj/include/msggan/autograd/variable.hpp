#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "msggan/core/tensor.hpp"

namespace msggan {

template <typename T>
class Variable;

// A tape node. Backward functions receive the upstream gradient and the
// op's forward inputs as Variables and must build their result out of
// differentiable ops; that is what makes second-order gradients (the WGAN-GP
// path) fall out of the same engine. Closures must not capture Variables —
// everything graph-owning lives in `inputs`/`edges` so teardown can be
// iterative.
template <typename T>
struct Node {
    using BackwardFn =
        std::function<Variable<T>(const Variable<T>& grad, const std::vector<Variable<T>>& inputs)>;

    struct Edge {
        std::shared_ptr<Node> parent;
        BackwardFn fn;
    };

    Tensor<T> value;
    bool requires_grad = false;
    Tensor<T> grad;  // leaf accumulation buffer
    std::vector<Variable<T>> inputs;
    std::vector<Edge> edges;

    Node() = default;
    Node(const Node&) = delete;
    Node& operator=(const Node&) = delete;

    ~Node() {
        // Iterative release: recursive shared_ptr destruction overflows the
        // stack on deep training graphs.
        if (edges.empty() && inputs.empty()) return;
        std::vector<std::shared_ptr<Node>> pending;
        drain_into(pending);
        while (!pending.empty()) {
            std::shared_ptr<Node> p = std::move(pending.back());
            pending.pop_back();
            if (p && p.use_count() == 1) p->drain_into(pending);
        }
    }

    void drain_into(std::vector<std::shared_ptr<Node>>& pending) {
        for (auto& e : edges)
            if (e.parent) pending.push_back(std::move(e.parent));
        edges.clear();
        for (auto& v : inputs) {
            auto p = v.take_node();
            if (p) pending.push_back(std::move(p));
        }
        inputs.clear();
    }
};

template <typename T>
class Variable {
public:
    using BackwardFn = typename Node<T>::BackwardFn;

    Variable() = default;

    static Variable constant(Tensor<T> v) {
        Variable out;
        out.n_ = std::make_shared<Node<T>>();
        out.n_->value = std::move(v);
        out.n_->requires_grad = false;
        return out;
    }

    static Variable leaf(Tensor<T> v) {
        Variable out;
        out.n_ = std::make_shared<Node<T>>();
        out.n_->value = std::move(v);
        out.n_->requires_grad = true;
        return out;
    }

    bool defined() const { return static_cast<bool>(n_); }
    const Tensor<T>& value() const { return n_->value; }
    Tensor<T>& value() { return n_->value; }
    const Shape& shape() const { return n_->value.shape(); }
    std::size_t numel() const { return n_->value.numel(); }
    bool requires_grad() const { return n_ && n_->requires_grad; }
    bool is_leaf() const { return n_ && n_->edges.empty(); }

    Variable detach() const { return constant(n_->value); }

    bool has_grad() const { return n_->grad.defined(); }
    const Tensor<T>& grad() const { return n_->grad; }

    void zero_grad() {
        if (n_->grad.defined())
            n_->grad.fill(T{0});
    }

    void accumulate_grad(const Tensor<T>& g) {
        if (!n_->grad.defined()) n_->grad = Tensor<T>::zeros(n_->value.shape());
        T* dst = n_->grad.data();
        const T* src = g.data();
        for (std::size_t i = 0; i < n_->grad.numel(); ++i) dst[i] += src[i];
    }

    Node<T>* node_ptr() const { return n_.get(); }
    const std::shared_ptr<Node<T>>& node() const { return n_; }

    bool same_node(const Variable& o) const { return n_ == o.n_; }

private:
    std::shared_ptr<Node<T>> take_node() { return std::move(n_); }

    std::shared_ptr<Node<T>> n_;

    friend struct Node<T>;

    template <typename U>
    friend Variable<U> make_op(Tensor<U> value, std::vector<Variable<U>> inputs,
                               std::vector<typename Node<U>::BackwardFn> grad_fns);
};

// Builds an op node. grad_fns[i] produces the gradient for inputs[i]; inputs
// that do not require grad get no edge. If nothing requires grad the result
// is a plain constant and the inputs are dropped immediately.
template <typename T>
Variable<T> make_op(Tensor<T> value, std::vector<Variable<T>> inputs,
                    std::vector<typename Node<T>::BackwardFn> grad_fns) {
    bool rg = false;
    for (const auto& in : inputs) rg = rg || in.requires_grad();
    if (!rg) return Variable<T>::constant(std::move(value));

    Variable<T> out;
    out.n_ = std::make_shared<Node<T>>();
    out.n_->value = std::move(value);
    out.n_->requires_grad = true;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        if (inputs[i].requires_grad())
            out.n_->edges.push_back({inputs[i].node(), grad_fns[i]});
    }
    out.n_->inputs = std::move(inputs);
    return out;
}

}  // namespace msggan
