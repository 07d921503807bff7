#pragma once

// Reverse-mode autodiff on a flat tape. Nodes are appended in construction
// order and the backward sweep walks ids strictly downward, so for a fixed
// program the accumulation order (and therefore the floating point result)
// is fixed. A tape created with grads disabled runs the exact same forward
// arithmetic but records no closures; planner and eval paths use that mode
// so there is a single implementation of the model math.

#include <cassert>
#include <functional>
#include <vector>

#include "lpln/array.hpp"

namespace lpln::diffmath {

class Tape;

struct Var {
    Tape* tape = nullptr;
    int id = -1;

    bool valid() const { return tape != nullptr && id >= 0; }
};

class Tape {
public:
    explicit Tape(bool grads_enabled = true) : grads_enabled_(grads_enabled) {}

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool grads_enabled() const { return grads_enabled_; }

    Var leaf(Array value, bool requires_grad) {
        return push_node(std::move(value), requires_grad && grads_enabled_, {});
    }

    Var constant(Array value) { return leaf(std::move(value), false); }

    const Array& val(Var v) const {
        assert(v.tape == this);
        return nodes_[v.id].value;
    }

    // Zero-sized array when the node never received gradient.
    const Array& grad(Var v) const {
        assert(v.tape == this);
        return nodes_[v.id].grad;
    }

    // Entry point for ops, including fused custom ops defined outside this
    // module. needs_grad is derived from the parents; the closure runs during
    // the reverse sweep with this node's grad buffer already populated and is
    // handed its own node id so it can read that buffer.
    Var push_node(Array value, bool needs_grad, std::function<void(Tape&, int)> bwd) {
        Node n;
        n.value = std::move(value);
        n.needs_grad = needs_grad && grads_enabled_;
        if (n.needs_grad) n.bwd = std::move(bwd);
        nodes_.push_back(std::move(n));
        return Var{this, static_cast<int>(nodes_.size()) - 1};
    }

    bool needs_grad(int id) const { return nodes_[id].needs_grad; }
    bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }

    const Array& value_of(int id) const { return nodes_[id].value; }

    // Grad buffer of a node, allocated as zeros on first touch.
    Array& grad_buffer(int id) {
        Node& n = nodes_[id];
        if (n.grad.empty()) n.grad = Array(n.value.shape());
        return n.grad;
    }

    // Reverse sweep from a scalar loss. Clears previous gradients first, so
    // a tape supports repeated backward calls (used by gradient checks).
    void backward(Var loss) {
        assert(loss.tape == this);
        assert(nodes_[loss.id].value.size() == 1);
        assert(grads_enabled_);
        for (Node& n : nodes_) n.grad = Array();
        grad_buffer(loss.id)[0] = 1.0;
        for (int i = loss.id; i >= 0; --i) {
            Node& n = nodes_[i];
            if (!n.needs_grad || !n.bwd) continue;
            if (n.grad.empty()) continue;  // not on a path to the loss
            n.bwd(*this, i);
        }
    }

    std::size_t size() const { return nodes_.size(); }

    // Drops every node with id >= n. Vars handed out above the cut become
    // invalid; callers that reuse a tape must copy values out first.
    void truncate(std::size_t n) {
        assert(n <= nodes_.size());
        nodes_.resize(n);
    }

private:
    struct Node {
        Array value;
        Array grad;  // empty until touched by the sweep
        std::function<void(Tape&, int)> bwd;
        bool needs_grad = false;
    };

    std::vector<Node> nodes_;
    bool grads_enabled_;
};

}  // namespace lpln::diffmath
