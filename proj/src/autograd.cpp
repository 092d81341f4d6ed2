#include "crvos/autograd.hpp"

#include <stdexcept>
#include <unordered_set>

namespace crvos::nn {

namespace {
thread_local std::string g_scope;
}

ScopeGuard::ScopeGuard(std::string scope) : saved_(std::move(g_scope)) {
    g_scope = std::move(scope);
}

ScopeGuard::~ScopeGuard() { g_scope = saved_; }

const std::string& current_scope() { return g_scope; }

Var leaf(Tensor v, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    n->requires_grad = requires_grad;
    n->scope = g_scope;
    return n;
}

Var parameter(Tensor v) {
    auto n = leaf(std::move(v), true);
    n->op = "param";
    return n;
}

Var detach(const Var& x) {
    auto n = leaf(x->value, false);
    n->op = "detach";
    return n;
}

std::vector<Node*> collect_tape(const Var& root) {
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    // iterative post-order DFS
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(root.get(), 0);
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next].get();
            ++next;
            if (seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    return order;  // parents before children
}

void backward(const Var& root) {
    if (root->value.size() != 1)
        throw std::invalid_argument("backward: root must be a scalar");
    auto order = collect_tape(root);
    root->ensure_grad();
    root->grad.fill(0.0);
    root->grad.data()[0] = 1.0;
    // children first
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop && n->requires_grad) {
            n->ensure_grad();
            n->backprop(*n);
        }
    }
}

}  // namespace crvos::nn
