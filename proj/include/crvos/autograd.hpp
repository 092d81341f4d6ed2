#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "crvos/tensor.hpp"

namespace crvos::nn {

struct Node;
using Var = std::shared_ptr<Node>;

// One value in the computation tape. Gradients accumulate into `grad`
// (allocated lazily); parameter nodes persist across passes, everything
// else dies with the tape.
struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<Var> parents;
    std::function<void(Node&)> backprop;  // pushes this->grad into parents
    const char* op = "leaf";
    std::string scope;  // module tag set at build time, used by the graph audit

    void ensure_grad() {
        if (!grad.same_shape(value)) grad = Tensor(value.c(), value.h(), value.w());
    }
};

Var leaf(Tensor v, bool requires_grad = false);
Var parameter(Tensor v);

// Nodes created while a ScopeGuard is alive carry its tag, so a finished tape
// can be audited per network module.
class ScopeGuard {
public:
    explicit ScopeGuard(std::string scope);
    ~ScopeGuard();
    ScopeGuard(const ScopeGuard&) = delete;
    ScopeGuard& operator=(const ScopeGuard&) = delete;

private:
    std::string saved_;
};

const std::string& current_scope();

// Detached copy: same value, no history.
Var detach(const Var& x);

// Reverse-mode sweep from a scalar root (shape (1,1,1)).
void backward(const Var& root);

// The set of tape nodes reachable from `root`, in topological order
// (parents before children). Exposed for graph introspection.
std::vector<Node*> collect_tape(const Var& root);

}  // namespace crvos::nn
