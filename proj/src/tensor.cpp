#include "toalign/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>
#include <utility>

#include "toalign/errors.hpp"

namespace toalign {

std::size_t shape_numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return n;
}

void validate_shape(const std::vector<int>& shape) {
    for (int d : shape) {
        if (d <= 0) throw DimensionError("non-positive dimension in shape " + shape_str(shape));
    }
}

double Tensor::item() const {
    if (numel() != 1) throw ContractError("item() requires a scalar, got shape " + shape_str(shape));
    return data[0];
}

void Tensor::zero_grad() {
    grad.assign(numel(), 0.0);
}

void Tensor::accumulate_grad(const std::vector<double>& g) {
    if (g.size() != numel()) throw ContractError("gradient size mismatch");
    if (grad.size() != numel()) grad.assign(numel(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
}

TensorPtr tensor(std::vector<int> shape, std::vector<double> data, bool requires_grad) {
    validate_shape(shape);
    if (data.size() != shape_numel(shape)) {
        throw DimensionError("data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
    }
    auto t = std::make_shared<Tensor>();
    t->shape = std::move(shape);
    t->data = std::move(data);
    t->requires_grad = requires_grad;
    return t;
}

TensorPtr scalar(double value) { return tensor({}, {value}); }

TensorPtr zeros(std::vector<int> shape, bool requires_grad) {
    const std::size_t n = shape_numel(shape);
    return tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

TensorPtr full(std::vector<int> shape, double value, bool requires_grad) {
    const std::size_t n = shape_numel(shape);
    return tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

TensorPtr detach(const TensorPtr& t) {
    return tensor(t->shape, t->data, false);
}

TensorPtr make_node(std::vector<int> shape, std::vector<double> data,
                    std::vector<TensorPtr> parents,
                    std::function<void(const std::vector<double>&, GradMap&)> backprop) {
    bool any_grad = false;
    for (const auto& p : parents) {
        if (p->requires_grad) {
            any_grad = true;
            break;
        }
    }
    auto out = tensor(std::move(shape), std::move(data), any_grad);
    if (any_grad) {
        out->parents = std::move(parents);
        out->backprop = std::move(backprop);
    }
    return out;
}

std::vector<double>& grad_slot(GradMap& flow, const TensorPtr& t) {
    auto [it, inserted] = flow.try_emplace(t.get());
    if (inserted) it->second.assign(t->numel(), 0.0);
    return it->second;
}

namespace {

// Iterative post-order DFS over parents: inputs end up before consumers.
std::vector<Tensor*> topo_order(const TensorPtr& root) {
    std::vector<Tensor*> order;
    std::unordered_set<const Tensor*> visited;
    std::vector<std::pair<Tensor*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Tensor* parent = node->parents[next].get();
            ++next;
            if (visited.insert(parent).second) stack.emplace_back(parent, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    return order;
}

void run_flow(const TensorPtr& loss, const std::vector<Tensor*>& order, GradMap& flow) {
    flow[loss.get()] = std::vector<double>{1.0};
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Tensor* node = *it;
        if (!node->backprop) continue;
        auto fit = flow.find(node);
        if (fit == flow.end()) continue;
        node->backprop(fit->second, flow);
    }
}

}  // namespace

void backward(const TensorPtr& loss) {
    if (!loss) throw ContractError("backward on null tensor");
    if (loss->numel() != 1) {
        throw ContractError("backward requires a scalar loss, got shape " + shape_str(loss->shape));
    }
    const auto order = topo_order(loss);
    GradMap flow;
    run_flow(loss, order, flow);
    for (Tensor* node : order) {
        if (!node->requires_grad) continue;
        auto it = flow.find(node);
        if (it != flow.end()) node->accumulate_grad(it->second);
    }
}

std::vector<double> partial(const TensorPtr& loss, const TensorPtr& wrt) {
    if (!loss || !wrt) throw ContractError("partial on null tensor");
    if (loss->numel() != 1) {
        throw ContractError("partial requires a scalar loss, got shape " + shape_str(loss->shape));
    }
    const auto order = topo_order(loss);
    GradMap flow;
    run_flow(loss, order, flow);
    auto it = flow.find(wrt.get());
    if (it == flow.end()) {
        throw ContractError("requested tensor is not an ancestor of the loss on a live tape");
    }
    return std::move(it->second);
}

void zero_grads(const std::vector<TensorPtr>& params) {
    for (const auto& p : params) p->zero_grad();
}

bool all_finite(const Tensor& t) {
    return std::all_of(t.data.begin(), t.data.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace toalign
