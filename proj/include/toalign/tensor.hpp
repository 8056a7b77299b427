#pragma once

#include <functional>
#include <memory>
#include <unordered_map>
#include <vector>

namespace toalign {

struct Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

// Transient per-backward-pass gradient flow, keyed by graph node.
using GradMap = std::unordered_map<const Tensor*, std::vector<double>>;

// Dense row-major value array participating in a reverse-mode tape. Nodes
// produced by operations keep their inputs alive through `parents` and know
// how to push upstream gradient into them via `backprop`. Leaf tensors
// (parameters, inputs) have no parents.
struct Tensor : std::enable_shared_from_this<Tensor> {
    std::vector<int> shape;      // positive dims; empty shape = scalar
    std::vector<double> data;    // row-major, length == product(shape)
    bool requires_grad = false;
    std::vector<double> grad;    // persistent accumulator; empty until first use

    std::vector<TensorPtr> parents;
    std::function<void(const std::vector<double>& upstream, GradMap& flow)> backprop;

    std::size_t numel() const { return data.size(); }
    bool is_scalar() const { return shape.empty(); }

    double item() const;         // scalar tensors only
    void zero_grad();            // allocates the accumulator if missing
    void accumulate_grad(const std::vector<double>& g);
};

std::size_t shape_numel(const std::vector<int>& shape);
void validate_shape(const std::vector<int>& shape);

TensorPtr tensor(std::vector<int> shape, std::vector<double> data, bool requires_grad = false);
TensorPtr scalar(double value);
TensorPtr zeros(std::vector<int> shape, bool requires_grad = false);
TensorPtr full(std::vector<int> shape, double value, bool requires_grad = false);

// Value copy cut loose from any tape; never requires grad.
TensorPtr detach(const TensorPtr& t);

// Builds an op output. If no parent requires grad the node is a plain value
// tensor (no graph is recorded).
TensorPtr make_node(std::vector<int> shape, std::vector<double> data,
                    std::vector<TensorPtr> parents,
                    std::function<void(const std::vector<double>&, GradMap&)> backprop);

// Returns the flow slot for `t`, allocated to zeros on first touch. Backprop
// implementations must touch every differentiable parent so that slot
// presence means "reachable from the loss".
std::vector<double>& grad_slot(GradMap& flow, const TensorPtr& t);

// Reverse pass from a scalar loss. Visits each reachable node exactly once in
// reverse topological order, then adds the flowed gradient into the
// persistent .grad of every requires_grad tensor. Repeated calls without
// zero_grads therefore accumulate.
void backward(const TensorPtr& loss);

// Gradient of `loss` w.r.t. `wrt` without touching any persistent .grad.
// Throws ContractError if `wrt` is not an ancestor of `loss` on a live tape.
std::vector<double> partial(const TensorPtr& loss, const TensorPtr& wrt);

void zero_grads(const std::vector<TensorPtr>& params);

bool all_finite(const Tensor& t);

}  // namespace toalign
