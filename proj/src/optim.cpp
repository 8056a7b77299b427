#include "toalign/optim.hpp"

#include "toalign/errors.hpp"

namespace toalign {

SgdOptimizer::SgdOptimizer(std::vector<TensorPtr> params, double momentum)
    : params_(std::move(params)), momentum_(momentum) {
    if (!(momentum >= 0.0 && momentum < 1.0)) {
        throw ConfigError("momentum must lie in [0, 1), got " + std::to_string(momentum));
    }
    velocity_.reserve(params_.size());
    for (const auto& p : params_) velocity_.emplace_back(p->numel(), 0.0);
}

void SgdOptimizer::step(double lr) {
    if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
        auto& p = *params_[pi];
        if (p.grad.size() != p.numel()) {
            throw ContractError("sgd step: parameter is missing its gradient");
        }
        auto& v = velocity_[pi];
        for (std::size_t i = 0; i < v.size(); ++i) {
            v[i] = momentum_ * v[i] + p.grad[i];
            p.data[i] -= lr * v[i];
        }
    }
}

void SgdOptimizer::zero_grad() {
    zero_grads(params_);
}

}  // namespace toalign
