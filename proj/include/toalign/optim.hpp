#pragma once

#include <vector>

#include "toalign/tensor.hpp"

namespace toalign {

// SGD with classical momentum: v <- momentum*v + grad; param <- param - lr*v.
// Velocity state lives here and persists across steps.
class SgdOptimizer {
public:
    SgdOptimizer(std::vector<TensorPtr> params, double momentum);

    void step(double lr);
    void zero_grad();

    const std::vector<TensorPtr>& params() const { return params_; }

private:
    std::vector<TensorPtr> params_;
    std::vector<std::vector<double>> velocity_;
    double momentum_;
};

}  // namespace toalign
