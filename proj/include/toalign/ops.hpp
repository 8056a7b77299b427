#pragma once

#include "toalign/rng.hpp"
#include "toalign/tensor.hpp"

namespace toalign {

enum class Mode { Train, Eval };

// Probabilities coming out of a sigmoid (and entering a log) are clamped to
// [kProbEps, 1 - kProbEps].
inline constexpr double kProbEps = 1e-7;

// ---- linear algebra -------------------------------------------------------

// a: [n x k], b: [k x m] -> [n x m]. grad_a = g·bᵀ, grad_b = aᵀ·g.
TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);

// Elementwise product of same-shape tensors.
TensorPtr hadamard(const TensorPtr& a, const TensorPtr& b);

TensorPtr add(const TensorPtr& a, const TensorPtr& b);
TensorPtr scale(const TensorPtr& a, double c);
TensorPtr sum(const TensorPtr& a);                         // -> scalar
TensorPtr reshape(const TensorPtr& a, std::vector<int> shape);
TensorPtr pick(const TensorPtr& v, int index);             // rank-1 -> scalar

// ---- nn primitives --------------------------------------------------------

// x: [C_in x H x W], kernels: [C_out x C_in x 3 x 3], padding 1 preserves the
// spatial dims. Realized as patch unrolling + matmul so both gradients come
// out of the matmul rule; the unrolling itself backpropagates by scatter-add.
TensorPtr conv2d(const TensorPtr& x, const TensorPtr& kernels);

// x: [C x H x W] + b: [C], bias broadcast over the spatial cells.
TensorPtr add_channel_bias(const TensorPtr& x, const TensorPtr& b);

TensorPtr relu(const TensorPtr& x);

// 2x2 average pooling with stride 2; spatial dims must be even.
TensorPtr avg_pool2(const TensorPtr& x);

// Per-channel spatial mean: [M x H x W] -> [M].
TensorPtr gap(const TensorPtr& feature_map);

// Elementwise logistic, output clamped to [kProbEps, 1 - kProbEps].
TensorPtr sigmoid(const TensorPtr& x);

// Inverted dropout: train mode zeros entries with probability `rate` and
// scales survivors by 1/(1-rate); eval mode is the identity.
TensorPtr dropout(const TensorPtr& x, double rate, Mode mode, Rng& rng);

// Rank-1 softmax with max subtraction.
TensorPtr softmax(const TensorPtr& logits);

// ---- losses ---------------------------------------------------------------

// -log softmax(logits)[label]; backward is softmax - one_hot(label).
TensorPtr softmax_cross_entropy(const TensorPtr& logits, int label);

// p: scalar probability, target in {0, 1}. p is clamped before the logs.
TensorPtr binary_cross_entropy(const TensorPtr& p, int target);

// Gradient reversal: identity forward, backward multiplies upstream by
// -lambda. The handle that turns joint minimization into a minimax game.
TensorPtr grl(const TensorPtr& x, double lambda);

}  // namespace toalign
