#include "toalign/ops.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "toalign/errors.hpp"

namespace toalign {

namespace {

void require_same_shape(const TensorPtr& a, const TensorPtr& b, const char* op) {
    if (a->shape != b->shape) {
        throw DimensionError(std::string(op) + ": shapes differ, " + shape_str(a->shape) + " vs " +
                             shape_str(b->shape));
    }
}

void require_rank(const TensorPtr& t, std::size_t rank, const char* op) {
    if (t->shape.size() != rank) {
        throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                             ", got shape " + shape_str(t->shape));
    }
}

}  // namespace

TensorPtr matmul(const TensorPtr& a, const TensorPtr& b) {
    require_rank(a, 2, "matmul");
    require_rank(b, 2, "matmul");
    const int n = a->shape[0], k = a->shape[1];
    const int k2 = b->shape[0], m = b->shape[1];
    if (k != k2) {
        throw DimensionError("matmul: inner dimensions disagree, " + shape_str(a->shape) + " vs " +
                             shape_str(b->shape));
    }

    std::vector<double> out(static_cast<std::size_t>(n) * m, 0.0);
    for (int i = 0; i < n; ++i) {
        for (int l = 0; l < k; ++l) {
            const double av = a->data[static_cast<std::size_t>(i) * k + l];
            if (av == 0.0) continue;
            const double* brow = &b->data[static_cast<std::size_t>(l) * m];
            double* orow = &out[static_cast<std::size_t>(i) * m];
            for (int j = 0; j < m; ++j) orow[j] += av * brow[j];
        }
    }

    return make_node({n, m}, std::move(out), {a, b},
                     [a, b, n, k, m](const std::vector<double>& g, GradMap& flow) {
                         auto& ga = grad_slot(flow, a);
                         for (int i = 0; i < n; ++i) {
                             const double* grow = &g[static_cast<std::size_t>(i) * m];
                             for (int l = 0; l < k; ++l) {
                                 const double* brow = &b->data[static_cast<std::size_t>(l) * m];
                                 double s = 0.0;
                                 for (int j = 0; j < m; ++j) s += grow[j] * brow[j];
                                 ga[static_cast<std::size_t>(i) * k + l] += s;
                             }
                         }
                         auto& gb = grad_slot(flow, b);
                         for (int i = 0; i < n; ++i) {
                             const double* grow = &g[static_cast<std::size_t>(i) * m];
                             for (int l = 0; l < k; ++l) {
                                 const double av = a->data[static_cast<std::size_t>(i) * k + l];
                                 if (av == 0.0) continue;
                                 double* gbrow = &gb[static_cast<std::size_t>(l) * m];
                                 for (int j = 0; j < m; ++j) gbrow[j] += av * grow[j];
                             }
                         }
                     });
}

TensorPtr hadamard(const TensorPtr& a, const TensorPtr& b) {
    require_same_shape(a, b, "hadamard");
    std::vector<double> out(a->numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->data[i] * b->data[i];
    return make_node(a->shape, std::move(out), {a, b},
                     [a, b](const std::vector<double>& g, GradMap& flow) {
                         auto& ga = grad_slot(flow, a);
                         auto& gb = grad_slot(flow, b);
                         for (std::size_t i = 0; i < g.size(); ++i) {
                             ga[i] += g[i] * b->data[i];
                             gb[i] += g[i] * a->data[i];
                         }
                     });
}

TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
    require_same_shape(a, b, "add");
    std::vector<double> out(a->numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->data[i] + b->data[i];
    return make_node(a->shape, std::move(out), {a, b},
                     [a, b](const std::vector<double>& g, GradMap& flow) {
                         auto& ga = grad_slot(flow, a);
                         auto& gb = grad_slot(flow, b);
                         for (std::size_t i = 0; i < g.size(); ++i) {
                             ga[i] += g[i];
                             gb[i] += g[i];
                         }
                     });
}

TensorPtr scale(const TensorPtr& a, double c) {
    std::vector<double> out(a->numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * a->data[i];
    return make_node(a->shape, std::move(out), {a},
                     [a, c](const std::vector<double>& g, GradMap& flow) {
                         auto& ga = grad_slot(flow, a);
                         for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
                     });
}

TensorPtr sum(const TensorPtr& a) {
    double s = 0.0;
    for (double v : a->data) s += v;
    return make_node({}, {s}, {a}, [a](const std::vector<double>& g, GradMap& flow) {
        auto& ga = grad_slot(flow, a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0];
    });
}

TensorPtr reshape(const TensorPtr& a, std::vector<int> shape) {
    validate_shape(shape);
    if (shape_numel(shape) != a->numel()) {
        throw DimensionError("reshape: cannot view " + shape_str(a->shape) + " as " +
                             shape_str(shape));
    }
    return make_node(std::move(shape), a->data, {a},
                     [a](const std::vector<double>& g, GradMap& flow) {
                         auto& ga = grad_slot(flow, a);
                         for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                     });
}

TensorPtr pick(const TensorPtr& v, int index) {
    require_rank(v, 1, "pick");
    if (index < 0 || index >= v->shape[0]) {
        throw IndexError("pick: index " + std::to_string(index) + " out of range [0, " +
                         std::to_string(v->shape[0]) + ")");
    }
    return make_node({}, {v->data[static_cast<std::size_t>(index)]}, {v},
                     [v, index](const std::vector<double>& g, GradMap& flow) {
                         grad_slot(flow, v)[static_cast<std::size_t>(index)] += g[0];
                     });
}

// ---- conv2d via patch unrolling --------------------------------------------

namespace {

// x: [C x H x W] -> columns [(C*9) x (H*W)], zero pad 1, 3x3 patches.
TensorPtr im2col3x3(const TensorPtr& x) {
    const int c = x->shape[0], h = x->shape[1], w = x->shape[2];
    const int rows = c * 9, cols = h * w;
    std::vector<double> out(static_cast<std::size_t>(rows) * cols, 0.0);
    for (int ci = 0; ci < c; ++ci) {
        for (int kh = 0; kh < 3; ++kh) {
            for (int kw = 0; kw < 3; ++kw) {
                const int r = (ci * 3 + kh) * 3 + kw;
                double* orow = &out[static_cast<std::size_t>(r) * cols];
                for (int i = 0; i < h; ++i) {
                    const int si = i + kh - 1;
                    if (si < 0 || si >= h) continue;
                    const double* xrow = &x->data[(static_cast<std::size_t>(ci) * h + si) * w];
                    for (int j = 0; j < w; ++j) {
                        const int sj = j + kw - 1;
                        if (sj < 0 || sj >= w) continue;
                        orow[static_cast<std::size_t>(i) * w + j] = xrow[sj];
                    }
                }
            }
        }
    }
    return make_node({rows, cols}, std::move(out), {x},
                     [x, c, h, w, cols](const std::vector<double>& g, GradMap& flow) {
                         auto& gx = grad_slot(flow, x);
                         for (int ci = 0; ci < c; ++ci) {
                             for (int kh = 0; kh < 3; ++kh) {
                                 for (int kw = 0; kw < 3; ++kw) {
                                     const int r = (ci * 3 + kh) * 3 + kw;
                                     const double* grow = &g[static_cast<std::size_t>(r) * cols];
                                     for (int i = 0; i < h; ++i) {
                                         const int si = i + kh - 1;
                                         if (si < 0 || si >= h) continue;
                                         double* gxrow =
                                             &gx[(static_cast<std::size_t>(ci) * h + si) * w];
                                         for (int j = 0; j < w; ++j) {
                                             const int sj = j + kw - 1;
                                             if (sj < 0 || sj >= w) continue;
                                             gxrow[sj] += grow[static_cast<std::size_t>(i) * w + j];
                                         }
                                     }
                                 }
                             }
                         }
                     });
}

}  // namespace

TensorPtr conv2d(const TensorPtr& x, const TensorPtr& kernels) {
    require_rank(x, 3, "conv2d");
    require_rank(kernels, 4, "conv2d");
    if (kernels->shape[2] != 3 || kernels->shape[3] != 3) {
        throw DimensionError("conv2d: kernels must be 3x3, got shape " + shape_str(kernels->shape));
    }
    if (kernels->shape[1] != x->shape[0]) {
        throw DimensionError("conv2d: input channels " + shape_str(x->shape) +
                             " do not match kernels " + shape_str(kernels->shape));
    }
    const int c_out = kernels->shape[0], c_in = x->shape[0];
    const int h = x->shape[1], w = x->shape[2];
    auto cols = im2col3x3(x);
    auto kmat = reshape(kernels, {c_out, c_in * 9});
    auto prod = matmul(kmat, cols);
    return reshape(prod, {c_out, h, w});
}

TensorPtr add_channel_bias(const TensorPtr& x, const TensorPtr& b) {
    require_rank(x, 3, "add_channel_bias");
    require_rank(b, 1, "add_channel_bias");
    if (b->shape[0] != x->shape[0]) {
        throw DimensionError("add_channel_bias: " + shape_str(x->shape) + " vs " +
                             shape_str(b->shape));
    }
    const int c = x->shape[0];
    const std::size_t plane = static_cast<std::size_t>(x->shape[1]) * x->shape[2];
    std::vector<double> out(x->numel());
    for (int ci = 0; ci < c; ++ci) {
        const double bv = b->data[static_cast<std::size_t>(ci)];
        for (std::size_t p = 0; p < plane; ++p) {
            out[ci * plane + p] = x->data[ci * plane + p] + bv;
        }
    }
    return make_node(x->shape, std::move(out), {x, b},
                     [x, b, c, plane](const std::vector<double>& g, GradMap& flow) {
                         auto& gx = grad_slot(flow, x);
                         auto& gb = grad_slot(flow, b);
                         for (int ci = 0; ci < c; ++ci) {
                             double s = 0.0;
                             for (std::size_t p = 0; p < plane; ++p) {
                                 gx[ci * plane + p] += g[ci * plane + p];
                                 s += g[ci * plane + p];
                             }
                             gb[static_cast<std::size_t>(ci)] += s;
                         }
                     });
}

TensorPtr relu(const TensorPtr& x) {
    std::vector<double> out(x->numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x->data[i] > 0.0 ? x->data[i] : 0.0;
    return make_node(x->shape, std::move(out), {x},
                     [x](const std::vector<double>& g, GradMap& flow) {
                         auto& gx = grad_slot(flow, x);
                         // subgradient at 0 is taken as 0
                         for (std::size_t i = 0; i < g.size(); ++i) {
                             if (x->data[i] > 0.0) gx[i] += g[i];
                         }
                     });
}

TensorPtr avg_pool2(const TensorPtr& x) {
    require_rank(x, 3, "avg_pool2");
    const int c = x->shape[0], h = x->shape[1], w = x->shape[2];
    if (h % 2 != 0 || w % 2 != 0) {
        throw DimensionError("avg_pool2: spatial dims must be even, got " + shape_str(x->shape));
    }
    const int ho = h / 2, wo = w / 2;
    std::vector<double> out(static_cast<std::size_t>(c) * ho * wo);
    for (int ci = 0; ci < c; ++ci) {
        for (int i = 0; i < ho; ++i) {
            for (int j = 0; j < wo; ++j) {
                const std::size_t base = (static_cast<std::size_t>(ci) * h + 2 * i) * w + 2 * j;
                const double s = x->data[base] + x->data[base + 1] + x->data[base + w] +
                                 x->data[base + w + 1];
                out[(static_cast<std::size_t>(ci) * ho + i) * wo + j] = s / 4.0;
            }
        }
    }
    return make_node({c, ho, wo}, std::move(out), {x},
                     [x, c, h, w, ho, wo](const std::vector<double>& g, GradMap& flow) {
                         auto& gx = grad_slot(flow, x);
                         for (int ci = 0; ci < c; ++ci) {
                             for (int i = 0; i < ho; ++i) {
                                 for (int j = 0; j < wo; ++j) {
                                     const double gv =
                                         g[(static_cast<std::size_t>(ci) * ho + i) * wo + j] / 4.0;
                                     const std::size_t base =
                                         (static_cast<std::size_t>(ci) * h + 2 * i) * w + 2 * j;
                                     gx[base] += gv;
                                     gx[base + 1] += gv;
                                     gx[base + w] += gv;
                                     gx[base + w + 1] += gv;
                                 }
                             }
                         }
                     });
}

TensorPtr gap(const TensorPtr& feature_map) {
    require_rank(feature_map, 3, "gap");
    const int m = feature_map->shape[0];
    const int h = feature_map->shape[1], w = feature_map->shape[2];
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    std::vector<double> out(static_cast<std::size_t>(m));
    for (int ci = 0; ci < m; ++ci) {
        double s = 0.0;
        for (std::size_t p = 0; p < plane; ++p) s += feature_map->data[ci * plane + p];
        out[static_cast<std::size_t>(ci)] = s / static_cast<double>(plane);
    }
    return make_node({m}, std::move(out), {feature_map},
                     [feature_map, m, plane](const std::vector<double>& g, GradMap& flow) {
                         auto& gf = grad_slot(flow, feature_map);
                         for (int ci = 0; ci < m; ++ci) {
                             const double gv = g[static_cast<std::size_t>(ci)] /
                                               static_cast<double>(plane);
                             for (std::size_t p = 0; p < plane; ++p) gf[ci * plane + p] += gv;
                         }
                     });
}

TensorPtr sigmoid(const TensorPtr& x) {
    std::vector<double> out(x->numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double s = 1.0 / (1.0 + std::exp(-x->data[i]));
        out[i] = std::clamp(s, kProbEps, 1.0 - kProbEps);
    }
    auto node = make_node(x->shape, std::move(out), {x}, nullptr);
    if (node->requires_grad) {
        // capture the clamped outputs; derivative uses them so it stays
        // nonzero even where the raw sigmoid saturates to 0/1 in fp
        std::vector<double> saved = node->data;
        node->backprop = [x, saved = std::move(saved)](const std::vector<double>& g, GradMap& flow) {
            auto& gx = grad_slot(flow, x);
            for (std::size_t i = 0; i < g.size(); ++i) {
                gx[i] += g[i] * saved[i] * (1.0 - saved[i]);
            }
        };
    }
    return node;
}

TensorPtr dropout(const TensorPtr& x, double rate, Mode mode, Rng& rng) {
    if (!(rate >= 0.0 && rate < 1.0)) {
        throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
    }
    if (mode == Mode::Eval || rate == 0.0) {
        return make_node(x->shape, x->data, {x},
                         [x](const std::vector<double>& g, GradMap& flow) {
                             auto& gx = grad_slot(flow, x);
                             for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                         });
    }
    const double keep = 1.0 - rate;
    const double inv_keep = 1.0 / keep;
    std::vector<double> mask(x->numel());
    std::vector<double> out(x->numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        mask[i] = rng.uniform() < keep ? inv_keep : 0.0;
        out[i] = x->data[i] * mask[i];
    }
    return make_node(x->shape, std::move(out), {x},
                     [x, mask = std::move(mask)](const std::vector<double>& g, GradMap& flow) {
                         auto& gx = grad_slot(flow, x);
                         for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
                     });
}

TensorPtr softmax(const TensorPtr& logits) {
    require_rank(logits, 1, "softmax");
    const std::size_t n = logits->numel();
    double mx = logits->data[0];
    for (double v : logits->data) mx = std::max(mx, v);
    std::vector<double> out(n);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = std::exp(logits->data[i] - mx);
        z += out[i];
    }
    for (std::size_t i = 0; i < n; ++i) out[i] /= z;
    auto node = make_node(logits->shape, std::move(out), {logits}, nullptr);
    if (node->requires_grad) {
        std::vector<double> probs = node->data;
        node->backprop = [logits, probs = std::move(probs)](const std::vector<double>& g,
                                                            GradMap& flow) {
            auto& gl = grad_slot(flow, logits);
            double dot = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * probs[i];
            for (std::size_t i = 0; i < g.size(); ++i) gl[i] += probs[i] * (g[i] - dot);
        };
    }
    return node;
}

TensorPtr softmax_cross_entropy(const TensorPtr& logits, int label) {
    require_rank(logits, 1, "softmax_cross_entropy");
    const int k = logits->shape[0];
    if (label < 0 || label >= k) {
        throw IndexError("softmax_cross_entropy: label " + std::to_string(label) +
                         " out of range [0, " + std::to_string(k) + ")");
    }
    double mx = logits->data[0];
    for (double v : logits->data) mx = std::max(mx, v);
    double z = 0.0;
    for (double v : logits->data) z += std::exp(v - mx);
    const double log_z = mx + std::log(z);
    const double loss = log_z - logits->data[static_cast<std::size_t>(label)];

    std::vector<double> probs(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) probs[static_cast<std::size_t>(i)] = std::exp(logits->data[i] - log_z);

    return make_node({}, {loss}, {logits},
                     [logits, label, probs = std::move(probs)](const std::vector<double>& g,
                                                               GradMap& flow) {
                         auto& gl = grad_slot(flow, logits);
                         for (std::size_t i = 0; i < gl.size(); ++i) {
                             const double onehot = (static_cast<int>(i) == label) ? 1.0 : 0.0;
                             gl[i] += g[0] * (probs[i] - onehot);
                         }
                     });
}

TensorPtr binary_cross_entropy(const TensorPtr& p, int target) {
    if (p->numel() != 1) {
        throw DimensionError("binary_cross_entropy expects a scalar probability, got shape " +
                             shape_str(p->shape));
    }
    if (target != 0 && target != 1) {
        throw ContractError("binary_cross_entropy target must be 0 or 1");
    }
    const double pc = std::clamp(p->data[0], kProbEps, 1.0 - kProbEps);
    const double loss = target == 1 ? -std::log(pc) : -std::log(1.0 - pc);
    return make_node({}, {loss}, {p},
                     [p, pc, target](const std::vector<double>& g, GradMap& flow) {
                         const double d = target == 1 ? -1.0 / pc : 1.0 / (1.0 - pc);
                         grad_slot(flow, p)[0] += g[0] * d;
                     });
}

TensorPtr grl(const TensorPtr& x, double lambda) {
    if (lambda < 0.0) throw ContractError("grl lambda must be non-negative");
    return make_node(x->shape, x->data, {x},
                     [x, lambda](const std::vector<double>& g, GradMap& flow) {
                         auto& gx = grad_slot(flow, x);
                         for (std::size_t i = 0; i < g.size(); ++i) gx[i] += -lambda * g[i];
                     });
}

}  // namespace toalign
