#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "toalign/errors.hpp"
#include "toalign/ops.hpp"
#include "toalign/rng.hpp"
#include "toalign/tensor.hpp"

using namespace toalign;

TEST_CASE("tensor construction validates shape against data length") {
    CHECK_THROWS_AS(tensor({2, 3}, {1.0, 2.0}), DimensionError);
    CHECK_THROWS_AS(tensor({0}, {}), DimensionError);
    auto t = tensor({2, 2}, {1, 2, 3, 4});
    CHECK(t->numel() == 4);
    CHECK_FALSE(t->requires_grad);
}

TEST_CASE("scalar tensors expose item, others refuse") {
    CHECK(scalar(3.5)->item() == 3.5);
    CHECK_THROWS_AS(tensor({2}, {1, 2})->item(), ContractError);
}

TEST_CASE("backward of sum gives all-ones gradient") {
    auto x = tensor({2, 3}, {1, -2, 3, 4, -5, 6}, true);
    backward(sum(x));
    REQUIRE(x->grad.size() == 6);
    for (double g : x->grad) CHECK(g == 1.0);
}

TEST_CASE("backward of half squared norm gives x back") {
    auto x = tensor({4}, {0.5, -1.25, 2.0, 3.5}, true);
    backward(scale(sum(hadamard(x, x)), 0.5));
    for (std::size_t i = 0; i < 4; ++i) CHECK(x->grad[i] == doctest::Approx(x->data[i]).epsilon(1e-15));
}

TEST_CASE("backward accumulates across calls, zero_grads resets") {
    auto x = tensor({3}, {1, 2, 3}, true);
    auto loss = sum(x);
    backward(loss);
    backward(loss);
    for (double g : x->grad) CHECK(g == 2.0);
    zero_grads({x});
    for (double g : x->grad) CHECK(g == 0.0);
    backward(loss);
    for (double g : x->grad) CHECK(g == 1.0);
}

TEST_CASE("summed loss and separate backwards agree") {
    auto x = tensor({5}, {0.3, -0.8, 1.2, 0.05, -2.0}, true);
    auto w = tensor({5}, {1.5, 0.25, -0.75, 2.0, 0.5});

    auto la = sum(hadamard(x, w));
    auto lb = scale(sum(hadamard(x, x)), 0.5);

    backward(add(la, lb));
    const auto combined = x->grad;

    zero_grads({x});
    backward(la);
    backward(lb);
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(x->grad[i] == doctest::Approx(combined[i]).epsilon(1e-12));
    }
}

TEST_CASE("backward rejects non-scalar losses") {
    auto x = tensor({2}, {1, 2}, true);
    CHECK_THROWS_AS(backward(scale(x, 2.0)), ContractError);
}

TEST_CASE("partial differentiates at intermediate nodes without touching grads") {
    auto x = tensor({3}, {1.0, 2.0, 3.0}, true);
    auto mid = scale(x, 2.0);
    auto loss = sum(hadamard(mid, mid));  // d loss / d mid = 2 * mid
    const auto g = partial(loss, mid);
    for (std::size_t i = 0; i < 3; ++i) CHECK(g[i] == doctest::Approx(2.0 * mid->data[i]));
    CHECK(x->grad.empty());
    CHECK(mid->grad.empty());
}

TEST_CASE("partial rejects tensors outside the tape") {
    auto x = tensor({2}, {1, 2}, true);
    auto stranger = tensor({2}, {3, 4}, true);
    auto loss = sum(x);
    CHECK_THROWS_AS(partial(loss, stranger), ContractError);
}

TEST_CASE("detach copies values and drops the graph") {
    auto x = tensor({2}, {1, 2}, true);
    auto y = scale(x, 3.0);
    auto d = detach(y);
    CHECK_FALSE(d->requires_grad);
    CHECK(d->data == y->data);
    CHECK(d->parents.empty());
}

TEST_CASE("nodes with no differentiable parents record no graph") {
    auto a = tensor({2}, {1, 2});
    auto b = tensor({2}, {3, 4});
    auto c = add(a, b);
    CHECK_FALSE(c->requires_grad);
    CHECK(c->parents.empty());
}

TEST_CASE("rng streams are reproducible and split independently") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    Rng root(7);
    Rng s1 = root.split(stream_tag("dropout"));
    Rng s2 = root.split(stream_tag("data"));
    CHECK(s1.next_u64() != s2.next_u64());

    // splitting ignores how much the parent has already drawn
    Rng fresh(7);
    Rng consumed(7);
    for (int i = 0; i < 5; ++i) consumed.uniform();
    CHECK(fresh.split(3).next_u64() == consumed.split(3).next_u64());
}

TEST_CASE("forward and backward keep values finite on random graphs") {
    Rng rng(21);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> vals(12);
        for (auto& v : vals) v = rng.uniform(-2.0, 2.0);
        auto x = tensor({12}, vals, true);
        auto y = relu(scale(add(x, x), 0.5));
        auto loss = sum(hadamard(y, y));
        CHECK(all_finite(*y));
        backward(loss);
        for (double g : x->grad) CHECK(std::isfinite(g));
        zero_grads({x});
    }
}
