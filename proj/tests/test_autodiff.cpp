#include <cmath>
#include <vector>

#include "doctest.h"
#include "ssql/tensor.hpp"

using namespace ssql;

// Every op is checked against central differences through a scalar head.
// Shapes stay tiny so each case is a few hundred forwards.

static Tensor head(const Tensor& t) { return mean(mul(t, t)); }

TEST_CASE("gradcheck elementwise ops") {
    Pcg32 rng(21u, 1u);
    auto a = Tensor::uniform({3, 4}, -2.0f, 2.0f, rng, true);
    auto b = Tensor::uniform({3, 4}, -2.0f, 2.0f, rng, true);

    auto r1 = gradcheck([](std::vector<Tensor>& in) { return head(add(in[0], in[1])); }, {a, b});
    CHECK_MESSAGE(r1.pass, r1.worst);
    auto r2 = gradcheck([](std::vector<Tensor>& in) { return head(sub(in[0], in[1])); }, {a, b});
    CHECK_MESSAGE(r2.pass, r2.worst);
    auto r3 = gradcheck([](std::vector<Tensor>& in) { return head(mul(in[0], in[1])); }, {a, b});
    CHECK_MESSAGE(r3.pass, r3.worst);
    auto r4 = gradcheck(
        [](std::vector<Tensor>& in) { return head(add_scalar(mul_scalar(in[0], 1.7f), 0.3f)); },
        {a});
    CHECK_MESSAGE(r4.pass, r4.worst);
    auto r5 = gradcheck([](std::vector<Tensor>& in) { return head(neg(in[0])); }, {a});
    CHECK_MESSAGE(r5.pass, r5.worst);
}

TEST_CASE("gradcheck relu away from the kink") {
    Pcg32 rng(22u, 1u);
    // keep inputs off zero so the finite difference never straddles the kink
    std::vector<float> vals(12);
    for (auto& v : vals) {
        float u = rng.uniform(-2.0f, 2.0f);
        v = (u >= 0.0f ? u + 0.2f : u - 0.2f);
    }
    auto a = Tensor::from_data({3, 4}, vals, true);
    auto r = gradcheck([](std::vector<Tensor>& in) { return head(relu(in[0])); }, {a}, 1e-2);
    CHECK_MESSAGE(r.pass, r.worst);
}

TEST_CASE("gradcheck matmul family") {
    Pcg32 rng(23u, 1u);
    auto a = Tensor::uniform({3, 4}, -1.0f, 1.0f, rng, true);
    auto b = Tensor::uniform({4, 2}, -1.0f, 1.0f, rng, true);
    auto r1 = gradcheck([](std::vector<Tensor>& in) { return head(matmul(in[0], in[1])); }, {a, b});
    CHECK_MESSAGE(r1.pass, r1.worst);

    auto c = Tensor::uniform({5, 4}, -1.0f, 1.0f, rng, true);
    auto r2 =
        gradcheck([](std::vector<Tensor>& in) { return head(matmul_nt(in[0], in[1])); }, {a, c});
    CHECK_MESSAGE(r2.pass, r2.worst);

    auto x = Tensor::uniform({3, 4}, -1.0f, 1.0f, rng, true);
    auto w = Tensor::uniform({5, 4}, -1.0f, 1.0f, rng, true);
    auto bias = Tensor::uniform({5}, -0.5f, 0.5f, rng, true);
    auto r3 = gradcheck(
        [](std::vector<Tensor>& in) { return head(linear(in[0], in[1], in[2])); }, {x, w, bias});
    CHECK_MESSAGE(r3.pass, r3.worst);
}

TEST_CASE("gradcheck conv2d and pooling") {
    Pcg32 rng(24u, 1u);
    auto x = Tensor::uniform({2, 2, 5, 5}, -1.0f, 1.0f, rng, true);
    auto w = Tensor::uniform({3, 2, 3, 3}, -1.0f, 1.0f, rng, true);
    auto b = Tensor::uniform({3}, -0.5f, 0.5f, rng, true);
    auto r1 = gradcheck(
        [](std::vector<Tensor>& in) { return head(conv2d(in[0], in[1], in[2], 1, 1)); },
        {x, w, b});
    CHECK_MESSAGE(r1.pass, r1.worst);

    auto r2 = gradcheck(
        [](std::vector<Tensor>& in) { return head(conv2d(in[0], in[1], Tensor(), 2, 0)); },
        {x, w});
    CHECK_MESSAGE(r2.pass, r2.worst);

    auto p = Tensor::uniform({2, 3, 4, 4}, -1.0f, 1.0f, rng, true);
    auto r3 = gradcheck([](std::vector<Tensor>& in) { return head(avgpool2d(in[0], 2, 2)); }, {p});
    CHECK_MESSAGE(r3.pass, r3.worst);
    auto r4 = gradcheck([](std::vector<Tensor>& in) { return head(global_avgpool(in[0])); }, {p});
    CHECK_MESSAGE(r4.pass, r4.worst);
}

TEST_CASE("gradcheck shape ops") {
    Pcg32 rng(25u, 1u);
    auto a = Tensor::uniform({2, 6}, -1.0f, 1.0f, rng, true);
    auto r1 = gradcheck(
        [](std::vector<Tensor>& in) { return head(reshape(in[0], {3, 4})); }, {a});
    CHECK_MESSAGE(r1.pass, r1.worst);

    auto b = Tensor::uniform({3, 6}, -1.0f, 1.0f, rng, true);
    auto r2 = gradcheck(
        [](std::vector<Tensor>& in) { return head(concat_rows(in[0], in[1])); }, {a, b});
    CHECK_MESSAGE(r2.pass, r2.worst);
}

TEST_CASE("gradcheck reductions and row ops") {
    Pcg32 rng(26u, 1u);
    auto a = Tensor::uniform({4, 3}, 0.5f, 2.0f, rng, true);
    auto b = Tensor::uniform({4, 3}, -2.0f, -0.5f, rng, true);

    auto r1 = gradcheck([](std::vector<Tensor>& in) { return sum(mul(in[0], in[0])); }, {a});
    CHECK_MESSAGE(r1.pass, r1.worst);
    auto r2 = gradcheck([](std::vector<Tensor>& in) { return mean(mul(in[0], in[0])); }, {a});
    CHECK_MESSAGE(r2.pass, r2.worst);
    auto r3 = gradcheck([](std::vector<Tensor>& in) { return head(row_dot(in[0], in[1])); }, {a, b});
    CHECK_MESSAGE(r3.pass, r3.worst);
    // rows have norm >= ~1 so the normalize derivative is well conditioned
    auto r4 = gradcheck([](std::vector<Tensor>& in) { return head(l2_normalize(in[0])); }, {a});
    CHECK_MESSAGE(r4.pass, r4.worst);
}

TEST_CASE("gradcheck batchnorm in both modes") {
    Pcg32 rng(27u, 1u);
    auto x = Tensor::uniform({6, 3}, -2.0f, 2.0f, rng, true);
    auto gamma = Tensor::uniform({3}, 0.5f, 1.5f, rng, true);
    auto beta = Tensor::uniform({3}, -0.5f, 0.5f, rng, true);

    auto r1 = gradcheck(
        [](std::vector<Tensor>& in) {
            auto rm = Tensor::zeros({3});
            auto rv = Tensor::ones({3});
            return head(batchnorm(in[0], in[1], in[2], rm, rv, true, false));
        },
        {x, gamma, beta}, 1e-2);
    CHECK_MESSAGE(r1.pass, r1.worst);

    auto r2 = gradcheck(
        [](std::vector<Tensor>& in) {
            auto rm = Tensor::from_data({3}, {0.1f, -0.2f, 0.3f});
            auto rv = Tensor::from_data({3}, {1.2f, 0.8f, 1.5f});
            return head(batchnorm(in[0], in[1], in[2], rm, rv, false, false));
        },
        {x, gamma, beta});
    CHECK_MESSAGE(r2.pass, r2.worst);

    auto x4 = Tensor::uniform({3, 2, 3, 3}, -2.0f, 2.0f, rng, true);
    auto g2 = Tensor::uniform({2}, 0.5f, 1.5f, rng, true);
    auto b2 = Tensor::uniform({2}, -0.5f, 0.5f, rng, true);
    auto r3 = gradcheck(
        [](std::vector<Tensor>& in) {
            auto rm = Tensor::zeros({2});
            auto rv = Tensor::ones({2});
            return head(batchnorm(in[0], in[1], in[2], rm, rv, true, false));
        },
        {x4, g2, b2}, 1e-2);
    CHECK_MESSAGE(r3.pass, r3.worst);
}

TEST_CASE("gradcheck softmax cross entropy") {
    Pcg32 rng(28u, 1u);
    auto logits = Tensor::uniform({5, 4}, -2.0f, 2.0f, rng, true);
    std::vector<int> labels = {0, 3, 1, 2, 2};
    auto r = gradcheck(
        [&labels](std::vector<Tensor>& in) { return softmax_cross_entropy(in[0], labels); },
        {logits});
    CHECK_MESSAGE(r.pass, r.worst);
}

TEST_CASE("stop_gradient blocks the reverse pass") {
    auto a = Tensor::from_data({3}, {1, 2, 3}, true);
    auto b = Tensor::from_data({3}, {4, 5, 6}, true);
    auto loss = sum(mul(a, stop_gradient(b)));
    loss.backward();
    CHECK(a.grad()[0] == 4.0f);
    CHECK_FALSE(b.has_grad());
}

TEST_CASE("composite graph matches finite differences") {
    Pcg32 rng(29u, 1u);
    auto x = Tensor::uniform({4, 6}, -1.0f, 1.0f, rng, true);
    auto w = Tensor::uniform({3, 6}, -1.0f, 1.0f, rng, true);
    auto r = gradcheck(
        [](std::vector<Tensor>& in) {
            auto h = relu(linear(in[0], in[1], Tensor()));
            auto n = l2_normalize(h);
            return mul_scalar(mean(row_dot(n, n)), 0.5f);
        },
        {x, w}, 1e-2);
    CHECK_MESSAGE(r.pass, r.worst);
}

TEST_CASE("branch reuse accumulates both paths") {
    auto a = Tensor::from_data({1}, {3.0f}, true);
    auto y = add(mul(a, a), mul_scalar(a, 2.0f));  // a^2 + 2a, dy/da = 2a + 2 = 8
    sum(y).backward();
    CHECK(a.grad()[0] == doctest::Approx(8.0f));
}
