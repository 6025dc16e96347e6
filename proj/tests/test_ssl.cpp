#include <cmath>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "ssql/ssl.hpp"

using namespace ssql;
using namespace ssql::ssl;

TEST_CASE("neg_cosine at the three canonical alignments") {
    auto p = Tensor::from_data({2, 2}, {1, 0, 0, 2});
    auto same = Tensor::from_data({2, 2}, {3, 0, 0, 1});   // same directions
    auto orth = Tensor::from_data({2, 2}, {0, 1, 5, 0});   // orthogonal
    auto anti = Tensor::from_data({2, 2}, {-2, 0, 0, -7}); // opposite

    CHECK(neg_cosine(p, same).item() == doctest::Approx(-1.0f).epsilon(1e-6));
    CHECK(neg_cosine(p, orth).item() == doctest::Approx(0.0f).epsilon(1e-6));
    CHECK(neg_cosine(p, anti).item() == doctest::Approx(1.0f).epsilon(1e-6));
}

TEST_CASE("neg_cosine matches the brute-force oracle and stays in range") {
    Pcg32 rng(61u, 1u);
    for (int iter = 0; iter < 30; ++iter) {
        int B = 1 + rng.randint(8), d = 1 + rng.randint(16);
        auto p = Tensor::uniform({B, d}, -3.0f, 3.0f, rng);
        auto z = Tensor::uniform({B, d}, -3.0f, 3.0f, rng);
        float v = neg_cosine(p, z).item();
        double ref = oracle::neg_cosine({p.data().begin(), p.data().end()},
                                        {z.data().begin(), z.data().end()}, B, d);
        REQUIRE(v == doctest::Approx(ref).epsilon(1e-4));
        REQUIRE(v >= -1.0f - 1e-5f);
        REQUIRE(v <= 1.0f + 1e-5f);
    }
}

TEST_CASE("simsiam_loss hits its extremes") {
    auto a = Tensor::from_data({2, 3}, {1, 0, 0, 0, 1, 0});
    auto b = Tensor::from_data({2, 3}, {0, 0, 1, 1, 0, 0});
    // p1=z2, p2=z1: both terms are -1
    CHECK(simsiam_loss(a, b, b, a).item() == doctest::Approx(-2.0f).epsilon(1e-6));
    // orthogonal everywhere -> 0
    auto c = Tensor::from_data({2, 3}, {0, 1, 0, 0, 0, 1});
    CHECK(simsiam_loss(a, a, c, c).item() == doctest::Approx(0.0f).epsilon(1e-6));
}

TEST_CASE("stop-gradient discipline: targets receive no gradient") {
    Pcg32 rng(62u, 1u);
    auto p1 = Tensor::uniform({3, 4}, -1.0f, 1.0f, rng, true);
    auto p2 = Tensor::uniform({3, 4}, -1.0f, 1.0f, rng, true);
    auto z1 = Tensor::uniform({3, 4}, -1.0f, 1.0f, rng, true);
    auto z2 = Tensor::uniform({3, 4}, -1.0f, 1.0f, rng, true);

    auto loss = simsiam_loss(p1, p2, z1, z2);
    loss.backward();
    CHECK(p1.has_grad());
    CHECK(p2.has_grad());
    CHECK_FALSE(z1.has_grad());
    CHECK_FALSE(z2.has_grad());

    // same discipline for the quantized-prediction form
    auto pq1 = Tensor::uniform({3, 4}, -1.0f, 1.0f, rng, true);
    auto pq2 = Tensor::uniform({3, 4}, -1.0f, 1.0f, rng, true);
    auto l2 = ssql_loss(pq1, pq2, z1, z2);
    l2.backward();
    CHECK(pq1.has_grad());
    CHECK_FALSE(z1.has_grad());

    // and for NCE: FP targets are treated as constants
    auto zq1 = Tensor::uniform({3, 4}, -1.0f, 1.0f, rng, true);
    auto zq2 = Tensor::uniform({3, 4}, -1.0f, 1.0f, rng, true);
    auto l3 = ssql_nce_loss(zq1, zq2, z1, z2, 0.5f);
    l3.backward();
    CHECK(zq1.has_grad());
    CHECK_FALSE(z1.has_grad());
    CHECK_FALSE(z2.has_grad());
}

TEST_CASE("ssql_loss equals simsiam_loss when fed the same tensors") {
    Pcg32 rng(63u, 1u);
    auto p1 = Tensor::uniform({4, 8}, -1.0f, 1.0f, rng);
    auto p2 = Tensor::uniform({4, 8}, -1.0f, 1.0f, rng);
    auto z1 = Tensor::uniform({4, 8}, -1.0f, 1.0f, rng);
    auto z2 = Tensor::uniform({4, 8}, -1.0f, 1.0f, rng);
    float a = simsiam_loss(p1, p2, z1, z2).item();
    float b = ssql_loss(p1, p2, z1, z2).item();
    CHECK(std::abs(a - b) <= 1e-6f);
}

TEST_CASE("ssql_aux_loss is exactly the sum of its parts") {
    Pcg32 rng(64u, 1u);
    auto p1 = Tensor::uniform({4, 8}, -1.0f, 1.0f, rng);
    auto p2 = Tensor::uniform({4, 8}, -1.0f, 1.0f, rng);
    auto pq1 = Tensor::uniform({4, 8}, -1.0f, 1.0f, rng);
    auto pq2 = Tensor::uniform({4, 8}, -1.0f, 1.0f, rng);
    auto z1 = Tensor::uniform({4, 8}, -1.0f, 1.0f, rng);
    auto z2 = Tensor::uniform({4, 8}, -1.0f, 1.0f, rng);

    float total = ssql_aux_loss(p1, p2, pq1, pq2, z1, z2).item();
    float parts = simsiam_loss(p1, p2, z1, z2).item() + ssql_loss(pq1, pq2, z1, z2).item();
    CHECK(total == doctest::Approx(parts).epsilon(1e-7));

    // identical quantized and FP branches: aux = 2 x simsiam
    float twice = ssql_aux_loss(p1, p2, p1, p2, z1, z2).item();
    CHECK(std::abs(twice - 2.0f * simsiam_loss(p1, p2, z1, z2).item()) <= 1e-5f);

    // fully aligned inputs: -4
    auto e = Tensor::from_data({2, 2}, {1, 0, 0, 1});
    CHECK(ssql_aux_loss(e, e, e, e, e, e).item() == doctest::Approx(-4.0f).epsilon(1e-6));
}

TEST_CASE("info_nce on two orthogonal pairs at tau=1, worked by hand") {
    // rows [a, b, a, b]: positive sim 1, both negatives 0
    // per anchor: -ln(e / (e + 2)) = ln(2 + e) - 1
    auto z1 = Tensor::from_data({2, 2}, {1, 0, 0, 1});
    auto z2 = Tensor::from_data({2, 2}, {1, 0, 0, 1});
    float loss = info_nce_loss(z1, z2, 1.0f).item();
    double expect = std::log(2.0 + std::exp(1.0)) - 1.0;
    CHECK(loss == doctest::Approx(expect).epsilon(1e-5));

    double ref = oracle::info_nce({z1.data().begin(), z1.data().end()},
                                  {z2.data().begin(), z2.data().end()}, 2, 2, 1.0);
    CHECK(loss == doctest::Approx(ref).epsilon(1e-5));
}

TEST_CASE("info_nce matches the brute-force oracle on random batches") {
    Pcg32 rng(65u, 1u);
    for (int iter = 0; iter < 20; ++iter) {
        int B = 2 + rng.randint(6), d = 2 + rng.randint(12);
        auto z1 = Tensor::uniform({B, d}, -2.0f, 2.0f, rng);
        auto z2 = Tensor::uniform({B, d}, -2.0f, 2.0f, rng);
        for (float tau : {1.0f, 0.5f, 0.1f}) {
            float v = info_nce_loss(z1, z2, tau).item();
            double ref = oracle::info_nce({z1.data().begin(), z1.data().end()},
                                          {z2.data().begin(), z2.data().end()}, B, d, tau);
            REQUIRE(v == doctest::Approx(ref).epsilon(2e-4));
        }
    }
}

TEST_CASE("info_nce is invariant to a common rotation") {
    Pcg32 rng(66u, 1u);
    int B = 4, d = 6;
    auto z1 = Tensor::uniform({B, d}, -1.0f, 1.0f, rng);
    auto z2 = Tensor::uniform({B, d}, -1.0f, 1.0f, rng);
    float before = info_nce_loss(z1, z2, 0.5f).item();

    // compose a few Givens rotations into R, apply to every embedding
    std::vector<float> R(static_cast<size_t>(d) * d, 0.0f);
    for (int i = 0; i < d; ++i) R[static_cast<size_t>(i) * d + i] = 1.0f;
    for (int g = 0; g < 5; ++g) {
        int i = rng.randint(d), j = rng.randint(d);
        if (i == j) continue;
        float th = rng.uniform(0.0f, 6.28f);
        for (int r = 0; r < d; ++r) {
            float a = R[static_cast<size_t>(r) * d + i], b = R[static_cast<size_t>(r) * d + j];
            R[static_cast<size_t>(r) * d + i] = a * std::cos(th) - b * std::sin(th);
            R[static_cast<size_t>(r) * d + j] = a * std::sin(th) + b * std::cos(th);
        }
    }
    auto Rt = Tensor::from_data({d, d}, R);
    float after = info_nce_loss(matmul(z1, Rt), matmul(z2, Rt), 0.5f).item();
    CHECK(before == doctest::Approx(after).epsilon(5e-4));
}

TEST_CASE("decreasing tau sharpens the loss when positives dominate") {
    // positive sim 1 > negative sims 0, so smaller tau must lower the loss
    auto z1 = Tensor::from_data({2, 2}, {1, 0, 0, 1});
    auto z2 = Tensor::from_data({2, 2}, {1, 0, 0, 1});
    float l1 = info_nce_loss(z1, z2, 1.0f).item();
    float l05 = info_nce_loss(z1, z2, 0.5f).item();
    float l01 = info_nce_loss(z1, z2, 0.1f).item();
    CHECK(l05 < l1);
    CHECK(l01 < l05);
}

TEST_CASE("losses are batch-order invariant") {
    Pcg32 rng(67u, 1u);
    int B = 5, d = 7;
    auto p1 = Tensor::uniform({B, d}, -1.0f, 1.0f, rng);
    auto p2 = Tensor::uniform({B, d}, -1.0f, 1.0f, rng);
    auto z1 = Tensor::uniform({B, d}, -1.0f, 1.0f, rng);
    auto z2 = Tensor::uniform({B, d}, -1.0f, 1.0f, rng);

    std::vector<int> perm = {3, 0, 4, 1, 2};
    auto permute = [&](const Tensor& t) {
        std::vector<float> out(t.numel());
        for (int i = 0; i < B; ++i)
            for (int j = 0; j < d; ++j)
                out[static_cast<size_t>(i) * d + j] = t.data()[static_cast<size_t>(perm[i]) * d + j];
        return Tensor::from_data({B, d}, out);
    };

    CHECK(simsiam_loss(p1, p2, z1, z2).item() ==
          doctest::Approx(simsiam_loss(permute(p1), permute(p2), permute(z1), permute(z2)).item())
              .epsilon(1e-5));
    CHECK(info_nce_loss(z1, z2, 0.5f).item() ==
          doctest::Approx(info_nce_loss(permute(z1), permute(z2), 0.5f).item()).epsilon(1e-5));
}

TEST_CASE("ssql_nce with identical branches matches plain info_nce in value") {
    Pcg32 rng(68u, 1u);
    auto z1 = Tensor::uniform({4, 8}, -1.0f, 1.0f, rng);
    auto z2 = Tensor::uniform({4, 8}, -1.0f, 1.0f, rng);
    float a = info_nce_loss(z1, z2, 0.5f).item();
    float b = ssql_nce_loss(z1, z2, z1, z2, 0.5f, true).item();
    CHECK(std::abs(a - b) <= 1e-6f);
    // the negatives-source flag changes nothing when the sets coincide
    float c = ssql_nce_loss(z1, z2, z1, z2, 0.5f, false).item();
    CHECK(std::abs(a - c) <= 1e-6f);
}

TEST_CASE("info_nce rejects degenerate batches and temperatures") {
    auto z = Tensor::zeros({1, 4});
    CHECK_THROWS_AS(info_nce_loss(z, z, 0.5f), Error);
    auto z2 = Tensor::zeros({2, 4});
    CHECK_THROWS_AS(info_nce_loss(z2, z2, 0.0f), Error);
}

TEST_CASE("loss variant names round-trip") {
    for (auto v : {LossVariant::simsiam, LossVariant::ssql, LossVariant::ssql_aux,
                   LossVariant::ssql_nce})
        CHECK(parse_loss_variant(loss_variant_name(v)) == v);
    CHECK_THROWS_AS(parse_loss_variant("byol"), Error);
}
