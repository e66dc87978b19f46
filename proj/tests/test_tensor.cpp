#include <cmath>
#include <cstring>
#include <limits>

#include <gtest/gtest.h>

#include "ricanet/rng.hpp"
#include "ricanet/tensor.hpp"

using namespace ricanet;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed) {
    Rng rng(seed);
    Tensor t(std::move(shape));
    for (double& v : t.data()) v = rng.uniform(-1.0, 1.0);
    return t;
}

} // namespace

TEST(Tensor, RejectsSizeMismatch) {
    EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), ShapeError);
    EXPECT_THROW(Tensor({2, 0}), ShapeError);
}

TEST(Tensor, ExternalDataMustBeFinite) {
    EXPECT_THROW(Tensor::from_external({2}, {1.0, std::numeric_limits<double>::quiet_NaN()}), NumericError);
    EXPECT_THROW(Tensor::from_external({1}, {std::numeric_limits<double>::infinity()}), NumericError);
    EXPECT_NO_THROW(Tensor::from_external({2}, {1.0, 2.0}));
}

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
    const Tensor eye({2, 2}, {1, 0, 0, 1});
    const Tensor a({2, 2}, {1, 2, 3, 4});
    EXPECT_EQ(matmul(eye, a), a);
}

TEST(Matmul, RowTimesColumn) {
    const Tensor c = matmul(Tensor({1, 2}, {1, 2}), Tensor({2, 1}, {3, 4}));
    ASSERT_EQ(c.shape(), (Shape{1, 1}));
    EXPECT_EQ(c[0], 11.0);
}

TEST(Matmul, MatchesTripleLoopBitwise) {
    const Tensor a = random_tensor({4, 3}, 11);
    const Tensor b = random_tensor({3, 5}, 12);
    const Tensor c = matmul(a, b);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 5; ++j) {
            double acc = 0.0;
            for (std::size_t t = 0; t < 3; ++t) acc += a.values()[i * 3 + t] * b.values()[t * 5 + j];
            EXPECT_EQ(std::memcmp(&acc, &c.values()[i * 5 + j], sizeof(double)), 0);
        }
}

TEST(Matmul, DeterministicBytes) {
    const Tensor a = random_tensor({7, 9}, 3);
    const Tensor b = random_tensor({9, 4}, 4);
    const Tensor c1 = matmul(a, b), c2 = matmul(a, b);
    EXPECT_EQ(std::memcmp(c1.data().data(), c2.data().data(), c1.size() * sizeof(double)), 0);
}

TEST(Matmul, ShapeErrorNamesBothShapes) {
    try {
        matmul(Tensor({2, 3}), Tensor({2, 3}));
        FAIL();
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("[2x3] and [2x3]"), std::string::npos);
    }
}

TEST(FiniteDiff, Quadratic) {
    const auto g = finite_diff_grad(
        [](std::span<const double> p) {
            double s = 0.0;
            for (double v : p) s += v * v;
            return s;
        },
        Tensor({2}, {1.0, -2.0}), 1e-5);
    EXPECT_NEAR(g[0], 2.0, 1e-8);
    EXPECT_NEAR(g[1], -4.0, 1e-8);
}

TEST(FiniteDiff, Product) {
    const auto g = finite_diff_grad([](std::span<const double> p) { return p[0] * p[1]; }, Tensor({2}, {3.0, 5.0}), 1e-5);
    EXPECT_NEAR(g[0], 5.0, 1e-8);
    EXPECT_NEAR(g[1], 3.0, 1e-8);
}

TEST(FiniteDiff, LinearFunctionRecoversCoefficients) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Tensor coeff = random_tensor({6}, 100 + seed);
        const Tensor p = random_tensor({6}, 200 + seed);
        const auto g = finite_diff_grad(
            [&](std::span<const double> x) {
                double s = 0.0;
                for (std::size_t i = 0; i < x.size(); ++i) s += coeff[i] * x[i];
                return s;
            },
            p, 1e-3);
        for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(g[i], coeff[i], 1e-10);
    }
}

TEST(FiniteDiff, NonFiniteEvaluationCarriesIndex) {
    try {
        finite_diff_grad([](std::span<const double> p) { return p[1] > 0.5 ? std::log(-1.0) : 0.0; },
                         Tensor({3}, {0.0, 1.0, 0.0}), 1e-3);
        FAIL();
    } catch (const NumericError& e) {
        EXPECT_EQ(e.index, 0u);  // the first coordinate already sees p[1] = 1 > 0.5
    }
    EXPECT_THROW(finite_diff_grad([](std::span<const double>) { return 0.0; }, Tensor({1}), 0.0), ConfigError);
}
