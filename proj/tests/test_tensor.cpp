#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "ctrace/error.hpp"
#include "ctrace/tensor.hpp"
#include "test_support.hpp"

namespace ctrace {
namespace {

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  const Tensor2 m(3, 3, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  EXPECT_EQ(matmul(Tensor2::identity(3), m), m);
}

TEST(Matmul, ZerosAnnihilate) {
  const Tensor2 m(3, 4, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12});
  EXPECT_EQ(matmul(Tensor2(2, 3), m), Tensor2(2, 4));
}

TEST(Matmul, ScalarCase) { EXPECT_EQ(matmul(Tensor2(1, 1, {2}), Tensor2(1, 1, {3}))(0, 0), 6.0); }

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    matmul(Tensor2(2, 3), Tensor2(4, 5));
    FAIL() << "expected a shape error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Shape);
    EXPECT_NE(std::string(e.what()).find("[2x3]"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("[4x5]"), std::string::npos);
  }
}

TEST(Matmul, AssociativeOnRandomMatrices) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const auto n = testing::uniform(rng, 1, 6), k = testing::uniform(rng, 1, 6), m = testing::uniform(rng, 1, 6),
               p = testing::uniform(rng, 1, 6);
    const Tensor2 a = testing::random_tensor(rng, n, k, 1.0);
    const Tensor2 b = testing::random_tensor(rng, k, m, 1.0);
    const Tensor2 c = testing::random_tensor(rng, m, p, 1.0);
    const Tensor2 left = matmul(matmul(a, b), c);
    const Tensor2 right = matmul(a, matmul(b, c));
    for (std::size_t i = 0; i < left.size(); ++i) EXPECT_NEAR(left.data()[i], right.data()[i], 1e-9);
  }
}

TEST(Softmax, SymmetricRow) {
  const Tensor2 s = softmax_rows(Tensor2(1, 2, {0, 0}));
  EXPECT_DOUBLE_EQ(s(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(s(0, 1), 0.5);
}

TEST(Softmax, ClosedForm) {
  const Tensor2 s = softmax_rows(Tensor2(1, 2, {std::log(2.0), 0}));
  EXPECT_NEAR(s(0, 0), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(s(0, 1), 1.0 / 3.0, 1e-15);
}

TEST(Softmax, ShiftInvariant) {
  const Vector x{0.3, -1.2, 2.5, 0.0};
  Vector shifted = x;
  for (double& v : shifted) v += 1000.0;
  const Vector a = softmax(x), b = softmax(shifted);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(Softmax, RowsSumToOneOnRandomInputs) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> dist(-50.0, 50.0);
  for (int trial = 0; trial < 200; ++trial) {
    Tensor2 x(3, testing::uniform(rng, 1, 40));
    for (double& v : x.data()) v = dist(rng);
    const Tensor2 s = softmax_rows(x);
    for (std::size_t r = 0; r < s.rows(); ++r) {
      double sum = 0.0;
      for (double v : s.row(r)) {
        EXPECT_GE(v, 0.0);
        sum += v;
      }
      EXPECT_NEAR(sum, 1.0, 1e-12);
    }
  }
}

TEST(LayerNorm, ConstantVectorGoesToZero) {
  for (double v : layer_norm(Vector{5, 5, 5}, Vector(3, 1.0), Vector(3, 0.0), 1e-5)) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, UnitVarianceInput) {
  const Vector y = layer_norm(Vector{1, -1}, Vector(2, 1.0), Vector(2, 0.0), 1e-12);
  EXPECT_NEAR(y[0], 1.0, 1e-6);
  EXPECT_NEAR(y[1], -1.0, 1e-6);
}

TEST(LayerNorm, ZeroGammaGivesBeta) {
  const Vector beta{0.5, -2.0, 3.0};
  EXPECT_EQ(layer_norm(Vector{1.0, 7.0, -3.0}, Vector(3, 0.0), beta, 1e-5), beta);
}

TEST(LayerNorm, LengthMismatchThrows) {
  EXPECT_THROW(layer_norm(Vector{1, 2}, Vector{1}, Vector{0, 0}, 1e-5), Error);
}

TEST(LayerNorm, OutputIsCenteredWithUnitVariance) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = testing::uniform(rng, 2, 40);
    const Vector x = testing::random_vector(rng, n, 3.0);
    const Vector y = layer_norm(x, Vector(n, 1.0), Vector(n, 0.0), 1e-300);
    double mean = 0.0, var = 0.0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(n);
    for (double v : y) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    EXPECT_LT(std::abs(mean), 1e-12);
    EXPECT_NEAR(var, 1.0, 1e-6);
  }
}

TEST(Gelu, FixedPointAndAsymptotes) {
  EXPECT_EQ(gelu(0.0), 0.0);
  EXPECT_LT(std::abs(gelu(10.0) - 10.0), 1e-4);
  EXPECT_LT(std::abs(gelu(-10.0)), 1e-4);
}

TEST(Argmax, Examples) {
  EXPECT_EQ(argmax(Vector{0.1, 0.9, 0.3}), 1u);
  EXPECT_EQ(argmax(Vector{0.5, 0.5}), 0u);
  EXPECT_EQ(argmax(Vector{7}), 0u);
  EXPECT_THROW(argmax(Vector{}), Error);
}

TEST(Kernels, PureAcrossRepeatedCalls) {
  std::mt19937_64 rng(9);
  const Tensor2 a = testing::random_tensor(rng, 5, 7, 1.0), b = testing::random_tensor(rng, 7, 3, 1.0);
  const Vector x = testing::random_vector(rng, 7, 1.0);
  EXPECT_EQ(matmul(a, b), matmul(a, b));
  EXPECT_EQ(softmax_rows(a), softmax_rows(a));
  EXPECT_EQ(gelu(x), gelu(x));
  EXPECT_EQ(layer_norm(x, Vector(7, 1.0), Vector(7, 0.0), 1e-5), layer_norm(x, Vector(7, 1.0), Vector(7, 0.0), 1e-5));
}

TEST(Tensor2, RejectsWrongDataLength) { EXPECT_THROW(Tensor2(2, 2, Vector{1, 2, 3}), Error); }

}  // namespace
}  // namespace ctrace
