#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "ibn/rng.hpp"
#include "ibn/tensor.hpp"

using namespace ibn;

TEST(Matrix, RejectsEmptyAndRaggedShapes) {
  EXPECT_THROW(Matrix(0, 3), ShapeError);
  EXPECT_THROW(Matrix(2, 2, std::vector<double>{1, 2, 3}), ShapeError);
  EXPECT_THROW((Matrix{{1, 2}, {3}}), ShapeError);
  Matrix m(2, 3, 1.5);
  EXPECT_EQ(m.size(), 6u);
  EXPECT_THROW(m.at(2, 0), ShapeError);
}

TEST(Matmul, IdentityAndArithmetic) {
  const Matrix a{{1, 2}, {3, 4}};
  EXPECT_EQ(matmul(a, Matrix::identity(2)), a);
  EXPECT_EQ(matmul(a, Matrix{{5}, {6}}), (Matrix{{17}, {39}}));
}

TEST(Matmul, ShapeErrorNamesBothShapes) {
  try {
    matmul(Matrix(2, 3), Matrix(4, 2));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("2x3"), std::string::npos);
    EXPECT_NE(msg.find("4x2"), std::string::npos);
  }
}

TEST(Matmul, AssociativeOnRandomMatrices) {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng.index(5), k = 1 + rng.index(5), m = 1 + rng.index(5),
                      p = 1 + rng.index(5);
    const Matrix a = rng.uniform_matrix(n, k, -1, 1);
    const Matrix b = rng.uniform_matrix(k, m, -1, 1);
    const Matrix c = rng.uniform_matrix(m, p, -1, 1);
    EXPECT_LT(max_abs_diff(matmul(matmul(a, b), c), matmul(a, matmul(b, c))), 1e-9);
  }
}

TEST(Transpose, SwapsIndicesAndIsAnInvolution) {
  EXPECT_EQ(transpose(Matrix{{1, 2}, {3, 4}}), (Matrix{{1, 3}, {2, 4}}));
  const Matrix row{{1, 2, 3}};
  EXPECT_EQ(transpose(row), (Matrix{{1}, {2}, {3}}));
  Rng rng(3);
  const Matrix r = rng.normal_matrix(4, 7);
  EXPECT_EQ(transpose(transpose(r)), r); // bitwise
}

TEST(RowSoftmax, ClosedFormsAndStability) {
  const Matrix half = row_softmax(Matrix{{0, 0}});
  EXPECT_DOUBLE_EQ(half(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(half(0, 1), 0.5);

  const Matrix big = row_softmax(Matrix{{1000, 0}});
  EXPECT_TRUE(std::isfinite(big(0, 0)));
  EXPECT_NEAR(big(0, 0), 1.0, 1e-15);
  EXPECT_NEAR(big(0, 1), 0.0, 1e-15);

  const Matrix third = row_softmax(Matrix{{std::numbers::ln2, 0}});
  EXPECT_NEAR(third(0, 0), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(third(0, 1), 1.0 / 3.0, 1e-15);
}

TEST(RowSoftmax, RowsAreDistributions) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix s = row_softmax(rng.normal_matrix(1 + rng.index(6), 1 + rng.index(9), 5.0));
    for (std::size_t r = 0; r < s.rows(); ++r) {
      double sum = 0.0;
      for (double v : s.row_span(r)) {
        EXPECT_GT(v, 0.0);
        EXPECT_LE(v, 1.0);
        sum += v;
      }
      EXPECT_NEAR(sum, 1.0, 1e-12);
    }
  }
}

TEST(BroadcastAddRow, AddsBiasToEveryRow) {
  EXPECT_EQ(broadcast_add_row(Matrix(2, 2), Matrix{{1, 2}}), (Matrix{{1, 2}, {1, 2}}));
  const Matrix a{{1, 2}, {3, 4}};
  EXPECT_EQ(broadcast_add_row(a, Matrix(1, 2)), a);
  EXPECT_THROW(broadcast_add_row(Matrix(2, 3), Matrix(1, 2)), ShapeError);
}

TEST(Determinism, SameInputsGiveBitIdenticalOutputs) {
  Rng r1(99), r2(99);
  const Matrix a = r1.normal_matrix(5, 6), b = r1.normal_matrix(6, 4);
  const Matrix a2 = r2.normal_matrix(5, 6), b2 = r2.normal_matrix(6, 4);
  EXPECT_EQ(a, a2);
  EXPECT_EQ(matmul(a, b), matmul(a2, b2));
  EXPECT_EQ(row_softmax(a), row_softmax(a2));
}

TEST(Rng, SeededSequencesRepeatAndDiffer) {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    (void)c;
  }
  EXPECT_NE(Rng(42).next_u64(), Rng(43).next_u64());
  Rng u(5);
  for (int i = 0; i < 1000; ++i) {
    const double v = u.uniform();
    EXPECT_GE(v, 0.0);
    EXPECT_LT(v, 1.0);
    EXPECT_LT(u.index(7), 7u);
  }
}
