#include <algorithm>
#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "ibn/attention.hpp"
#include "ibn/autograd.hpp"
#include "ibn/rng.hpp"

using namespace ibn;
using namespace ibn::attention;

namespace {

Matrix permute_rows(const Matrix& m, const std::vector<std::size_t>& perm) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c)
      out(r, c) = m(perm[r], c);
  return out;
}

double mean_row_entropy(const Matrix& p) {
  double h = 0.0;
  for (std::size_t r = 0; r < p.rows(); ++r)
    for (double v : p.row_span(r))
      if (v > 0.0)
        h -= v * std::log(v);
  return h / static_cast<double>(p.rows());
}

void zero_out(EncoderBlock& b) {
  b.mha.visit("", [](const std::string&, Matrix& m) { m.fill(0.0); });
  b.ff_in.visit("", [](const std::string&, Matrix& m) { m.fill(0.0); });
  b.ff_out.visit("", [](const std::string&, Matrix& m) { m.fill(0.0); });
}

} // namespace

TEST(ScaledDotAttention, SingleTokenReturnsItsValueRow) {
  Rng rng(1);
  const auto w = HeadWeights::init(6, 3, rng);
  const Matrix x = rng.normal_matrix(1, 6);
  EXPECT_LT(max_abs_diff(scaled_dot_attention(x, w), matmul(x, w.wv)), 1e-15);
}

TEST(ScaledDotAttention, ZeroQueriesAverageTheValues) {
  Rng rng(2);
  auto w = HeadWeights::init(6, 3, rng);
  w.wq.fill(0.0);
  const Matrix x = rng.normal_matrix(5, 6);
  const Matrix v = matmul(x, w.wv);
  const Matrix out = scaled_dot_attention(x, w);
  for (std::size_t c = 0; c < v.cols(); ++c) {
    double mean = 0;
    for (std::size_t r = 0; r < v.rows(); ++r)
      mean += v(r, c);
    mean /= static_cast<double>(v.rows());
    for (std::size_t r = 0; r < out.rows(); ++r)
      EXPECT_NEAR(out(r, c), mean, 1e-12);
  }
}

TEST(ScaledDotAttention, CausalFirstRowMatchesSingleTokenPrefix) {
  Rng rng(3);
  const auto w = HeadWeights::init(4, 4, rng);
  const Matrix x = rng.normal_matrix(3, 4);
  const Matrix masked = scaled_dot_attention(x, w, AttentionMask::causal());
  const Matrix prefix = scaled_dot_attention(slice_rows(x, 0, 1), w);
  for (std::size_t c = 0; c < 4; ++c)
    EXPECT_EQ(masked(0, c), prefix(0, c));
}

TEST(ScaledDotAttention, WidthMismatchIsShapeError) {
  Rng rng(4);
  const auto w = HeadWeights::init(4, 2, rng);
  EXPECT_THROW(scaled_dot_attention(Matrix(3, 5), w), ShapeError);
}

TEST(AttentionWeights, RowsAreDistributions) {
  Rng rng(5);
  for (auto mask : {AttentionMask::none(), AttentionMask::causal(), AttentionMask::padding(3)}) {
    const auto w = HeadWeights::init(8, 4, rng);
    const Matrix p = attention_weights(rng.normal_matrix(6, 8, 2.0), w, mask);
    for (std::size_t r = 0; r < p.rows(); ++r) {
      double s = 0;
      for (double v : p.row_span(r)) {
        EXPECT_GE(v, 0.0);
        s += v;
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(AttentionWeights, PaddingHidesTrailingKeys) {
  Rng rng(6);
  const auto w = HeadWeights::init(4, 2, rng);
  const Matrix p = attention_weights(rng.normal_matrix(5, 4), w, AttentionMask::padding(2));
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 2; c < 5; ++c)
      EXPECT_EQ(p(r, c), 0.0);
}

TEST(AttentionWeights, ScalingSoftensTheDistribution) {
  Rng rng(7);
  const std::size_t d = 64;
  for (int trial = 0; trial < 5; ++trial) {
    HeadWeights w;
    w.wq = rng.normal_matrix(d, d);
    w.wk = rng.normal_matrix(d, d);
    w.wv = rng.normal_matrix(d, d);
    const Matrix x = rng.normal_matrix(12, d, 1.0 / std::sqrt(double(d)));
    HeadWeights unscaled = w;
    unscaled.wq = scale(w.wq, std::sqrt(double(d))); // cancels the 1/sqrt(d_k) divisor
    EXPECT_GT(mean_row_entropy(attention_weights(x, w)),
              mean_row_entropy(attention_weights(x, unscaled)));
  }
}

TEST(MultiHead, SingleHeadWithIdentityOutputIsPlainAttention) {
  Rng rng(8);
  auto mha = MultiHeadAttention::init(6, 1, rng);
  mha.wo = Matrix::identity(6);
  const Matrix x = rng.normal_matrix(4, 6);
  EXPECT_LT(max_abs_diff(multi_head(x, mha), scaled_dot_attention(x, mha.heads[0])), 1e-15);
}

TEST(MultiHead, OutputShape) {
  Rng rng(9);
  for (std::size_t h : {2u, 4u}) {
    const auto mha = MultiHeadAttention::init(8, h, rng);
    const Matrix out = multi_head(rng.normal_matrix(5, 8), mha);
    EXPECT_EQ(out.rows(), 5u);
    EXPECT_EQ(out.cols(), 8u);
  }
}

TEST(MultiHead, GeometryValidation) {
  Rng rng(10);
  EXPECT_THROW(MultiHeadAttention::init(10, 4, rng), ValidationError);
  EXPECT_THROW(MultiHeadAttention::init(8, 0, rng), ValidationError);
  const auto bert = MultiHeadAttention::init(768, 12, rng);
  EXPECT_EQ(bert.heads.size(), 12u);
  EXPECT_EQ(bert.heads[0].d_head(), 64u);
}

TEST(MultiHead, ResultIndependentOfHeadOrder) {
  Rng rng(11);
  const auto mha = MultiHeadAttention::init(8, 4, rng);
  const Matrix x = rng.normal_matrix(5, 8);
  // reverse the heads and move the matching row blocks of Wo with them
  MultiHeadAttention rev = mha;
  std::reverse(rev.heads.begin(), rev.heads.end());
  const std::size_t dh = 2;
  for (std::size_t h = 0; h < 4; ++h)
    for (std::size_t i = 0; i < dh; ++i)
      for (std::size_t c = 0; c < 8; ++c)
        rev.wo((3 - h) * dh + i, c) = mha.wo(h * dh + i, c);
  EXPECT_LT(max_abs_diff(multi_head(x, mha), multi_head(x, rev)), 1e-12);
}

TEST(PositionalEncoding, KnownValues) {
  const Matrix pe = positional_encoding(3, 4);
  EXPECT_EQ(pe(0, 0), 0.0);
  EXPECT_EQ(pe(0, 1), 1.0);
  EXPECT_EQ(pe(0, 2), 0.0);
  EXPECT_EQ(pe(0, 3), 1.0);
  EXPECT_NEAR(pe(1, 0), 0.84147, 1e-5);
  EXPECT_NEAR(pe(1, 2), std::sin(1.0 / 100.0), 1e-15);
  for (double v : positional_encoding(50, 16).data()) {
    EXPECT_LE(v, 1.0);
    EXPECT_GE(v, -1.0);
  }
  EXPECT_THROW(positional_encoding(3, 5), ValidationError);
}

TEST(EncoderBlock, ZeroSublayersReduceToDoubleNorm) {
  Rng rng(12);
  auto blk = EncoderBlock::init(8, 2, 32, rng);
  zero_out(blk);
  const Matrix x = rng.normal_matrix(4, 8);
  const Matrix expected = nn::layer_norm(nn::layer_norm(x, blk.norm1), blk.norm2);
  EXPECT_LT(max_abs_diff(encoder_block(x, blk), expected), 1e-12);
}

TEST(EncoderBlock, PreservesShape) {
  Rng rng(13);
  const auto blk = EncoderBlock::init(8, 4, 16, rng);
  const Matrix y = encoder_block(rng.normal_matrix(7, 8), blk);
  EXPECT_EQ(y.rows(), 7u);
  EXPECT_EQ(y.cols(), 8u);
}

class BlockGradient : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(BlockGradient, FullBlockPassesGradCheck) {
  Rng rng(GetParam());
  auto blk = EncoderBlock::init(8, 2, 16, rng);
  // perturb norms away from the identity so their gradients are exercised
  blk.norm1.gamma = rng.uniform_matrix(1, 8, 0.5, 1.5);
  blk.norm2.beta = rng.normal_matrix(1, 8, 0.1);
  Matrix x = rng.normal_matrix(3, 8);
  autograd::Tape t;
  const auto out = blk.record(t, t.parameter(x), AttentionMask::none(), 3, true);
  t.mse(out, t.constant(rng.normal_matrix(3, 8)));
  EXPECT_LT(autograd::grad_check(t, {}, 1e-6), 1e-4);
}

INSTANTIATE_TEST_SUITE_P(Seeds, BlockGradient, ::testing::Values(1u, 2u, 3u));

TEST(EncodeStack, EmptyAndRepeatedComposition) {
  Rng rng(14);
  const Matrix x = rng.normal_matrix(4, 8);
  EXPECT_EQ(encode_stack(x, {}), x);
  const std::vector<EncoderBlock> blocks{EncoderBlock::init(8, 2, 16, rng),
                                         EncoderBlock::init(8, 2, 16, rng)};
  const Matrix twice = encoder_block(encoder_block(x, blocks[0]), blocks[1]);
  EXPECT_LT(max_abs_diff(encode_stack(x, blocks), twice), 1e-12);
}

TEST(EncodeStack, PermutationEquivariantWithoutPositions) {
  Rng rng(15);
  const std::vector<EncoderBlock> blocks{EncoderBlock::init(8, 2, 16, rng),
                                         EncoderBlock::init(8, 2, 16, rng)};
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix x = rng.normal_matrix(6, 8);
    std::vector<std::size_t> perm(6);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    const Matrix lhs = encode_stack(permute_rows(x, perm), blocks);
    const Matrix rhs = permute_rows(encode_stack(x, blocks), perm);
    EXPECT_LT(max_abs_diff(lhs, rhs), 1e-9);
  }
}

TEST(EncodeStack, CausalMaskIsolatesFuturePositions) {
  Rng rng(16);
  const std::vector<EncoderBlock> blocks{EncoderBlock::init(8, 2, 16, rng),
                                         EncoderBlock::init(8, 2, 16, rng)};
  const Matrix x = rng.normal_matrix(6, 8);
  const Matrix base = encode_stack(x, blocks, AttentionMask::causal());
  for (std::size_t t = 0; t < 6; ++t) {
    Matrix y = x;
    for (std::size_t c = 0; c < 8; ++c)
      y(t, c) += rng.normal();
    const Matrix out = encode_stack(y, blocks, AttentionMask::causal());
    for (std::size_t r = 0; r < t; ++r)
      for (std::size_t c = 0; c < 8; ++c)
        EXPECT_EQ(out(r, c), base(r, c)) << "row " << r << " after perturbing " << t;
  }
}
