#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <string>
#include <vector>

#include "ibn/attention.hpp"
#include "ibn/autograd.hpp"
#include "ibn/nn/activation.hpp"
#include "ibn/rng.hpp"

namespace ibn {

/// A recorded tape whose last node is a scalar loss over trainable leaves.
/// `storage` keeps the parameter matrices the tape refers to alive.
struct GradientCase {
  std::string name;
  double tolerance = 0.0;
  std::shared_ptr<autograd::Tape> tape;
  std::shared_ptr<void> storage;
};

/// One case per differentiable op, plus a 2-block encoder stack at d_e = 8.
/// Each op output is reduced by MSE against a random target so no gradient
/// entry is trivially zero.
inline std::vector<GradientCase> gradient_cases(std::uint64_t seed) {
  using autograd::NodeId;
  using autograd::Tape;
  std::vector<GradientCase> cases;
  Rng rng(seed);

  auto op_case = [&](std::string name, std::vector<Matrix> init, auto build) {
    auto params = std::make_shared<std::deque<Matrix>>(init.begin(), init.end());
    auto t = std::make_shared<Tape>();
    std::vector<NodeId> leaves;
    for (auto& p : *params)
      leaves.push_back(t->parameter(p));
    const NodeId out = build(*t, leaves);
    t->forward();
    const Matrix& v = t->value(out);
    t->mse(out, t->constant(rng.normal_matrix(v.rows(), v.cols())));
    cases.push_back({std::move(name), 1e-4, t, params});
  };
  auto nm = [&](std::size_t r, std::size_t c) { return rng.normal_matrix(r, c); };

  op_case("matmul", {nm(3, 4), nm(4, 2)}, [](Tape& t, auto& p) { return t.matmul(p[0], p[1]); });
  op_case("add", {nm(2, 3), nm(2, 3)}, [](Tape& t, auto& p) { return t.add(p[0], p[1]); });
  op_case("add-row", {nm(3, 3), nm(1, 3)}, [](Tape& t, auto& p) { return t.add_row(p[0], p[1]); });
  for (auto kind : {nn::ActivationKind::sigmoid(), nn::ActivationKind::tanh(),
                    nn::ActivationKind::relu(), nn::ActivationKind::gelu()})
    op_case("activation/" + std::string(nn::to_string(kind.tag)), {nm(3, 4)},
            [kind](Tape& t, auto& p) { return t.activation(p[0], kind); });
  op_case("softmax-rows", {nm(3, 5)}, [](Tape& t, auto& p) { return t.softmax_rows(p[0]); });
  op_case("mse", {nm(3, 2), nm(3, 2)}, [](Tape& t, auto& p) { return t.mse(p[0], p[1]); });
  op_case("scale", {nm(2, 2)}, [](Tape& t, auto& p) { return t.scale(p[0], -0.37); });
  op_case("transpose", {nm(2, 5)}, [](Tape& t, auto& p) { return t.transpose(p[0]); });
  op_case("concat-cols", {nm(3, 2), nm(3, 3)}, [](Tape& t, auto& p) {
    const NodeId parts[] = {p[0], p[1]};
    return t.concat_cols(parts);
  });
  auto mask = std::make_shared<Matrix>(nm(3, 3));
  op_case("mask-add", {nm(3, 3)},
          [mask](Tape& t, auto& p) { return t.softmax_rows(t.mask_add(p[0], mask)); });
  op_case("layer-norm", {nm(3, 6), nm(1, 6), nm(1, 6)},
          [](Tape& t, auto& p) { return t.layer_norm(p[0], p[1], p[2], 1e-5); });
  op_case("embed-lookup", {nm(5, 3)}, [](Tape& t, auto& p) { return t.embed_lookup(p[0], {2, 0, 2, 4}); });
  op_case("select-rows", {nm(4, 3)}, [](Tape& t, auto& p) { return t.select_rows(p[0], {1, 1, 3}); });

  {
    auto logits = std::make_shared<Matrix>(nm(4, 5));
    auto t = std::make_shared<Tape>();
    t->cross_entropy(t->parameter(*logits), {0, autograd::kIgnoreIndex, 4, 2});
    cases.push_back({"cross-entropy", 1e-4, t, logits});
  }

  {
    struct Stack {
      std::vector<attention::EncoderBlock> blocks;
      Matrix x;
    };
    auto s = std::make_shared<Stack>();
    constexpr std::size_t d = 8, len = 4;
    for (int i = 0; i < 2; ++i) {
      auto b = attention::EncoderBlock::init(d, 2, 16, rng);
      b.norm1.gamma = rng.uniform_matrix(1, d, 0.5, 1.5);
      b.norm2.beta = rng.normal_matrix(1, d, 0.1);
      s->blocks.push_back(std::move(b));
    }
    s->x = rng.normal_matrix(len, d);
    auto t = std::make_shared<Tape>();
    const NodeId x = t->parameter(s->x);
    const NodeId out = attention::record_stack(*t, x, s->blocks, attention::AttentionMask::none(), len, true);
    t->mse(out, t->constant(rng.normal_matrix(len, d)));
    cases.push_back({"encoder-stack/2x8", 1e-3, t, s});
  }
  return cases;
}

} // namespace ibn
