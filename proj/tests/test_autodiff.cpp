/*
 * Copyright 2026 The softalign Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <algorithm>
#include <functional>
#include <utility>

#include "softalign/autodiff.hpp"

namespace softalign::ad {
namespace {

Parameter random_param(const std::string& name, std::size_t r, std::size_t c, Rng& rng) {
  Parameter p(name, r, c);
  for (double& v : p.value.data) v = rng.normal();
  return p;
}

using LossFn = std::function<Var(Tape&, std::vector<Var>&)>;

double eval_loss(std::vector<Parameter>& ps, const LossFn& f) {
  Tape t(false);
  std::vector<Var> vs;
  for (auto& p : ps) vs.push_back(t.param(std::as_const(p)));
  return t.scalar(f(t, vs));
}

/// Worst relative error of reverse-mode gradients against central
/// differences over every coordinate.
double max_grad_error(std::vector<Parameter>& ps, const LossFn& f, double h = 1e-6) {
  for (auto& p : ps) p.zero_grad();
  {
    Tape t(true);
    std::vector<Var> vs;
    for (auto& p : ps) vs.push_back(t.param(p));
    t.backward(f(t, vs));
  }
  double worst = 0.0;
  for (auto& p : ps)
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double x = p.value.data[k];
      p.value.data[k] = x + h;
      const double up = eval_loss(ps, f);
      p.value.data[k] = x - h;
      const double down = eval_loss(ps, f);
      p.value.data[k] = x;
      const double fd = (up - down) / (2 * h);
      const double an = p.grad.data[k];
      worst = std::max(worst, std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-8}));
    }
  return worst;
}

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (double& v : m.data) v = rng.normal();
  return m;
}

TEST(Tape, ConstantLossHasZeroGradient) {
  Rng rng(1);
  auto p = random_param("w", 2, 3, rng);
  Tape t(true);
  const Var w = t.param(p);
  (void)w;
  const Var c = t.constant_scalar(4.0);
  t.backward(c);
  for (double g : p.grad.data) EXPECT_EQ(g, 0.0);
}

TEST(Tape, SquaredNormGradientIsTwiceW) {
  Rng rng(2);
  Parameter p = random_param("w", 1, 5, rng);
  Tape t(true);
  const Var w = t.param(p);
  t.backward(matmul_nt(t, w, w));
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(p.grad.data[i], 2.0 * p.value.data[i]);
}

TEST(Tape, ConstParameterGetsNoGradient) {
  Rng rng(3);
  Parameter p = random_param("w", 1, 3, rng);
  Tape t(true);
  const Var w = t.param(std::as_const(p));
  const Var l = sum(t, w);
  EXPECT_FALSE(t.needs_grad(l));
  t.backward(l);
  for (double g : p.grad.data) EXPECT_EQ(g, 0.0);
}

TEST(Tape, NonRecordingTapeRejectsBackward) {
  Tape t(false);
  EXPECT_THROW(t.backward(t.constant_scalar(1.0)), InputError);
}

TEST(Tape, ReplayGivesIdenticalLoss) {
  Rng rng(4);
  std::vector<Parameter> ps{random_param("a", 3, 4, rng), random_param("b", 4, 2, rng)};
  const LossFn f = [](Tape& t, std::vector<Var>& v) { return sum(t, tanh(t, matmul(t, v[0], v[1]))); };
  EXPECT_EQ(eval_loss(ps, f), eval_loss(ps, f));
}

struct OpCase {
  std::string name;
  std::vector<std::pair<std::size_t, std::size_t>> shapes;
  LossFn f;
};

class OpGradient : public ::testing::TestWithParam<int> {};

std::vector<OpCase> op_cases() {
  Rng rng(99);
  const Matrix w34 = random_matrix(3, 4, rng);
  const Matrix w33 = random_matrix(3, 3, rng);
  const Matrix w24 = random_matrix(2, 4, rng);
  const Matrix w21 = random_matrix(2, 1, rng);
  std::vector<OpCase> c;
  c.push_back({"matmul", {{3, 2}, {2, 4}}, [=](Tape& t, auto& v) { return weighted_sum(t, matmul(t, v[0], v[1]), w34); }});
  c.push_back({"matmul_nt", {{3, 2}, {3, 2}}, [=](Tape& t, auto& v) { return weighted_sum(t, matmul_nt(t, v[0], v[1]), w33); }});
  c.push_back({"linear", {{3, 2}, {2, 4}, {1, 4}},
               [=](Tape& t, auto& v) { return weighted_sum(t, linear(t, v[0], v[1], v[2]), w34); }});
  c.push_back({"add_scaled", {{3, 4}, {3, 4}},
               [=](Tape& t, auto& v) { return weighted_sum(t, tanh(t, add_scaled(t, v[0], v[1], -0.7)), w34); }});
  c.push_back({"add_scale", {{3, 4}, {3, 4}},
               [=](Tape& t, auto& v) { return weighted_sum(t, scale(t, add(t, v[0], v[1]), 1.3), w34); }});
  c.push_back({"rows", {{5, 4}}, [=](Tape& t, auto& v) {
                 const std::vector<int> ids{4, 0, 4};
                 return weighted_sum(t, tanh(t, rows(t, v[0], ids)), w34);
               }});
  c.push_back({"layer_norm", {{3, 4}, {1, 4}, {1, 4}},
               [=](Tape& t, auto& v) { return weighted_sum(t, layer_norm(t, v[0], v[1], v[2]), w34); }});
  c.push_back({"attention", {{3, 4}, {3, 4}, {3, 4}},
               [=](Tape& t, auto& v) { return weighted_sum(t, attention(t, v[0], v[1], v[2], 2, false), w34); }});
  c.push_back({"attention_causal", {{3, 4}, {3, 4}, {3, 4}},
               [=](Tape& t, auto& v) { return weighted_sum(t, attention(t, v[0], v[1], v[2], 2, true), w34); }});
  c.push_back({"cross_attention", {{3, 4}, {2, 4}, {2, 4}},
               [=](Tape& t, auto& v) { return weighted_sum(t, attention(t, v[0], v[1], v[2], 1, false), w34); }});
  c.push_back({"log_softmax", {{3, 4}}, [=](Tape& t, auto& v) { return weighted_sum(t, log_softmax(t, v[0]), w34); }});
  c.push_back({"softmax", {{3, 4}}, [=](Tape& t, auto& v) { return weighted_sum(t, softmax(t, v[0]), w34); }});
  c.push_back({"sparse_abs_sum", {{2, 4}}, [=](Tape& t, auto& v) {
                 std::vector<AbsTerm> terms{{0, 1, 0.9, 1.0}, {1, 3, 0.05, 0.5}, {1, 0, 0.3, 2.0}};
                 return sparse_abs_sum(t, softmax(t, v[0]), terms);
               }});
  c.push_back({"reused_node", {{2, 4}}, [=](Tape& t, auto& v) {
                 const Var s = softmax(t, v[0]);
                 return weighted_sum(t, add(t, s, tanh(t, s)), w24);
               }});
  (void)w21;
  return c;
}

TEST_P(OpGradient, MatchesCentralDifferences) {
  const auto cases = op_cases();
  const auto& c = cases[static_cast<std::size_t>(GetParam())];
  Rng rng(static_cast<std::uint64_t>(GetParam()) + 10);
  std::vector<Parameter> ps;
  for (const auto& [r, k] : c.shapes) ps.push_back(random_param("p", r, k, rng));
  EXPECT_LT(max_grad_error(ps, c.f), 1e-6) << c.name;
}

INSTANTIATE_TEST_SUITE_P(AllOps, OpGradient, ::testing::Range(0, static_cast<int>(op_cases().size())));

TEST(Ops, SoftmaxRowsAreDistributions) {
  Rng rng(5);
  Tape t(false);
  const Var s = softmax(t, t.constant(random_matrix(4, 6, rng)));
  const Matrix& m = t.value(s);
  for (std::size_t r = 0; r < m.rows; ++r) {
    double z = 0;
    for (std::size_t c = 0; c < m.cols; ++c) z += m(r, c);
    EXPECT_NEAR(z, 1.0, 1e-12);
  }
}

TEST(Ops, CausalAttentionIgnoresFutureKeys) {
  Rng rng(6);
  const Matrix q = random_matrix(3, 4, rng), k = random_matrix(3, 4, rng), v = random_matrix(3, 4, rng);
  Matrix k2 = k, v2 = v;
  for (std::size_t c = 0; c < 4; ++c) {
    k2(2, c) += 5.0;
    v2(2, c) -= 3.0;
  }
  Tape t(false);
  const Matrix& a = t.value(attention(t, t.constant(q), t.constant(k), t.constant(v), 2, true));
  const Matrix& b = t.value(attention(t, t.constant(q), t.constant(k2), t.constant(v2), 2, true));
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(a(r, c), b(r, c));
}

TEST(Ops, ShapeMismatchesThrow) {
  Tape t(false);
  const Var a = t.constant(Matrix(2, 3)), b = t.constant(Matrix(2, 2));
  EXPECT_THROW(matmul(t, a, b), InputError);
  EXPECT_THROW(add(t, a, b), InputError);
  EXPECT_THROW(sparse_abs_sum(t, a, {{5, 0, 0.0, 1.0}}), InputError);
}

}  // namespace
}  // namespace softalign::ad
