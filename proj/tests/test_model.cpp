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

#include <cmath>

#include "softalign/model.hpp"
#include "test_util.hpp"

namespace softalign::model {
namespace {

Vocabulary toy_vocab() { return testing::ToyGrounding::make_model_vocab(64); }

Seq2SeqModel tiny_model(std::uint64_t seed = 5) { return Seq2SeqModel(toy_vocab(), testing::tiny_model_config(seed)); }

Parameter& param(Seq2SeqModel& m, const std::string& name) {
  for (auto& p : m.parameters())
    if (p.name == name) return p;
  throw std::runtime_error("no parameter " + name);
}

/// Model whose next-token distribution is softmax(bias) for every context.
Seq2SeqModel constant_model(const std::vector<double>& bias) {
  auto m = tiny_model();
  auto& w = param(m, "out.w");
  std::fill(w.value.data.begin(), w.value.data.end(), 0.0);
  param(m, "out.b").value.data = bias;
  return m;
}

TEST(Model, TinyConfigIsSmall) {
  const auto m = tiny_model();
  EXPECT_LT(m.parameter_count(), 10000u);
  EXPECT_GT(m.parameter_count(), 0u);
}

TEST(Model, DistributionsLieOnTheSimplex) {
  const auto m = tiny_model();
  const auto v = toy_vocab();
  for (const auto& s : testing::toy_sources()) {
    const auto src = tok::encode(v, s);
    const auto p = m.forward(src, tok::encode(v, "big"));
    ASSERT_EQ(p.size(), v.size());
    double z = 0.0;
    for (double x : p) {
      EXPECT_GE(x, 0.0);
      z += x;
    }
    EXPECT_NEAR(z, 1.0, 1e-12);
  }
}

TEST(Model, InitialisationIsSeeded) {
  EXPECT_EQ(tiny_model(5).checksum(), tiny_model(5).checksum());
  EXPECT_NE(tiny_model(5).checksum(), tiny_model(6).checksum());
}

TEST(Model, ForwardMatchesCachedEncoderPath) {
  const auto m = tiny_model();
  const auto v = toy_vocab();
  const auto src = tok::encode(v, "gu do ra");
  const auto prefix = tok::encode(v, "big dog");
  const auto a = m.forward(src, prefix);
  const auto b = m.next_distribution(m.encode(src), prefix);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(Model, HandSetOutputLayer) {
  const auto v = toy_vocab();
  std::vector<double> bias(v.size(), 0.0);
  bias[5] = std::log(3.0);
  const auto m = constant_model(bias);
  const auto p = m.forward(tok::encode(v, "gu"), {});
  const double z = static_cast<double>(v.size()) + 2.0;
  EXPECT_NEAR(p[5], 3.0 / z, 1e-12);
  EXPECT_NEAR(p[6], 1.0 / z, 1e-12);
}

TEST(Model, RejectsBadInput) {
  const auto m = tiny_model();
  const std::vector<int> bad{static_cast<int>(toy_vocab().size())};
  EXPECT_THROW(m.forward(bad, {}), InputError);
  EXPECT_THROW(m.forward(std::vector<int>{-1}, {}), InputError);
  EXPECT_THROW(m.forward(std::vector<int>(30, 5), {}), InputError);
  auto cfg = testing::tiny_model_config();
  cfg.heads = 3;
  EXPECT_THROW(Seq2SeqModel(toy_vocab(), cfg), ConfigError);
  EXPECT_THROW(m.sample_hypotheses(std::vector<int>{5}, 0, 1.0, 4, 1), ConfigError);
}

TEST(Sampling, ArgmaxEqualsGreedy) {
  const auto m = tiny_model();
  const auto v = toy_vocab();
  for (const auto& s : testing::toy_sources()) {
    const auto src = tok::encode(v, s);
    const auto h = m.sample_hypotheses(src, 1, 0.0, 10, 7)[0];
    auto tokens = h.tokens;
    if (!tokens.empty() && tokens.back() == Vocabulary::kEos) tokens.pop_back();
    EXPECT_EQ(tokens, m.greedy_decode(src, 10));
  }
}

TEST(Sampling, SameSeedSameSamples) {
  const auto m = tiny_model();
  const auto src = tok::encode(toy_vocab(), "gu do ra");
  const auto a = m.sample_hypotheses(src, 6, 1.0, 12, 42);
  const auto b = m.sample_hypotheses(src, 6, 1.0, 12, 42);
  const auto c = m.sample_hypotheses(src, 6, 1.0, 12, 43);
  bool differs = false;
  for (std::size_t j = 0; j < a.size(); ++j) {
    EXPECT_EQ(a[j].tokens, b[j].tokens);
    EXPECT_EQ(a[j].log_prob, b[j].log_prob);
    differs = differs || a[j].tokens != c[j].tokens;
  }
  EXPECT_TRUE(differs);
}

TEST(Sampling, HypothesesRecordStepDistributions) {
  const auto m = tiny_model();
  const auto src = tok::encode(toy_vocab(), "mi ka si");
  for (const auto& h : m.sample_hypotheses(src, 4, 1.0, 8, 3)) {
    ASSERT_EQ(h.step_distributions.size(), h.tokens.size());
    EXPECT_LE(h.tokens.size(), 8u);
    double lp = 0.0;
    for (std::size_t i = 0; i < h.tokens.size(); ++i) {
      const std::vector<int> prefix(h.tokens.begin(), h.tokens.begin() + static_cast<std::ptrdiff_t>(i));
      const auto p = m.forward(src, prefix);
      for (std::size_t k = 0; k < p.size(); ++k) EXPECT_NEAR(h.step_distributions[i][k], p[k], 1e-12);
      lp += std::log(p[static_cast<std::size_t>(h.tokens[i])]);
      if (i + 1 < h.tokens.size()) EXPECT_NE(h.tokens[i], Vocabulary::kEos);
    }
    EXPECT_NEAR(h.log_prob, lp, 1e-9);
  }
}

TEST(Sampling, PeakedModelFrequency) {
  const auto v = toy_vocab();
  std::vector<double> bias(v.size(), -60.0);
  bias[7] = std::log(0.9);
  bias[8] = std::log(0.1);
  const auto m = constant_model(bias);
  const auto hs = m.sample_hypotheses(tok::encode(v, "gu"), 20000, 1.0, 1, 11);
  std::size_t hits = 0;
  for (const auto& h : hs) hits += h.tokens[0] == 7;
  EXPECT_NEAR(static_cast<double>(hits) / 20000.0, 0.9, 0.01);
}

double chi_square(const std::vector<double>& probs, const HypothesisSet& hs, std::size_t first_id) {
  std::vector<double> counts(probs.size(), 0.0);
  for (const auto& h : hs) counts.at(static_cast<std::size_t>(h.tokens[0]) - first_id) += 1.0;
  double chi = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double e = probs[i] * static_cast<double>(hs.size());
    chi += (counts[i] - e) * (counts[i] - e) / e;
  }
  return chi;
}

TEST(Sampling, ChiSquareAgainstModelDistribution) {
  const auto v = toy_vocab();
  const std::vector<double> probs{0.1, 0.2, 0.3, 0.15, 0.25};
  std::vector<double> bias(v.size(), -60.0);
  for (std::size_t i = 0; i < probs.size(); ++i) bias[10 + i] = std::log(probs[i]);
  const auto m = constant_model(bias);
  // 18.47 is the 0.999 quantile of chi-square with 4 degrees of freedom.
  EXPECT_LT(chi_square(probs, m.sample_hypotheses(tok::encode(v, "gu"), 10000, 1.0, 1, 5), 10), 18.47);
  std::vector<double> sharp(probs.size());
  double z = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) z += (sharp[i] = probs[i] * probs[i]);
  for (double& x : sharp) x /= z;
  EXPECT_LT(chi_square(sharp, m.sample_hypotheses(tok::encode(v, "gu"), 10000, 0.5, 1, 6), 10), 18.47);
}

TEST(Checkpoint, RoundTripIsBitwise) {
  auto m = tiny_model(9);
  const auto path = (testing::scratch_dir("model") / "m.bin").string();
  m.save_checkpoint(path, 123, 77);
  Seq2SeqModel::CheckpointHeader h;
  const auto back = Seq2SeqModel::load_checkpoint(path, toy_vocab(), &h);
  EXPECT_EQ(back.flat_parameters(), m.flat_parameters());
  EXPECT_EQ(back.config(), m.config());
  EXPECT_EQ(h.step, 123u);
  EXPECT_EQ(h.train_seed, 77u);
  EXPECT_THROW(Seq2SeqModel::load_checkpoint(path, testing::ToyGrounding::make_model_vocab(50)), IoError);
  EXPECT_THROW(Seq2SeqModel::load_checkpoint(path + ".missing", toy_vocab()), IoError);
}

TEST(Checkpoint, FlatParametersRoundTrip) {
  auto m = tiny_model();
  auto flat = m.flat_parameters();
  for (double& x : flat) x *= 0.5;
  m.set_flat_parameters(flat);
  EXPECT_EQ(m.flat_parameters(), flat);
  EXPECT_THROW(m.set_flat_parameters(std::vector<double>(3)), InputError);
}

TEST(Model, GradientMatchesFiniteDifferences) {
  auto m = tiny_model(4);
  const auto v = toy_vocab();
  const auto src = tok::encode(v, "gu ka ra");
  auto tgt = tok::encode(v, "big cat runs");
  std::vector<int> prefix = tgt;
  tgt.push_back(Vocabulary::kEos);
  Matrix pick(tgt.size(), v.size());
  for (std::size_t i = 0; i < tgt.size(); ++i) pick(i, static_cast<std::size_t>(tgt[i])) = -1.0;
  auto loss_at = [&](const std::vector<double>& flat) {
    m.set_flat_parameters(flat);
    Tape t(false);
    return t.scalar(ad::weighted_sum(t, ad::log_softmax(t, m.logits(t, src, prefix)), pick));
  };
  const auto x0 = m.flat_parameters();
  Tape t(true);
  const auto g = gradient(m, t, ad::weighted_sum(t, ad::log_softmax(t, m.logits(t, src, prefix)), pick));
  std::size_t bad = 0;
  auto x = x0;
  const double h = 1e-6;
  for (std::size_t k = 0; k < x.size(); ++k) {
    x[k] = x0[k] + h;
    const double up = loss_at(x);
    x[k] = x0[k] - h;
    const double down = loss_at(x);
    x[k] = x0[k];
    const double fd = (up - down) / (2 * h);
    if (std::abs(fd - g[k]) > 1e-7 + 1e-5 * std::abs(fd)) ++bad;
  }
  EXPECT_EQ(bad, 0u);
}

}  // namespace
}  // namespace softalign::model
