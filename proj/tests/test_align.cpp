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

#include "softalign/align.hpp"
#include "test_util.hpp"

namespace softalign::align {
namespace {

std::vector<Span> random_tiling(std::size_t length, Rng& rng, bool gaps) {
  std::vector<Span> out;
  std::size_t pos = 0;
  while (pos < length) {
    const std::size_t w = 1 + rng.below(std::min<std::size_t>(4, length - pos));
    if (!gaps || rng.uniform() < 0.8 || out.empty()) out.push_back({pos, pos + w});
    pos += w;
  }
  return out;
}

TEST(SpanMatching, IdenticalTokenizationsMatchOneToOne) {
  const std::vector<Span> s{{0, 3}, {4, 6}, {6, 9}};
  EXPECT_EQ(align_to_grounding(s, s), (SpanMatching{0, 1, 2}));
}

TEST(SpanMatching, CoarseToFineExample) {
  EXPECT_EQ(align_to_grounding({{0, 3}, {3, 7}}, {{0, 2}, {2, 5}, {5, 7}}), (SpanMatching{0, 1}));
}

TEST(SpanMatching, TiesGoToEarlierSpan) {
  EXPECT_EQ(align_to_grounding({{0, 4}}, {{0, 2}, {2, 4}}), (SpanMatching{0}));
}

TEST(SpanMatching, AgreesWithBruteForceOnRandomTilings) {
  Rng rng(17);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t len = 1 + rng.below(30);
    const auto model = random_tiling(len, rng, false);
    const auto emb = random_tiling(len, rng, false);
    const auto got = align_to_grounding(model, emb);
    for (std::size_t i = 0; i < model.size(); ++i) {
      std::size_t best = 0, best_cov = 0;
      for (std::size_t k = 0; k < emb.size(); ++k) {
        const std::size_t lo = std::max(model[i].start, emb[k].start);
        const std::size_t hi = std::min(model[i].end, emb[k].end);
        const std::size_t cov = hi > lo ? hi - lo : 0;
        if (cov > best_cov) best = k, best_cov = cov;
      }
      ASSERT_EQ(got[i], best) << "trial " << trial << " span " << i;
    }
  }
}

TEST(SpanMatching, RejectsMalformedInput) {
  EXPECT_THROW(align_to_grounding({{2, 2}}, {{0, 3}}), InputError);
  EXPECT_THROW(align_to_grounding({{0, 3}, {1, 4}}, {{0, 4}}), InputError);
  EXPECT_THROW(align_to_grounding({{5, 6}}, {{0, 3}}), InputError);
}

TEST(AlignmentScore, PinnedValues) {
  const std::vector<double> e{1.0, 0.0};
  EXPECT_DOUBLE_EQ(alignment_score(e, {{1.0, 0.0}}), 1.0);
  EXPECT_DOUBLE_EQ(alignment_score(e, {{-1.0, 0.0}}), 0.0);
  EXPECT_NEAR(alignment_score(e, {{0.6, 0.8}}), 1.0 - std::sqrt(0.8) / 2.0, 1e-15);
  EXPECT_NEAR(alignment_score(e, {{0.6, 0.8}}), 0.5528, 1e-4);
  EXPECT_NEAR(alignment_score(e, {{0.0, 1.0}, {0.6, 0.8}}), 0.5528, 1e-4);
}

std::vector<double> random_unit(std::size_t d, Rng& rng) {
  std::vector<double> v(d);
  for (double& x : v) x = rng.normal();
  return grounding::normalized(v);
}

TEST(AlignmentScore, InUnitIntervalAndInvariantToReferenceOrder) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const auto e = random_unit(6, rng);
    std::vector<EmbeddingVector> ref;
    for (int i = 0; i < 5; ++i) ref.push_back(random_unit(6, rng));
    const double a = alignment_score(e, ref);
    EXPECT_GE(a, 0.0);
    EXPECT_LE(a, 1.0);
    rng.shuffle(ref);
    EXPECT_EQ(alignment_score(e, ref), a);
    ref.push_back(random_unit(6, rng));
    EXPECT_GE(alignment_score(e, ref), a);
    ref.push_back(e);
    EXPECT_DOUBLE_EQ(alignment_score(e, ref), 1.0);
  }
}

TEST(AlignmentScore, RejectsBadInput) {
  EXPECT_THROW(alignment_score(std::vector<double>{1.0, 0.0}, {}), InputError);
  EXPECT_THROW(alignment_score(std::vector<double>{2.0, 0.0}, {{1.0, 0.0}}), InputError);
}

TEST(VocabTargets, SynonymsScoreAlikeAndSpecialsScoreZero) {
  testing::ToyGrounding g;
  const auto t = build_vocab_targets("big dog runs", g.vocab, g.emb_vocab, g.table);
  ASSERT_EQ(t.scores.size(), g.model_vocab.size());
  for (int id = 0; id < tok::Vocabulary::kNumSpecial; ++id) EXPECT_EQ(t.scores[static_cast<std::size_t>(id)], 0.0);
  for (double s : t.scores) {
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 1.0);
  }
  const auto big = g.model_vocab.find(std::string(tok::kWordMarker) + "big");
  const auto large = g.model_vocab.find(std::string(tok::kWordMarker) + "large");
  const auto cat = g.model_vocab.find(std::string(tok::kWordMarker) + "cat");
  ASSERT_TRUE(big && large && cat);
  EXPECT_NEAR(t.scores[static_cast<std::size_t>(*big)], 1.0, 1e-9);
  EXPECT_GT(t.scores[static_cast<std::size_t>(*large)], t.scores[static_cast<std::size_t>(*cat)]);
  const auto swapped = build_vocab_targets("large dog runs", g.vocab, g.emb_vocab, g.table);
  EXPECT_NEAR(swapped.scores[static_cast<std::size_t>(*large)], 1.0, 1e-9);
  EXPECT_NEAR(swapped.scores[static_cast<std::size_t>(*big)], t.scores[static_cast<std::size_t>(*large)], 1e-12);
}

TEST(VocabTargets, EosOnlyAtTerminalStep) {
  DenseTarget t;
  t.scores.assign(10, 0.3);
  EXPECT_EQ(t.at_step(4, 4)[tok::Vocabulary::kEos], 1.0);
  EXPECT_EQ(t.at_step(2, 4)[tok::Vocabulary::kEos], 0.0);
  EXPECT_EQ(t.at_step(2, 4)[7], 0.3);
}

TEST(VocabTargets, EmptyReferenceThrows) {
  testing::ToyGrounding g;
  EXPECT_THROW(build_vocab_targets("   ", g.vocab, g.emb_vocab, g.table), InputError);
}

TEST(TopN, MatchesFullSortOracle) {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> p(20);
    for (double& x : p) x = std::floor(rng.uniform() * 6.0);
    const std::size_t n = 1 + rng.below(20);
    std::vector<int> all(20);
    std::iota(all.begin(), all.end(), 0);
    std::stable_sort(all.begin(), all.end(), [&](int a, int b) { return p[a] > p[b]; });
    all.resize(n);
    EXPECT_EQ(top_n_ids(p, n), all);
  }
}

TEST(TopN, ClampsOversizedN) {
  const std::vector<double> p{0.2, 0.5, 0.3};
  EXPECT_EQ(top_n_ids(p, 10), (std::vector<int>{1, 2, 0}));
}

TEST(TopN, TargetHasAtMostNNonzeros) {
  testing::ToyGrounding g;
  const std::size_t V = g.model_vocab.size();
  Rng rng(2);
  const auto ref = reference_table_embeddings("big dog runs", g.emb_vocab, g.table);
  for (std::size_t n : {1u, 3u, 10u}) {
    std::vector<double> p(V);
    double z = 0.0;
    for (double& x : p) z += (x = rng.uniform());
    for (double& x : p) x /= z;
    const auto t = build_topn_targets_table(p, g.vocab, ref, n, 1, 3);
    EXPECT_EQ(t.entries.size(), n);
    EXPECT_LE(t.nonzeros(), n);
    const auto top = top_n_ids(p, n);
    for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(t.entries[i].first, top[i]);
  }
}

TEST(TopN, ContextualTargetsScoreReferenceTokensHighest) {
  testing::ToyGrounding g;
  const auto hyp = tok::encode(g.model_vocab, "big dog runs");
  const auto ref = g.scorer.reference_embeddings("big dog runs");
  const std::size_t V = g.model_vocab.size();
  std::vector<double> p(V, 1.0 / static_cast<double>(V));
  ContextualScorer::Cache cache;
  const auto t = build_topn_targets(p, hyp, 0, ref, g.scorer, V, hyp.size(), &cache);
  const auto uncached = build_topn_targets(p, hyp, 0, ref, g.scorer, V, hyp.size());
  EXPECT_EQ(t.entries, uncached.entries);
  double at_hyp = -1.0, best = -1.0;
  for (const auto& [id, s] : t.entries) {
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 1.0);
    if (id == hyp[0]) at_hyp = s;
    best = std::max(best, s);
  }
  EXPECT_NEAR(at_hyp, 1.0, 1e-9);
  EXPECT_EQ(at_hyp, best);
  std::vector<double> bad(V, 0.5);
  EXPECT_THROW(build_topn_targets(bad, hyp, 0, ref, g.scorer, 3, hyp.size()), InputError);
}

TEST(SpecialScore, EosConvention) {
  EXPECT_EQ(*special_score(tok::Vocabulary::kEos, 3, 3), 1.0);
  EXPECT_EQ(*special_score(tok::Vocabulary::kEos, 2, 3), 0.0);
  EXPECT_EQ(*special_score(tok::Vocabulary::kPad, 3, 3), 0.0);
  EXPECT_FALSE(special_score(tok::Vocabulary::kNumSpecial, 3, 3).has_value());
}

}  // namespace
}  // namespace softalign::align
