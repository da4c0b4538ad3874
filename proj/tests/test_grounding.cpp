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

#include "softalign/grounding.hpp"
#include "test_util.hpp"

namespace softalign::grounding {
namespace {

ContextualEncoder toy_encoder(std::uint64_t seed = 3) {
  EncoderConfig cfg;
  cfg.dim = 8;
  cfg.seed = seed;
  return ContextualEncoder(testing::word_vocab(testing::toy_targets()), cfg, {{"big", "large"}});
}

int word_id(const ContextualEncoder& e, const std::string& w) {
  return *e.vocabulary().find(std::string(tok::kWordMarker) + w);
}

std::vector<EmbeddingVector> embed(const ContextualEncoder& e, const std::string& text) {
  return e.embed_contextual(tok::tokenize_with_spans(e.vocabulary(), text));
}

TEST(Encoder, EmptyInputGivesNoVectors) {
  const auto e = toy_encoder();
  EXPECT_TRUE(embed(e, "").empty());
  EXPECT_TRUE(embed(e, "   ").empty());
}

TEST(Encoder, OutputsAreUnitNorm) {
  const auto e = toy_encoder();
  for (const auto& s : testing::toy_targets())
    for (const auto& v : embed(e, s)) EXPECT_NEAR(l2_norm(v), 1.0, 1e-12);
}

TEST(Encoder, DeterministicAcrossInstances) {
  EXPECT_EQ(embed(toy_encoder(), "big dog runs"), embed(toy_encoder(), "big dog runs"));
  EXPECT_EQ(toy_encoder().checksum(), toy_encoder().checksum());
  EXPECT_NE(toy_encoder(3).checksum(), toy_encoder(4).checksum());
}

TEST(Encoder, VectorsDependOnContext) {
  const auto e = toy_encoder();
  const auto a = embed(e, "big dog runs");
  const auto b = embed(e, "small dog sits");
  EXPECT_GT(euclidean(a[1], b[1]), 1e-6);
}

TEST(Encoder, InputLayerIsContextFree) {
  EncoderConfig cfg;
  cfg.dim = 8;
  cfg.seed = 3;
  cfg.layer_index = 0;
  cfg.position_scale = 0.0;
  ContextualEncoder e(testing::word_vocab(testing::toy_targets()), cfg);
  const auto a = embed(e, "big dog runs");
  const auto b = embed(e, "small cat dog");
  for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(a[1][c], b[2][c], 1e-12);
}

TEST(Encoder, TiedWordsAreCloserThanUntied) {
  const auto e = toy_encoder();
  const auto big = e.static_embedding(word_id(e, "big"));
  const auto large = e.static_embedding(word_id(e, "large"));
  const auto cat = e.static_embedding(word_id(e, "cat"));
  EXPECT_LT(euclidean(big, large), euclidean(big, cat));
  EXPECT_LT(euclidean(big, large), 0.5);
}

TEST(Encoder, RejectsBadInput) {
  const auto e = toy_encoder();
  EXPECT_THROW(e.embed_ids(std::vector<int>{999}), InputError);
  EXPECT_THROW(e.static_embedding(-1), InputError);
  EncoderConfig cfg;
  cfg.dim = 0;
  EXPECT_THROW(ContextualEncoder(testing::word_vocab({"a"}), cfg), ConfigError);
}

TEST(Decontextualize, SingleOccurrenceIsStoredExactly) {
  const auto e = toy_encoder();
  const auto table = decontextualize(e, {"big dog runs"});
  const auto v = embed(e, "big dog runs");
  EXPECT_EQ(*table.lookup(word_id(e, "big")), v[0]);
  EXPECT_EQ(*table.lookup(word_id(e, "runs")), v[2]);
  EXPECT_EQ(table.count(word_id(e, "dog")), 1u);
  EXPECT_EQ(table.provenance(), Provenance::kDecontextualized);
}

TEST(Decontextualize, TwoOccurrencesAverageThenRenormalise) {
  const auto e = toy_encoder();
  const auto table = decontextualize(e, {"big dog runs", "small dog sits"});
  const auto a = embed(e, "big dog runs")[1];
  const auto b = embed(e, "small dog sits")[1];
  EmbeddingVector want(8);
  double n = 0.0;
  for (std::size_t c = 0; c < 8; ++c) n += (want[c] = (a[c] + b[c]) / 2.0) * want[c];
  n = std::sqrt(n);
  const auto* got = table.lookup(word_id(e, "dog"));
  ASSERT_NE(got, nullptr);
  for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR((*got)[c], want[c] / n, 1e-12);
  EXPECT_EQ(table.count(word_id(e, "dog")), 2u);
}

TEST(Decontextualize, UnseenWordsAreAbsent) {
  const auto e = toy_encoder();
  const auto table = decontextualize(e, {"big dog runs"});
  EXPECT_EQ(table.lookup(word_id(e, "cat")), nullptr);
  EXPECT_EQ(table.count(word_id(e, "cat")), 0u);
  EXPECT_EQ(table.size(), 3u);
}

TEST(Decontextualize, InvariantToSentenceOrder) {
  const auto e = toy_encoder();
  auto corpus = testing::toy_targets();
  const auto ref = decontextualize(e, corpus);
  Rng rng(8);
  for (int i = 0; i < 5; ++i) {
    rng.shuffle(corpus);
    EXPECT_EQ(decontextualize(e, corpus).checksum(), ref.checksum());
  }
}

TEST(Decontextualize, SumsAreAdditiveOverCorpora) {
  const auto e = toy_encoder();
  const auto corpus = testing::toy_targets();
  const std::vector<std::string> first(corpus.begin(), corpus.begin() + 3);
  const std::vector<std::string> second(corpus.begin() + 3, corpus.end());
  const auto all = accumulate_contextual(e, corpus);
  const auto a = accumulate_contextual(e, first);
  const auto b = accumulate_contextual(e, second);
  for (const auto& [id, entry] : all.sums()) {
    EXPECT_EQ(entry.count, a.count(id) + b.count(id));
    for (std::size_t c = 0; c < 8; ++c) {
      double want = 0.0;
      if (a.count(id)) want += a.sums().at(id).vector[c];
      if (b.count(id)) want += b.sums().at(id).vector[c];
      EXPECT_NEAR(entry.vector[c], want, 1e-12);
    }
  }
}

TEST(Decontextualize, EntriesAreUnitNorm) {
  const auto e = toy_encoder();
  const auto table = decontextualize(e, testing::toy_targets());
  for (const auto& [id, entry] : table.entries())
    EXPECT_NEAR(l2_norm(entry.vector), 1.0, 1e-12) << id;
}

TEST(Decontextualize, EmptyCorpusThrows) {
  EXPECT_THROW(decontextualize(toy_encoder(), {}), InputError);
}

TEST(Decontextualize, FrozenChecksums) {
  const auto e = toy_encoder();
  EXPECT_EQ(e.checksum(), 9904494536478165786ULL);
  EXPECT_EQ(decontextualize(e, testing::toy_targets()).checksum(), 7396048659736345237ULL);
}

TEST(GroundingTable, SaveLoadIsBitwise) {
  const auto e = toy_encoder();
  const auto table = decontextualize(e, testing::toy_targets(), "alpha");
  const auto path = (testing::scratch_dir("grounding") / "t.sagt").string();
  table.save(path);
  const auto back = GroundingTable::load(path);
  EXPECT_EQ(back.checksum(), table.checksum());
  EXPECT_EQ(back.domain(), "alpha");
  EXPECT_EQ(back.dim(), 8u);
  EXPECT_EQ(back.provenance(), Provenance::kDecontextualized);
  for (const auto& [id, entry] : table.entries()) {
    EXPECT_EQ(back.lookup(id)->size(), entry.vector.size());
    EXPECT_EQ(*back.lookup(id), entry.vector);
    EXPECT_EQ(back.count(id), entry.count);
  }
}

TEST(GroundingTable, RejectsBadEntries) {
  GroundingTable t(3, Provenance::kStatic);
  EXPECT_THROW(t.insert(5, {1.0, 0.0}, 1), InputError);
  EXPECT_THROW(t.insert(5, {1.0, 0.0, 0.0}, 0), InputError);
}

TEST(StaticTable, CoversEveryNonSpecialEntry) {
  const auto e = toy_encoder();
  const auto t = static_table(e);
  EXPECT_EQ(t.size(), e.vocabulary().size() - tok::Vocabulary::kNumSpecial);
  EXPECT_EQ(*t.lookup(word_id(e, "cat")), e.static_embedding(word_id(e, "cat")));
  EXPECT_EQ(t.lookup(tok::Vocabulary::kUnk), nullptr);
}

TEST(Vectors, NormalisingZeroThrows) {
  EXPECT_THROW(normalized({0.0, 0.0}), NumericError);
  EXPECT_THROW(euclidean(std::vector<double>{1.0}, std::vector<double>{1.0, 2.0}), InputError);
}

}  // namespace
}  // namespace softalign::grounding
