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

// Span matching between the trained model's subwords and the grounding
// embedder's subwords, alignment scores, and the soft target builders.
//
// Scores use A = 1 - d/2 over unit-norm embeddings, which keeps A in [0, 1].

#pragma once

#include <functional>
#include <map>
#include <numeric>
#include <optional>

#include "softalign/grounding.hpp"
#include "softalign/tokenizer.hpp"

namespace softalign::align {

using grounding::EmbeddingVector;
using tok::Span;
using tok::Vocabulary;

/// pairs[i] = index of the embedder span matched to model span i.
using SpanMatching = std::vector<std::size_t>;

inline void check_span_list(const std::vector<Span>& spans, const char* which) {
  for (std::size_t i = 0; i < spans.size(); ++i) {
    if (spans[i].start >= spans[i].end)
      throw InputError(std::string(which) + " span " + std::to_string(i) + " is empty or reversed");
    if (i > 0 && spans[i].start < spans[i - 1].end)
      throw InputError(std::string(which) + " spans are unordered or overlapping at " + std::to_string(i));
  }
}

/// Matches every model span to the embedder span of largest character
/// overlap (ties go to the earlier embedder span). One forward sweep over
/// both lists.
inline SpanMatching align_to_grounding(const std::vector<Span>& model_spans, const std::vector<Span>& emb_spans) {
  check_span_list(model_spans, "model");
  check_span_list(emb_spans, "embedder");
  SpanMatching pairs(model_spans.size());
  std::size_t j = 0;
  for (std::size_t i = 0; i < model_spans.size(); ++i) {
    const Span& s = model_spans[i];
    while (j < emb_spans.size() && emb_spans[j].end <= s.start) ++j;
    std::size_t best = emb_spans.size();
    std::size_t best_cov = 0;
    for (std::size_t k = j; k < emb_spans.size() && emb_spans[k].start < s.end; ++k) {
      const std::size_t cov = tok::overlap(s, emb_spans[k]);
      if (cov > best_cov) {
        best = k;
        best_cov = cov;
      }
    }
    if (best == emb_spans.size())
      throw InputError("model span " + std::to_string(i) + " overlaps no embedder span");
    pairs[i] = best;
  }
  return pairs;
}

inline void check_unit(std::span<const double> v, const char* what) {
  const double n = grounding::l2_norm(v);
  if (!(std::abs(n - 1.0) <= 1e-6)) throw InputError(std::string(what) + " is not unit-norm");
}

/// A(e, t2) = 1 - min_j |e - e_j| / 2 over unit vectors.
inline double alignment_score(std::span<const double> token_emb, const std::vector<EmbeddingVector>& reference_embs) {
  if (reference_embs.empty()) throw InputError("alignment_score: empty reference");
  check_unit(token_emb, "token embedding");
  double best = std::numeric_limits<double>::infinity();
  for (const auto& r : reference_embs) {
    check_unit(r, "reference embedding");
    best = std::min(best, grounding::euclidean(token_emb, r));
  }
  return std::clamp(1.0 - best / 2.0, 0.0, 1.0);
}

// ----------------------------------------------------------------------------
// Grounding of the trained model's vocabulary.
// ----------------------------------------------------------------------------

/// One grounding vector (or none) per model vocabulary id.
struct VocabGrounding {
  std::vector<std::optional<EmbeddingVector>> vectors;
  std::vector<int> embedder_id;  // matched embedder subword, -1 if none

  const EmbeddingVector* at(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= vectors.size()) return nullptr;
    return vectors[static_cast<std::size_t>(id)] ? &*vectors[static_cast<std::size_t>(id)] : nullptr;
  }
};

/// Assigns each model subword the table vector of the embedder subword it is
/// matched to most often in `corpus` (ties → smaller embedder id). Entries
/// that never occur fall back to matching their own surface form.
inline VocabGrounding ground_vocabulary(const Vocabulary& model_vocab, const Vocabulary& emb_vocab,
                                        const grounding::GroundingTable& table,
                                        const std::vector<std::string>& corpus) {
  std::vector<std::map<int, std::size_t>> counts(model_vocab.size());
  for (const auto& text : corpus) {
    const auto mp = tok::tokenize_with_spans(model_vocab, text);
    const auto ep = tok::tokenize_with_spans(emb_vocab, text);
    if (mp.empty()) continue;
    const auto pairs = align_to_grounding(tok::spans_of(mp), tok::spans_of(ep));
    for (std::size_t i = 0; i < mp.size(); ++i) ++counts[static_cast<std::size_t>(mp[i].id)][ep[pairs[i]].id];
  }
  VocabGrounding g;
  g.vectors.resize(model_vocab.size());
  g.embedder_id.assign(model_vocab.size(), -1);
  for (std::size_t id = Vocabulary::kNumSpecial; id < model_vocab.size(); ++id) {
    int best = -1;
    std::size_t best_count = 0;
    for (const auto& [eid, c] : counts[id]) {
      if (c > best_count && table.lookup(eid)) {
        best = eid;
        best_count = c;
      }
    }
    if (best < 0) {
      // Unseen in the corpus: match the piece's own surface form.
      const std::string surface = model_vocab.surface(static_cast<int>(id));
      const auto ep = tok::tokenize_with_spans(emb_vocab, surface);
      if (!ep.empty()) {
        const std::vector<Span> self{Span{0, utf8_decode(surface).size()}};
        const auto pairs = align_to_grounding(self, tok::spans_of(ep));
        if (table.lookup(ep[pairs[0]].id)) best = ep[pairs[0]].id;
      }
    }
    if (best >= 0) {
      g.embedder_id[id] = best;
      g.vectors[id] = *table.lookup(best);
    }
  }
  return g;
}

/// Table vectors of the reference's embedder subwords (absent ones skipped).
inline std::vector<EmbeddingVector> reference_table_embeddings(std::string_view reference, const Vocabulary& emb_vocab,
                                                              const grounding::GroundingTable& table) {
  std::vector<EmbeddingVector> out;
  for (const auto& p : tok::tokenize_with_spans(emb_vocab, reference))
    if (const auto* v = table.lookup(p.id)) out.push_back(*v);
  return out;
}

// ----------------------------------------------------------------------------
// Target vectors.
// ----------------------------------------------------------------------------

/// Dense alignment scores over the whole model vocabulary. The eos coordinate
/// is left at 0; at_step() sets it for the terminal step.
struct DenseTarget {
  std::vector<double> scores;

  std::vector<double> at_step(std::size_t step, std::size_t terminal_step) const {
    std::vector<double> s = scores;
    s[Vocabulary::kEos] = step == terminal_step ? 1.0 : 0.0;
    return s;
  }
};

/// Sparse top-n target: (token id, score); every other coordinate is 0.
struct SparseTarget {
  std::vector<std::pair<int, double>> entries;

  std::size_t nonzeros() const {
    return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(),
                                                  [](const auto& e) { return e.second != 0.0; }));
  }
};

/// Dense scores from per-vocab grounding vectors; ids without a vector and
/// special tokens score 0.
inline DenseTarget vocab_alignment_scores(const std::vector<const EmbeddingVector*>& vocab_embs,
                                          const std::vector<EmbeddingVector>& reference_embs) {
  if (reference_embs.empty()) throw InputError("build_vocab_targets: reference has no grounding vectors");
  DenseTarget t;
  t.scores.assign(vocab_embs.size(), 0.0);
  for (std::size_t id = Vocabulary::kNumSpecial; id < vocab_embs.size(); ++id)
    if (vocab_embs[id]) t.scores[id] = alignment_score(*vocab_embs[id], reference_embs);
  return t;
}

inline DenseTarget build_vocab_targets(std::string_view reference, const VocabGrounding& vg,
                                       const Vocabulary& emb_vocab, const grounding::GroundingTable& table) {
  if (tok::tokenize_with_spans(emb_vocab, reference).empty())
    throw InputError("build_vocab_targets: reference tokenizes to nothing");
  std::vector<const EmbeddingVector*> embs(vg.vectors.size());
  for (std::size_t i = 0; i < embs.size(); ++i) embs[i] = vg.at(static_cast<int>(i));
  return vocab_alignment_scores(embs, reference_table_embeddings(reference, emb_vocab, table));
}

/// The n most probable ids, descending, ties → lower id.
inline std::vector<int> top_n_ids(std::span<const double> distribution, std::size_t n) {
  if (n > distribution.size()) {
    warn("top-n size " + std::to_string(n) + " exceeds vocabulary size; clamped to " +
         std::to_string(distribution.size()));
    n = distribution.size();
  }
  std::vector<int> ids(distribution.size());
  std::iota(ids.begin(), ids.end(), 0);
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n), ids.end(), [&](int a, int b) {
    const double pa = distribution[static_cast<std::size_t>(a)], pb = distribution[static_cast<std::size_t>(b)];
    return pa > pb || (pa == pb && a < b);
  });
  ids.resize(n);
  return ids;
}

/// Top-n support with scores from `score_of(id)`.
inline SparseTarget build_topn(std::span<const double> distribution, std::size_t n,
                               const std::function<double(int)>& score_of) {
  SparseTarget t;
  for (int id : top_n_ids(distribution, n)) t.entries.emplace_back(id, score_of(id));
  return t;
}

/// Contextual scoring of hypothesis tokens against a reference, both embedded
/// by the frozen encoder in their full sentence context.
class ContextualScorer {
 public:
  ContextualScorer(const Vocabulary& model_vocab, const grounding::ContextualEncoder& encoder)
      : model_vocab_(&model_vocab), encoder_(&encoder) {}

  std::vector<EmbeddingVector> reference_embeddings(std::string_view reference) const {
    return encoder_->embed_contextual(tok::tokenize_with_spans(encoder_->vocabulary(), reference));
  }

  /// Embedding of the model token at `position` of `ids`, read from the
  /// embedder subword with the largest overlap. None for specials.
  /// Memo of encoder outputs keyed by embedder id sequence.
  using Cache = std::map<std::vector<int>, std::vector<EmbeddingVector>>;

  std::optional<EmbeddingVector> token_in_context(std::span<const int> ids, std::size_t position,
                                                  Cache* cache = nullptr) const {
    const auto r = tok::render(*model_vocab_, ids);
    if (position >= ids.size() || !r.spans[position] || ids[position] == Vocabulary::kUnk) return std::nullopt;
    const auto ep = tok::tokenize_with_spans(encoder_->vocabulary(), r.text);
    const auto pairs = align_to_grounding({*r.spans[position]}, tok::spans_of(ep));
    if (!cache) return std::move(encoder_->embed_contextual(ep)[pairs[0]]);
    auto key = tok::ids_of(ep);
    auto it = cache->find(key);
    if (it == cache->end()) it = cache->emplace(std::move(key), encoder_->embed_contextual(ep)).first;
    return it->second[pairs[0]];
  }

  const Vocabulary& model_vocab() const { return *model_vocab_; }
  const grounding::ContextualEncoder& encoder() const { return *encoder_; }

 private:
  const Vocabulary* model_vocab_;
  const grounding::ContextualEncoder* encoder_;
};

/// Special-token convention shared by the sequential targets: eos scores 1
/// exactly at the terminal step, other specials 0.
inline std::optional<double> special_score(int id, std::size_t step, std::size_t terminal_step) {
  if (id == Vocabulary::kEos) return step == terminal_step ? 1.0 : 0.0;
  if (Vocabulary::is_special(id)) return 0.0;
  return std::nullopt;
}

/// Top-n targets at `step` of a hypothesis: each candidate is substituted at
/// that position, the whole hypothesis is embedded, and the candidate's
/// vector is scored against the reference's contextual vectors.
inline SparseTarget build_topn_targets(std::span<const double> step_distribution, std::span<const int> hypothesis,
                                       std::size_t step, const std::vector<EmbeddingVector>& reference_embs,
                                       const ContextualScorer& scorer, std::size_t n, std::size_t terminal_step,
                                       ContextualScorer::Cache* cache = nullptr) {
  double mass = 0.0;
  for (double p : step_distribution) mass += p;
  if (std::abs(mass - 1.0) > 1e-6) throw InputError("build_topn_targets: distribution does not sum to 1");
  std::vector<int> ctx(hypothesis.begin(), hypothesis.end());
  if (step >= ctx.size()) ctx.resize(step + 1, Vocabulary::kEos);
  return build_topn(step_distribution, n, [&](int id) {
    if (const auto s = special_score(id, step, terminal_step)) return *s;
    std::vector<int> variant = ctx;
    variant[step] = id;
    const auto e = scorer.token_in_context(variant, step, cache);
    return e ? alignment_score(*e, reference_embs) : 0.0;
  });
}

/// As build_topn_targets but with decontextualised vectors from a table.
inline SparseTarget build_topn_targets_table(std::span<const double> step_distribution, const VocabGrounding& vg,
                                             const std::vector<EmbeddingVector>& reference_embs, std::size_t n,
                                             std::size_t step, std::size_t terminal_step) {
  return build_topn(step_distribution, n, [&](int id) {
    if (const auto s = special_score(id, step, terminal_step)) return *s;
    const auto* e = vg.at(id);
    return e && !reference_embs.empty() ? alignment_score(*e, reference_embs) : 0.0;
  });
}

}  // namespace softalign::align
