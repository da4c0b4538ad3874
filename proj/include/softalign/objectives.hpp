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

// Training objectives. Every loss is recorded on a caller-owned Tape; the
// grounding side (tables, encoder, targets) only ever enters as constants.
//
// Kernels operate on logits so they can be checked against hand-computed
// cases without a model; the *_loss functions wire them to Seq2SeqModel.

#pragma once

#include <array>

#include "softalign/align.hpp"
#include "softalign/corpus.hpp"
#include "softalign/model.hpp"

namespace softalign::obj {

using ad::Matrix;
using ad::Tape;
using ad::Var;
using model::Hypothesis;
using model::HypothesisSet;
using model::Seq2SeqModel;
using tok::Vocabulary;

enum class Kind { kMle, kSmoothing, kTAlign, kSAlign, kSRand, kSAlignDec, kSce };

inline constexpr std::array<Kind, 7> kAllKinds = {Kind::kMle,   Kind::kSmoothing, Kind::kTAlign, Kind::kSAlign,
                                                  Kind::kSRand, Kind::kSAlignDec, Kind::kSce};

inline std::string to_string(Kind k) {
  switch (k) {
    case Kind::kMle: return "mle";
    case Kind::kSmoothing: return "smoothing";
    case Kind::kTAlign: return "talign";
    case Kind::kSAlign: return "salign";
    case Kind::kSRand: return "srand";
    case Kind::kSAlignDec: return "salign_dec";
    case Kind::kSce: return "sce";
  }
  return "?";
}

inline Kind parse_kind(std::string_view s) {
  for (Kind k : kAllKinds)
    if (to_string(k) == s) return k;
  throw ConfigError("unknown objective '" + std::string(s) + "'");
}

/// Objectives conditioned on the model's own sampled prefixes.
inline bool uses_hypotheses(Kind k) {
  return k == Kind::kSAlign || k == Kind::kSRand || k == Kind::kSAlignDec || k == Kind::kSce;
}

/// Objectives that add a weighted complement to MLE.
inline bool has_extra(Kind k) { return k != Kind::kMle && k != Kind::kSmoothing; }

struct ObjectiveConfig {
  Kind kind = Kind::kMle;
  double alpha = 1.0;
  bool auto_alpha = false;  // replace alpha by the calibrated ratio before training
  std::size_t K = 10;
  std::size_t n = 3;
  double temperature_targets = 1.0;
  double smoothing_eps = 0.1;
  double sample_temperature = 1.0;
  double max_len_factor = 2.0;  // hypothesis length cap relative to the reference

  void validate() const {
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("objective: alpha must be >= 0");
    if (K < 1) throw ConfigError("objective: K must be >= 1");
    if (n < 1) throw ConfigError("objective: n must be >= 1");
    if (!(temperature_targets > 0.0)) throw ConfigError("objective: temperature_targets must be > 0");
    if (!(smoothing_eps >= 0.0 && smoothing_eps < 1.0)) throw ConfigError("objective: smoothing_eps must be in [0,1)");
    if (!(sample_temperature > 0.0)) throw ConfigError("objective: sample_temperature must be > 0");
    if (!(max_len_factor > 0.0)) throw ConfigError("objective: max_len_factor must be > 0");
  }
};

struct LossValue {
  double total = 0.0;
  double mle_part = 0.0;
  double extra_part = 0.0;
};

/// A recorded loss: the tape node and its decomposition.
struct RecordedLoss {
  Var var;
  LossValue value;
};

// ----------------------------------------------------------------------------
// Kernels.
// ----------------------------------------------------------------------------

/// Row-wise softmax(scores / temperature).
inline Matrix soft_targets(Matrix scores, double temperature) {
  for (double& v : scores.data) v /= temperature;
  ad::kernel::softmax_rows_inplace(scores);
  return scores;
}

/// Mean over rows of the cross-entropy −Σ_c Q(r,c)·log softmax(z)(r,c).
/// Each row of Q must be a distribution.
inline Var soft_ce(Tape& t, Var logits, const Matrix& q, double weight = 1.0) {
  ad::check_same_shape(t.value(logits), q, "soft_ce");
  Matrix w = q;
  const double s = -weight / static_cast<double>(q.rows);
  for (double& v : w.data) v *= s;
  return ad::weighted_sum(t, ad::log_softmax(t, logits), std::move(w));
}

/// One-hot targets at `ids` (rows of logits).
inline Matrix one_hot(std::size_t vocab, std::span<const int> ids) {
  Matrix q(ids.size(), vocab);
  for (std::size_t r = 0; r < ids.size(); ++r) q(r, static_cast<std::size_t>(ids[r])) = 1.0;
  return q;
}

/// (1 − eps) at the reference token and eps/(|V|−1) elsewhere.
inline Matrix smoothed_targets(std::size_t vocab, std::span<const int> ids, double eps) {
  if (vocab < 2) throw InputError("smoothing needs |V| >= 2");
  Matrix q(ids.size(), vocab, eps / static_cast<double>(vocab - 1));
  for (std::size_t r = 0; r < ids.size(); ++r) q(r, static_cast<std::size_t>(ids[r])) = 1.0 - eps;
  return q;
}

/// Per-row support and scores of sparse top-n targets.
using SparseRows = std::vector<align::SparseTarget>;

/// weight · Σ_rows Σ_{(c, a) in row} |softmax(z)(r, c) − a|. Only listed
/// coordinates are read.
inline Var sparse_l1(Tape& t, Var logits, const SparseRows& targets, double weight) {
  const Matrix& z = t.value(logits);
  if (targets.size() != z.rows) throw InputError("sparse_l1: one target per row required");
  std::vector<ad::AbsTerm> terms;
  for (std::size_t r = 0; r < targets.size(); ++r)
    for (const auto& [id, a] : targets[r].entries)
      terms.push_back(ad::AbsTerm{r, static_cast<std::size_t>(id), a, weight});
  return ad::sparse_abs_sum(t, ad::softmax(t, logits), std::move(terms));
}

/// Restriction of dense per-row targets to the top-n ids of each row of
/// `distributions`.
inline SparseRows restrict_to_top_n(const Matrix& dense, const Matrix& distributions, std::size_t n) {
  ad::check_same_shape(dense, distributions, "restrict_to_top_n");
  SparseRows out(dense.rows);
  for (std::size_t r = 0; r < dense.rows; ++r) {
    const std::span<const double> row(distributions.row_ptr(r), distributions.cols);
    for (int id : align::top_n_ids(row, n)) out[r].entries.emplace_back(id, dense(r, static_cast<std::size_t>(id)));
  }
  return out;
}

/// Uniform [0,1) scores on the top-n support of each row.
inline SparseRows random_top_n(const Matrix& distributions, std::size_t n, Rng& rng) {
  SparseRows out(distributions.rows);
  for (std::size_t r = 0; r < distributions.rows; ++r) {
    const std::span<const double> row(distributions.row_ptr(r), distributions.cols);
    for (int id : align::top_n_ids(row, n)) out[r].entries.emplace_back(id, rng.uniform());
  }
  return out;
}

inline LossValue combine(const LossValue& mle, const LossValue& extra, double alpha) {
  if (!std::isfinite(mle.total) || !std::isfinite(extra.total)) throw NumericError("combine: non-finite component");
  return LossValue{mle.total + alpha * extra.total, mle.total, extra.total};
}

inline Var combine(Tape& t, Var mle, Var extra, double alpha) { return ad::add_scaled(t, mle, extra, alpha); }

/// Ratio of mean MLE to mean complement over the first ten evaluations.
inline double auto_balance_alpha(std::span<const double> mle_history, std::span<const double> extra_history) {
  constexpr std::size_t kCalibration = 10;
  if (mle_history.size() < kCalibration || extra_history.size() < kCalibration)
    throw InputError("auto_balance_alpha: needs at least 10 evaluations of each component");
  double m = 0.0, e = 0.0;
  for (std::size_t i = 0; i < kCalibration; ++i) {
    m += mle_history[i];
    e += extra_history[i];
  }
  m /= static_cast<double>(kCalibration);
  e /= static_cast<double>(kCalibration);
  if (e == 0.0) {
    warn("auto_balance_alpha: complement mean is zero; using alpha = 1");
    return 1.0;
  }
  return m / e;
}

// ----------------------------------------------------------------------------
// Model-level losses.
// ----------------------------------------------------------------------------

/// One training example in model ids, with the reference text kept for the
/// grounding side.
struct Sample {
  std::vector<int> source;
  std::vector<int> reference;  // without eos
  std::string reference_text;
};

inline Sample make_sample(const Vocabulary& vocab, const corpus::SentencePair& p) {
  Sample s{tok::encode(vocab, p.source), tok::encode(vocab, p.target), p.target};
  if (s.reference.empty()) throw InputError("empty reference: '" + p.target + "'");
  return s;
}

/// Reference ids followed by eos: the teacher-forced prediction targets.
inline std::vector<int> with_eos(const std::vector<int>& ids) {
  std::vector<int> out = ids;
  out.push_back(Vocabulary::kEos);
  return out;
}

/// Frozen grounding resources. `table` holds decontextualised vectors and
/// `vocab` maps model ids onto it; `scorer` serves the contextual variant.
struct Grounding {
  const Vocabulary* emb_vocab = nullptr;
  const grounding::GroundingTable* table = nullptr;
  const align::VocabGrounding* vocab = nullptr;
  const align::ContextualScorer* scorer = nullptr;
};

inline void require_table(const Grounding& g, std::string_view what) {
  if (!g.emb_vocab || !g.table || !g.vocab) throw ConfigError(std::string(what) + ": grounding table not provided");
  if (g.table->provenance() != grounding::Provenance::kDecontextualized)
    throw InputError(std::string(what) + ": table provenance must be decontextualized, got " +
                     grounding::to_string(g.table->provenance()));
}

/// Teacher-forced logits for the reference (rows = |reference| + 1).
inline Var reference_logits(Tape& t, Seq2SeqModel& m, const Sample& s) { return m.logits(t, s.source, s.reference); }

inline RecordedLoss mle_loss(Tape& t, Seq2SeqModel& m, const Sample& s) {
  if (s.reference.empty()) throw InputError("mle_loss: empty reference");
  const Var z = reference_logits(t, m, s);
  const Var l = soft_ce(t, z, one_hot(m.vocab().size(), with_eos(s.reference)));
  const double v = t.scalar(l);
  return {l, {v, v, 0.0}};
}

inline RecordedLoss smoothing_loss(Tape& t, Seq2SeqModel& m, const Sample& s, double eps) {
  if (s.reference.empty()) throw InputError("smoothing_loss: empty reference");
  const Var z = reference_logits(t, m, s);
  const Var l = soft_ce(t, z, smoothed_targets(m.vocab().size(), with_eos(s.reference), eps));
  const double v = t.scalar(l);
  return {l, {v, v, 0.0}};
}

/// Per-step dense soft targets: scores at every step, eos scored 1 only at
/// the terminal step (after the last reference token).
inline Matrix dense_step_scores(const align::DenseTarget& d, std::size_t steps, std::size_t terminal) {
  Matrix out(steps, d.scores.size());
  for (std::size_t i = 0; i < steps; ++i) {
    const auto row = d.at_step(i, terminal);
    std::copy(row.begin(), row.end(), out.row_ptr(i));
  }
  return out;
}

/// The complement term of TAlign (no MLE part).
inline Var talign_term(Tape& t, Seq2SeqModel& m, const Sample& s, const align::DenseTarget& targets,
                       double temperature) {
  const Var z = reference_logits(t, m, s);
  const std::size_t steps = s.reference.size() + 1;
  return soft_ce(t, z, soft_targets(dense_step_scores(targets, steps, s.reference.size()), temperature));
}

/// Logits of every hypothesis, conditioned on its own prefix; one encoder pass.
inline std::vector<Var> hypothesis_logits(Tape& t, Seq2SeqModel& m, const Sample& s, const HypothesisSet& hyps) {
  if (hyps.empty()) throw InputError("empty hypothesis set");
  const Var memory = m.encode(t, s.source);
  std::map<std::vector<int>, Var> seen;  // identical hypotheses share a decode
  std::vector<Var> out;
  for (const auto& h : hyps) {
    if (h.tokens.empty() || h.step_distributions.size() != h.tokens.size())
      throw InputError("malformed hypothesis");
    auto it = seen.find(h.tokens);
    if (it == seen.end()) {
      const std::span<const int> prefix(h.tokens.data(), h.tokens.size() - 1);
      it = seen.emplace(h.tokens, m.decode(t, memory, prefix)).first;
    }
    out.push_back(it->second);
  }
  return out;
}

inline std::size_t slot_count(const HypothesisSet& hyps) {
  std::size_t n = 0;
  for (const auto& h : hyps) n += h.tokens.size();
  return n;
}

inline Matrix stored_distributions(const Hypothesis& h) {
  Matrix out(h.step_distributions.size(), h.step_distributions.front().size());
  for (std::size_t r = 0; r < out.rows; ++r)
    std::copy(h.step_distributions[r].begin(), h.step_distributions[r].end(), out.row_ptr(r));
  return out;
}

inline Var sum_vars(Tape& t, const std::vector<Var>& vs) {
  Var acc = vs.front();
  for (std::size_t i = 1; i < vs.size(); ++i) acc = ad::add(t, acc, vs[i]);
  return acc;
}

/// Sparse L1 over all (hypothesis, step) slots, averaged. `targets_for`
/// yields the sparse rows of one hypothesis.
template <class TargetFn>
Var pooled_sparse_l1(Tape& t, Seq2SeqModel& m, const Sample& s, const HypothesisSet& hyps, TargetFn&& targets_for) {
  const auto logits = hypothesis_logits(t, m, s, hyps);
  const double w = 1.0 / static_cast<double>(slot_count(hyps));
  std::vector<Var> parts;
  for (std::size_t k = 0; k < hyps.size(); ++k) parts.push_back(sparse_l1(t, logits[k], targets_for(k), w));
  return sum_vars(t, parts);
}

inline Var salign_term(Tape& t, Seq2SeqModel& m, const Sample& s, const HypothesisSet& hyps,
                       const align::ContextualScorer& scorer, std::size_t n) {
  const auto refs = scorer.reference_embeddings(s.reference_text);
  if (refs.empty()) throw InputError("salign: reference has no grounding vectors");
  const std::size_t terminal = s.reference.size();
  align::ContextualScorer::Cache cache;
  return pooled_sparse_l1(t, m, s, hyps, [&](std::size_t k) {
    const auto& h = hyps[k];
    SparseRows rows;
    for (std::size_t i = 0; i < h.tokens.size(); ++i)
      rows.push_back(
          align::build_topn_targets(h.step_distributions[i], h.tokens, i, refs, scorer, n, terminal, &cache));
    return rows;
  });
}

inline Var srand_term(Tape& t, Seq2SeqModel& m, const Sample& s, const HypothesisSet& hyps, std::size_t n,
                      std::uint64_t seed) {
  Rng rng(seed);
  return pooled_sparse_l1(t, m, s, hyps,
                          [&](std::size_t k) { return random_top_n(stored_distributions(hyps[k]), n, rng); });
}

inline Var salign_dec_term(Tape& t, Seq2SeqModel& m, const Sample& s, const HypothesisSet& hyps, const Grounding& g,
                           std::size_t n) {
  require_table(g, "salign_dec");
  const auto refs = align::reference_table_embeddings(s.reference_text, *g.emb_vocab, *g.table);
  const std::size_t terminal = s.reference.size();
  return pooled_sparse_l1(t, m, s, hyps, [&](std::size_t k) {
    const auto& h = hyps[k];
    SparseRows rows;
    for (std::size_t i = 0; i < h.tokens.size(); ++i)
      rows.push_back(align::build_topn_targets_table(h.step_distributions[i], *g.vocab, refs, n, i, terminal));
    return rows;
  });
}

inline Var sce_term(Tape& t, Seq2SeqModel& m, const Sample& s, const HypothesisSet& hyps, const Grounding& g,
                    double temperature) {
  require_table(g, "sce");
  const auto dense = align::build_vocab_targets(s.reference_text, *g.vocab, *g.emb_vocab, *g.table);
  const auto logits = hypothesis_logits(t, m, s, hyps);
  const double total = static_cast<double>(slot_count(hyps));
  std::vector<Var> parts;
  for (std::size_t k = 0; k < hyps.size(); ++k) {
    const std::size_t steps = hyps[k].tokens.size();
    const Matrix q = soft_targets(dense_step_scores(dense, steps, s.reference.size()), temperature);
    parts.push_back(soft_ce(t, logits[k], q, static_cast<double>(steps) / total));
  }
  return sum_vars(t, parts);
}

/// Samples the K hypotheses a sequential objective conditions on.
inline HypothesisSet sample_for(const Seq2SeqModel& m, const Sample& s, const ObjectiveConfig& cfg,
                                std::uint64_t seed) {
  const auto cap = static_cast<std::size_t>(std::ceil(cfg.max_len_factor * static_cast<double>(s.reference.size() + 1)));
  const std::size_t max_len = std::min(std::max<std::size_t>(cap, 1), m.config().max_len - 1);
  return m.sample_hypotheses(s.source, cfg.K, cfg.sample_temperature, max_len, seed);
}

/// Records the configured objective for one sample. Sequential objectives
/// sample their hypotheses from the current parameters unless `hyps` is given.
inline RecordedLoss evaluate(Tape& t, Seq2SeqModel& m, const Sample& s, const ObjectiveConfig& cfg,
                             const Grounding& g, std::uint64_t seed, const HypothesisSet* hyps = nullptr) {
  if (cfg.kind == Kind::kMle) return mle_loss(t, m, s);
  if (cfg.kind == Kind::kSmoothing) return smoothing_loss(t, m, s, cfg.smoothing_eps);

  const RecordedLoss mle = mle_loss(t, m, s);
  HypothesisSet sampled;
  if (uses_hypotheses(cfg.kind) && !hyps) {
    sampled = sample_for(m, s, cfg, mix_seed(seed, 1));
    hyps = &sampled;
  }
  Var extra;
  switch (cfg.kind) {
    case Kind::kTAlign: {
      require_table(g, "talign");
      const auto d = align::build_vocab_targets(s.reference_text, *g.vocab, *g.emb_vocab, *g.table);
      extra = talign_term(t, m, s, d, cfg.temperature_targets);
      break;
    }
    case Kind::kSAlign:
      if (!g.scorer) throw ConfigError("salign: contextual encoder not provided");
      extra = salign_term(t, m, s, *hyps, *g.scorer, cfg.n);
      break;
    case Kind::kSRand: extra = srand_term(t, m, s, *hyps, cfg.n, mix_seed(seed, 2)); break;
    case Kind::kSAlignDec: extra = salign_dec_term(t, m, s, *hyps, g, cfg.n); break;
    case Kind::kSce: extra = sce_term(t, m, s, *hyps, g, cfg.temperature_targets); break;
    default: break;
  }
  const LossValue v = combine(mle.value, LossValue{t.scalar(extra), 0.0, 0.0}, cfg.alpha);
  const Var total = combine(t, mle.var, extra, cfg.alpha);
  if (!std::isfinite(t.scalar(total))) throw NumericError("non-finite loss from objective '" + to_string(cfg.kind) + "'");
  return {total, v};
}

}  // namespace softalign::obj
