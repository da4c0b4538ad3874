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

// Frozen, domain-agnostic token representations used as alignment grounding.
//
// ContextualEncoder is a small self-attention stack with fixed random
// weights. Its input table can tie groups of words to a shared base vector,
// which stands in for the synonym knowledge a pretrained multilingual encoder
// would bring. Nothing here is ever updated by training.

#pragma once

#include <algorithm>
#include <map>
#include <optional>

#include "softalign/common.hpp"
#include "softalign/tokenizer.hpp"

namespace softalign::grounding {

using EmbeddingVector = std::vector<double>;

inline double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

inline EmbeddingVector normalized(EmbeddingVector v) {
  const double n = l2_norm(v);
  if (!(n > 0.0) || !std::isfinite(n)) throw NumericError("cannot normalise a zero or non-finite vector");
  for (double& x : v) x /= n;
  return v;
}

inline double euclidean(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InputError("euclidean: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

struct EncoderConfig {
  std::size_t dim = 32;
  std::size_t layers = 2;
  std::size_t layer_index = 2;   // 0 = input embeddings, k = output of block k
  double context_scale = 0.35;   // weight of the attention branch
  double ffn_scale = 0.25;
  double position_scale = 0.1;
  double tie_noise = 0.15;       // spread of tied words around their base vector
  std::size_t max_positions = 512;
  std::uint64_t seed = 1;
};

class ContextualEncoder {
 public:
  /// `tied_words` lists groups of whole words whose embeddings share a base
  /// vector (only whole-word vocabulary entries are tied).
  ContextualEncoder(tok::Vocabulary vocab, EncoderConfig cfg,
                    const std::vector<std::vector<std::string>>& tied_words = {})
      : vocab_(std::move(vocab)), cfg_(cfg) {
    if (cfg_.dim == 0) throw ConfigError("encoder dimension must be positive");
    if (cfg_.layer_index > cfg_.layers) throw ConfigError("encoder layer_index exceeds layer count");
    Rng rng(cfg_.seed);
    const std::size_t d = cfg_.dim;
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    token_.assign(vocab_.size(), EmbeddingVector(d));
    for (auto& row : token_) {
      for (double& x : row) x = rng.normal();
      row = normalized(std::move(row));
    }
    for (const auto& group : tied_words) {
      EmbeddingVector base(d);
      for (double& x : base) x = rng.normal();
      base = normalized(std::move(base));
      for (const auto& word : group) {
        const auto id = vocab_.find(std::string(tok::kWordMarker) + word);
        if (!id) continue;
        EmbeddingVector v = base;
        for (double& x : v) x += cfg_.tie_noise * rng.normal() * inv_sqrt_d;
        token_[static_cast<std::size_t>(*id)] = normalized(std::move(v));
      }
    }
    position_.assign(cfg_.max_positions, EmbeddingVector(d));
    for (auto& row : position_)
      for (double& x : row) x = rng.normal() * inv_sqrt_d;
    auto random_matrix = [&](std::size_t r, std::size_t c) {
      std::vector<double> m(r * c);
      for (double& x : m) x = rng.normal() / std::sqrt(static_cast<double>(r));
      return m;
    };
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
      Block b;
      b.wq = random_matrix(d, d);
      b.wk = random_matrix(d, d);
      b.wv = random_matrix(d, d);
      b.w1 = random_matrix(d, 2 * d);
      b.w2 = random_matrix(2 * d, d);
      blocks_.push_back(std::move(b));
    }
  }

  const tok::Vocabulary& vocabulary() const { return vocab_; }
  const EncoderConfig& config() const { return cfg_; }
  std::size_t dim() const { return cfg_.dim; }

  /// One unit-norm vector per id, read from `layer_index`; context is the
  /// whole id sequence.
  std::vector<EmbeddingVector> embed_ids(std::span<const int> ids) const {
    const std::size_t n = ids.size(), d = cfg_.dim;
    if (n == 0) return {};
    if (n > cfg_.max_positions) throw InputError("encoder input longer than max_positions");
    std::vector<double> x(n * d);
    for (std::size_t i = 0; i < n; ++i) {
      const int id = ids[i];
      if (id < 0 || static_cast<std::size_t>(id) >= vocab_.size()) throw InputError("encoder: id out of range");
      for (std::size_t c = 0; c < d; ++c)
        x[i * d + c] = token_[static_cast<std::size_t>(id)][c] + cfg_.position_scale * position_[i][c];
    }
    std::vector<double> q(n * d), k(n * d), v(n * d), att(n * d), h(n * 2 * d), scores(n);
    for (std::size_t l = 0; l < cfg_.layer_index; ++l) {
      const Block& b = blocks_[l];
      project(x, b.wq, n, d, d, q);
      project(x, b.wk, n, d, d, k);
      project(x, b.wv, n, d, d, v);
      const double inv = 1.0 / std::sqrt(static_cast<double>(d));
      std::fill(att.begin(), att.end(), 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
          double s = 0.0;
          for (std::size_t c = 0; c < d; ++c) s += q[i * d + c] * k[j * d + c];
          scores[j] = s * inv;
          mx = std::max(mx, scores[j]);
        }
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) z += (scores[j] = std::exp(scores[j] - mx));
        for (std::size_t j = 0; j < n; ++j) {
          const double p = scores[j] / z;
          for (std::size_t c = 0; c < d; ++c) att[i * d + c] += p * v[j * d + c];
        }
      }
      for (std::size_t i = 0; i < n * d; ++i) x[i] += cfg_.context_scale * att[i];
      project(x, b.w1, n, d, 2 * d, h);
      for (double& e : h) e = std::tanh(e);
      project(h, b.w2, n, 2 * d, d, att);
      for (std::size_t i = 0; i < n * d; ++i) x[i] += cfg_.ffn_scale * att[i];
    }
    std::vector<EmbeddingVector> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = normalized(EmbeddingVector(x.begin() + i * d, x.begin() + (i + 1) * d));
    return out;
  }

  std::vector<EmbeddingVector> embed_contextual(const std::vector<tok::Subword>& subwords) const {
    return embed_ids(tok::ids_of(subwords));
  }

  /// Context-free vector of one embedder subword.
  EmbeddingVector static_embedding(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_.size()) throw InputError("encoder: id out of range");
    return token_[static_cast<std::size_t>(id)];
  }

  /// Digest of every frozen weight.
  std::uint64_t checksum() const {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& r : token_) h = softalign::checksum(r, h);
    for (const auto& r : position_) h = softalign::checksum(r, h);
    for (const auto& b : blocks_)
      for (const auto* m : {&b.wq, &b.wk, &b.wv, &b.w1, &b.w2}) h = softalign::checksum(*m, h);
    return h;
  }

 private:
  struct Block {
    std::vector<double> wq, wk, wv, w1, w2;
  };

  static void project(const std::vector<double>& x, const std::vector<double>& w, std::size_t n,
                      std::size_t in, std::size_t out_dim, std::vector<double>& out) {
    std::fill(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(n * out_dim), 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < in; ++k) {
        const double a = x[i * in + k];
        const double* wr = w.data() + k * out_dim;
        double* o = out.data() + i * out_dim;
        for (std::size_t j = 0; j < out_dim; ++j) o[j] += a * wr[j];
      }
  }

  tok::Vocabulary vocab_;
  EncoderConfig cfg_;
  std::vector<EmbeddingVector> token_;
  std::vector<EmbeddingVector> position_;
  std::vector<Block> blocks_;
};

// ----------------------------------------------------------------------------
// Grounding tables.
// ----------------------------------------------------------------------------

enum class Provenance : std::uint8_t { kStatic = 0, kDecontextualized = 1, kContextualCache = 2 };

inline std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::kStatic: return "static";
    case Provenance::kDecontextualized: return "decontextualized";
    case Provenance::kContextualCache: return "contextual-cache";
  }
  return "?";
}

struct TableEntry {
  EmbeddingVector vector;
  std::uint64_t count = 0;
};

class GroundingTable {
 public:
  GroundingTable() = default;
  GroundingTable(std::size_t dim, Provenance provenance, std::string domain = {})
      : dim_(dim), provenance_(provenance), domain_(std::move(domain)) {}

  std::size_t dim() const { return dim_; }
  Provenance provenance() const { return provenance_; }
  const std::string& domain() const { return domain_; }
  std::size_t size() const { return entries_.size(); }
  const std::map<int, TableEntry>& entries() const { return entries_; }

  void insert(int id, EmbeddingVector v, std::uint64_t count) {
    if (v.size() != dim_) throw InputError("grounding table: dimension mismatch");
    if (count < 1) throw InputError("grounding table: entry count must be >= 1");
    entries_[id] = TableEntry{std::move(v), count};
  }

  /// Stored vector, or nullptr for unseen subwords.
  const EmbeddingVector* lookup(int id) const {
    const auto it = entries_.find(id);
    return it == entries_.end() ? nullptr : &it->second.vector;
  }

  std::uint64_t count(int id) const {
    const auto it = entries_.find(id);
    return it == entries_.end() ? 0 : it->second.count;
  }

  std::uint64_t checksum() const {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& [id, e] : entries_) {
      const double key[2] = {static_cast<double>(id), static_cast<double>(e.count)};
      h = softalign::checksum(key, h);
      h = softalign::checksum(e.vector, h);
    }
    return h;
  }

  // Binary layout (little-endian): "SAGT", u64 dim, u64 count, u64 provenance,
  // string domain, then per entry: u64 id, u64 count, dim × f64.
  void save(const std::string& path) const {
    auto os = open_out(path, true);
    binio::put_magic(os, "SAGT");
    binio::put_u64(os, dim_);
    binio::put_u64(os, entries_.size());
    binio::put_u64(os, static_cast<std::uint64_t>(provenance_));
    binio::put_string(os, domain_);
    for (const auto& [id, e] : entries_) {
      binio::put_u64(os, static_cast<std::uint64_t>(id));
      binio::put_u64(os, e.count);
      for (double x : e.vector) binio::put_f64(os, x);
    }
    if (!os) throw IoError("write failed: " + path);
  }

  static GroundingTable load(const std::string& path) {
    auto is = open_in(path, true);
    binio::expect_magic(is, "SAGT");
    const auto dim = binio::get_u64(is);
    const auto n = binio::get_u64(is);
    const auto prov = binio::get_u64(is);
    if (prov > 2) throw IoError("grounding table: unknown provenance");
    GroundingTable t(dim, static_cast<Provenance>(prov), binio::get_string(is));
    for (std::uint64_t i = 0; i < n; ++i) {
      const auto id = static_cast<int>(binio::get_u64(is));
      const auto count = binio::get_u64(is);
      EmbeddingVector v(dim);
      for (double& x : v) x = binio::get_f64(is);
      t.insert(id, std::move(v), count);
    }
    return t;
  }

 private:
  std::size_t dim_ = 0;
  Provenance provenance_ = Provenance::kStatic;
  std::string domain_;
  std::map<int, TableEntry> entries_;
};

/// Running sums of contextual vectors per subword id.
class EmbeddingAccumulator {
 public:
  explicit EmbeddingAccumulator(std::size_t dim) : dim_(dim) {}

  void add(int id, std::span<const double> v) {
    auto& e = sums_[id];
    if (e.vector.empty()) e.vector.assign(dim_, 0.0);
    for (std::size_t c = 0; c < dim_; ++c) e.vector[c] += v[c];
    ++e.count;
  }

  /// Mean before re-normalisation.
  EmbeddingVector mean(int id) const {
    const auto& e = sums_.at(id);
    EmbeddingVector m(e.vector);
    if (e.count == 1) return m;
    for (double& x : m) x /= static_cast<double>(e.count);
    return m;
  }

  std::uint64_t count(int id) const {
    const auto it = sums_.find(id);
    return it == sums_.end() ? 0 : it->second.count;
  }

  const std::map<int, TableEntry>& sums() const { return sums_; }

  /// Unit-norm means. A single occurrence is stored exactly as observed.
  GroundingTable to_table(Provenance provenance, std::string domain = {}) const {
    GroundingTable t(dim_, provenance, std::move(domain));
    for (const auto& [id, e] : sums_) {
      t.insert(id, e.count == 1 ? e.vector : normalized(mean(id)), e.count);
    }
    return t;
  }

 private:
  std::size_t dim_;
  std::map<int, TableEntry> sums_;
};

/// Accumulates contextual vectors of every embedder subword in `corpus`.
/// Sentences are reduced in sorted order so the result does not depend on
/// the order of the input.
inline EmbeddingAccumulator accumulate_contextual(const ContextualEncoder& encoder,
                                                  const std::vector<std::string>& corpus) {
  std::vector<std::string> sorted = corpus;
  std::sort(sorted.begin(), sorted.end());
  EmbeddingAccumulator acc(encoder.dim());
  for (const auto& text : sorted) {
    const auto pieces = tok::tokenize_with_spans(encoder.vocabulary(), text);
    const auto vecs = encoder.embed_contextual(pieces);
    for (std::size_t i = 0; i < pieces.size(); ++i) acc.add(pieces[i].id, vecs[i]);
  }
  return acc;
}

/// Decontextualised table: the per-subword average of contextual vectors
/// over all occurrences in `corpus`, re-normalised.
inline GroundingTable decontextualize(const ContextualEncoder& encoder, const std::vector<std::string>& corpus,
                                      std::string domain = {}) {
  if (corpus.empty()) throw InputError("decontextualize: empty corpus");
  return accumulate_contextual(encoder, corpus).to_table(Provenance::kDecontextualized, std::move(domain));
}

/// Context-free table covering every non-special embedder subword.
inline GroundingTable static_table(const ContextualEncoder& encoder) {
  GroundingTable t(encoder.dim(), Provenance::kStatic);
  for (std::size_t id = tok::Vocabulary::kNumSpecial; id < encoder.vocabulary().size(); ++id)
    t.insert(static_cast<int>(id), encoder.static_embedding(static_cast<int>(id)), 1);
  return t;
}

}  // namespace softalign::grounding
