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

// Desk-scale pre-LN transformer encoder-decoder over a joint subword
// vocabulary, in double precision.

#pragma once

#include <map>
#include <optional>

#include "softalign/autodiff.hpp"
#include "softalign/tokenizer.hpp"

namespace softalign::model {

using ad::Matrix;
using ad::Parameter;
using ad::Tape;
using ad::Var;
using tok::Vocabulary;

struct ModelConfig {
  std::size_t d_model = 64;
  std::size_t heads = 2;
  std::size_t enc_layers = 2;
  std::size_t dec_layers = 2;
  std::size_t d_ff = 128;
  std::size_t max_len = 128;
  std::uint64_t seed = 1;

  void validate() const {
    if (d_model == 0 || heads == 0 || d_model % heads != 0)
      throw ConfigError("model: d_model must be a positive multiple of heads");
    if (enc_layers == 0 || dec_layers == 0) throw ConfigError("model: need at least one layer per stack");
    if (d_ff == 0 || max_len < 2) throw ConfigError("model: invalid d_ff or max_len");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct Hypothesis {
  std::vector<int> tokens;                       // ends with eos unless max_len was hit
  std::vector<std::vector<double>> step_distributions;  // model distribution before each token
  double log_prob = 0.0;
};

using HypothesisSet = std::vector<Hypothesis>;

class Seq2SeqModel {
 public:
  Seq2SeqModel(Vocabulary vocab, ModelConfig cfg) : vocab_(std::move(vocab)), cfg_(cfg) {
    cfg_.validate();
    build();
    initialise();
  }

  const Vocabulary& vocab() const { return vocab_; }
  const ModelConfig& config() const { return cfg_; }
  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  /// Teacher-forced logits: decoder input is [bos] + prefix, so row i scores
  /// the token following prefix[0..i).
  Var logits(Tape& t, std::span<const int> source, std::span<const int> prefix) {
    return logits_impl(*this, t, source, prefix);
  }
  Var logits(Tape& t, std::span<const int> source, std::span<const int> prefix) const {
    return logits_impl(*this, t, source, prefix);
  }

  /// Encoder states on a tape, reusable by several decode() calls.
  Var encode(Tape& t, std::span<const int> source) { return encode_impl(*this, t, source); }
  Var encode(Tape& t, std::span<const int> source) const { return encode_impl(*this, t, source); }

  /// Teacher-forced logits for decoder input [bos] + prefix.
  Var decode(Tape& t, Var memory, std::span<const int> prefix) {
    return decode_impl(*this, t, memory, prefix, false);
  }

  /// Next-token distribution after `prefix`.
  std::vector<double> forward(std::span<const int> source, std::span<const int> prefix) const {
    Tape t(false);
    const Var z = logits(t, source, prefix);
    const Matrix& m = t.value(z);
    Matrix last = Matrix::row(std::vector<double>(m.row_ptr(m.rows - 1), m.row_ptr(m.rows - 1) + m.cols));
    ad::kernel::softmax_rows_inplace(last);
    return std::move(last.data);
  }

  /// Encoder states for repeated decoding of one source.
  Matrix encode(std::span<const int> source) const {
    Tape t(false);
    return t.value(encode_impl(*this, t, source));
  }

  /// Next-token distribution given precomputed encoder states.
  std::vector<double> next_distribution(const Matrix& memory, std::span<const int> prefix,
                                        double temperature = 1.0) const {
    Tape t(false);
    const Var mem = t.constant(memory);
    const Var z = decode_impl(*this, t, mem, prefix, /*last_only=*/true);
    std::vector<double> row = t.value(z).data;
    if (temperature != 1.0)
      for (double& v : row) v /= temperature;
    Matrix m = Matrix::row(std::move(row));
    ad::kernel::softmax_rows_inplace(m);
    return std::move(m.data);
  }

  std::vector<int> greedy_decode(std::span<const int> source, std::size_t max_len) const {
    const Matrix memory = encode(source);
    std::vector<int> out;
    while (out.size() < max_len) {
      const auto p = next_distribution(memory, out);
      const int best = static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
      if (best == Vocabulary::kEos) break;
      out.push_back(best);
    }
    return out;
  }

  /// K ancestral samples at `temperature`; temperature <= 0 selects argmax
  /// decoding. Stored step distributions are the untempered model output.
  HypothesisSet sample_hypotheses(std::span<const int> source, std::size_t k, double temperature,
                                  std::size_t max_len, std::uint64_t seed) const {
    if (k < 1) throw ConfigError("sample_hypotheses: K must be >= 1");
    const bool greedy = !(temperature > 0.0);
    const Matrix memory = encode(source);
    Rng rng(seed);
    HypothesisSet out(k);
    // Hypotheses advance in lockstep; identical prefixes share one decoder
    // pass.
    std::map<std::vector<int>, std::vector<double>> seen;
    std::vector<double> weights;
    std::vector<char> live(k, 1);
    for (std::size_t step = 0; step < max_len; ++step) {
      bool any = false;
      for (std::size_t j = 0; j < k; ++j) {
        if (!live[j]) continue;
        any = true;
        auto& h = out[j];
        auto it = seen.find(h.tokens);
        if (it == seen.end()) it = seen.emplace(h.tokens, next_distribution(memory, h.tokens)).first;
        const std::vector<double>& p = it->second;
        int pick;
        if (greedy) {
          pick = static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
        } else {
          if (temperature == 1.0) {
            weights = p;
          } else {
            weights.resize(p.size());
            const double mx = *std::max_element(p.begin(), p.end());
            for (std::size_t i = 0; i < p.size(); ++i)
              weights[i] = p[i] > 0.0 ? std::pow(p[i] / mx, 1.0 / temperature) : 0.0;
          }
          pick = static_cast<int>(rng.categorical(weights));
        }
        h.log_prob += std::log(p[static_cast<std::size_t>(pick)]);
        h.step_distributions.push_back(p);
        h.tokens.push_back(pick);
        if (pick == Vocabulary::kEos) live[j] = 0;
      }
      if (!any) break;
    }
    return out;
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  std::vector<double> flat_parameters() const {
    std::vector<double> out;
    out.reserve(parameter_count());
    for (const auto& p : params_) out.insert(out.end(), p.value.data.begin(), p.value.data.end());
    return out;
  }

  void set_flat_parameters(std::span<const double> flat) {
    if (flat.size() != parameter_count()) throw InputError("set_flat_parameters: size mismatch");
    std::size_t off = 0;
    for (auto& p : params_) {
      std::copy(flat.begin() + static_cast<std::ptrdiff_t>(off),
                flat.begin() + static_cast<std::ptrdiff_t>(off + p.value.size()), p.value.data.begin());
      off += p.value.size();
    }
  }

  std::vector<double> flat_gradients() const {
    std::vector<double> out;
    out.reserve(parameter_count());
    for (const auto& p : params_) out.insert(out.end(), p.grad.data.begin(), p.grad.data.end());
    return out;
  }

  std::uint64_t checksum() const { return softalign::checksum(flat_parameters()); }

  // Checkpoint layout (little-endian): "SACK", u64 version, architecture
  // (vocab size, d_model, heads, enc_layers, dec_layers, d_ff, max_len, init
  // seed), u64 step, u64 training seed, u64 tensor count, then per tensor
  // u64 rows, u64 cols, rows·cols × f64.
  void save_checkpoint(const std::string& path, std::uint64_t step, std::uint64_t train_seed) const {
    auto os = open_out(path, true);
    binio::put_magic(os, "SACK");
    binio::put_u64(os, 1);
    for (std::uint64_t v : {static_cast<std::uint64_t>(vocab_.size()), std::uint64_t{cfg_.d_model},
                            std::uint64_t{cfg_.heads}, std::uint64_t{cfg_.enc_layers}, std::uint64_t{cfg_.dec_layers},
                            std::uint64_t{cfg_.d_ff}, std::uint64_t{cfg_.max_len}, cfg_.seed})
      binio::put_u64(os, v);
    binio::put_u64(os, step);
    binio::put_u64(os, train_seed);
    binio::put_u64(os, params_.size());
    for (const auto& p : params_) {
      binio::put_u64(os, p.value.rows);
      binio::put_u64(os, p.value.cols);
      for (double v : p.value.data) binio::put_f64(os, v);
    }
    if (!os) throw IoError("write failed: " + path);
  }

  struct CheckpointHeader {
    ModelConfig config;
    std::uint64_t vocab_size = 0;
    std::uint64_t step = 0;
    std::uint64_t train_seed = 0;
  };

  /// Reads a checkpoint into a model built over `vocab`.
  static Seq2SeqModel load_checkpoint(const std::string& path, Vocabulary vocab, CheckpointHeader* header = nullptr) {
    auto is = open_in(path, true);
    binio::expect_magic(is, "SACK");
    if (binio::get_u64(is) != 1) throw IoError("unsupported checkpoint version: " + path);
    CheckpointHeader h;
    h.vocab_size = binio::get_u64(is);
    h.config.d_model = binio::get_u64(is);
    h.config.heads = binio::get_u64(is);
    h.config.enc_layers = binio::get_u64(is);
    h.config.dec_layers = binio::get_u64(is);
    h.config.d_ff = binio::get_u64(is);
    h.config.max_len = binio::get_u64(is);
    h.config.seed = binio::get_u64(is);
    h.step = binio::get_u64(is);
    h.train_seed = binio::get_u64(is);
    if (h.vocab_size != vocab.size()) throw IoError("checkpoint vocabulary size does not match: " + path);
    Seq2SeqModel m(std::move(vocab), h.config);
    if (binio::get_u64(is) != m.params_.size()) throw IoError("checkpoint tensor count mismatch: " + path);
    for (auto& p : m.params_) {
      if (binio::get_u64(is) != p.value.rows || binio::get_u64(is) != p.value.cols)
        throw IoError("checkpoint tensor shape mismatch for " + p.name);
      for (double& v : p.value.data) v = binio::get_f64(is);
    }
    if (header) *header = h;
    return m;
  }

 private:
  struct AttnIdx {
    std::size_t wq, bq, wk, bk, wv, bv, wo, bo;
  };
  struct EncLayerIdx {
    std::size_t ln1g, ln1b, ln2g, ln2b, w1, b1, w2, b2;
    AttnIdx self;
  };
  struct DecLayerIdx {
    std::size_t ln1g, ln1b, ln2g, ln2b, ln3g, ln3b, w1, b1, w2, b2;
    AttnIdx self, cross;
  };

  std::size_t add_param(const std::string& name, std::size_t r, std::size_t c) {
    params_.emplace_back(name, r, c);
    return params_.size() - 1;
  }

  AttnIdx add_attention(const std::string& prefix) {
    const std::size_t d = cfg_.d_model;
    AttnIdx a{};
    a.wq = add_param(prefix + ".wq", d, d);
    a.bq = add_param(prefix + ".bq", 1, d);
    a.wk = add_param(prefix + ".wk", d, d);
    a.bk = add_param(prefix + ".bk", 1, d);
    a.wv = add_param(prefix + ".wv", d, d);
    a.bv = add_param(prefix + ".bv", 1, d);
    a.wo = add_param(prefix + ".wo", d, d);
    a.bo = add_param(prefix + ".bo", 1, d);
    return a;
  }

  void build() {
    const std::size_t d = cfg_.d_model, v = vocab_.size();
    embed_ = add_param("embed", v, d);
    pos_ = add_param("pos", cfg_.max_len, d);
    for (std::size_t l = 0; l < cfg_.enc_layers; ++l) {
      const std::string p = "enc" + std::to_string(l);
      EncLayerIdx e{};
      e.ln1g = add_param(p + ".ln1.g", 1, d);
      e.ln1b = add_param(p + ".ln1.b", 1, d);
      e.self = add_attention(p + ".self");
      e.ln2g = add_param(p + ".ln2.g", 1, d);
      e.ln2b = add_param(p + ".ln2.b", 1, d);
      e.w1 = add_param(p + ".ffn.w1", d, cfg_.d_ff);
      e.b1 = add_param(p + ".ffn.b1", 1, cfg_.d_ff);
      e.w2 = add_param(p + ".ffn.w2", cfg_.d_ff, d);
      e.b2 = add_param(p + ".ffn.b2", 1, d);
      enc_.push_back(e);
    }
    enc_lng_ = add_param("enc.ln.g", 1, d);
    enc_lnb_ = add_param("enc.ln.b", 1, d);
    for (std::size_t l = 0; l < cfg_.dec_layers; ++l) {
      const std::string p = "dec" + std::to_string(l);
      DecLayerIdx e{};
      e.ln1g = add_param(p + ".ln1.g", 1, d);
      e.ln1b = add_param(p + ".ln1.b", 1, d);
      e.self = add_attention(p + ".self");
      e.ln2g = add_param(p + ".ln2.g", 1, d);
      e.ln2b = add_param(p + ".ln2.b", 1, d);
      e.cross = add_attention(p + ".cross");
      e.ln3g = add_param(p + ".ln3.g", 1, d);
      e.ln3b = add_param(p + ".ln3.b", 1, d);
      e.w1 = add_param(p + ".ffn.w1", d, cfg_.d_ff);
      e.b1 = add_param(p + ".ffn.b1", 1, cfg_.d_ff);
      e.w2 = add_param(p + ".ffn.w2", cfg_.d_ff, d);
      e.b2 = add_param(p + ".ffn.b2", 1, d);
      dec_.push_back(e);
    }
    dec_lng_ = add_param("dec.ln.g", 1, d);
    dec_lnb_ = add_param("dec.ln.b", 1, d);
    out_w_ = add_param("out.w", d, v);
    out_b_ = add_param("out.b", 1, v);
  }

  void initialise() {
    Rng rng(cfg_.seed);
    for (auto& p : params_) {
      const auto& n = p.name;
      const bool gain = n.ends_with(".g");
      const bool bias = n.ends_with(".b") || n.ends_with(".bq") || n.ends_with(".bk") || n.ends_with(".bv") ||
                        n.ends_with(".bo") || n.ends_with(".b1") || n.ends_with(".b2");
      double stdev = 1.0 / std::sqrt(static_cast<double>(p.value.rows));
      if (n == "embed" || n == "pos") stdev = 1.0 / std::sqrt(static_cast<double>(cfg_.d_model));
      for (double& x : p.value.data) x = gain ? 1.0 : bias ? 0.0 : stdev * rng.normal();
    }
  }

  template <class Self>
  static Var attention_block(Self& self, Tape& t, Var x_norm, Var kv, const AttnIdx& a, bool causal) {
    auto P = [&](std::size_t i) { return t.param(self.params_[i]); };
    const Var q = ad::linear(t, x_norm, P(a.wq), P(a.bq));
    const Var k = ad::linear(t, kv, P(a.wk), P(a.bk));
    const Var v = ad::linear(t, kv, P(a.wv), P(a.bv));
    const Var o = ad::attention(t, q, k, v, self.cfg_.heads, causal);
    return ad::linear(t, o, P(a.wo), P(a.bo));
  }

  template <class Self>
  static Var ffn_block(Self& self, Tape& t, Var x_norm, std::size_t w1, std::size_t b1, std::size_t w2, std::size_t b2) {
    auto P = [&](std::size_t i) { return t.param(self.params_[i]); };
    const Var h = ad::tanh(t, ad::linear(t, x_norm, P(w1), P(b1)));
    return ad::linear(t, h, P(w2), P(b2));
  }

  template <class Self>
  static Var embed_inputs(Self& self, Tape& t, std::span<const int> ids) {
    if (ids.size() > self.cfg_.max_len) throw InputError("sequence longer than model max_len");
    for (int id : ids)
      if (id < 0 || static_cast<std::size_t>(id) >= self.vocab_.size())
        throw InputError("token id " + std::to_string(id) + " out of range");
    std::vector<int> positions(ids.size());
    std::iota(positions.begin(), positions.end(), 0);
    const Var tokens = ad::rows(t, t.param(self.params_[self.embed_]), ids);
    const Var pos = ad::rows(t, t.param(self.params_[self.pos_]), positions);
    return ad::add(t, tokens, pos);
  }

  template <class Self>
  static Var encode_impl(Self& self, Tape& t, std::span<const int> source) {
    auto P = [&](std::size_t i) { return t.param(self.params_[i]); };
    std::vector<int> src(source.begin(), source.end());
    src.push_back(Vocabulary::kEos);
    Var x = embed_inputs(self, t, src);
    for (const auto& e : self.enc_) {
      const Var n1 = ad::layer_norm(t, x, P(e.ln1g), P(e.ln1b));
      x = ad::add(t, x, attention_block(self, t, n1, n1, e.self, false));
      const Var n2 = ad::layer_norm(t, x, P(e.ln2g), P(e.ln2b));
      x = ad::add(t, x, ffn_block(self, t, n2, e.w1, e.b1, e.w2, e.b2));
    }
    return ad::layer_norm(t, x, P(self.enc_lng_), P(self.enc_lnb_));
  }

  template <class Self>
  static Var decode_impl(Self& self, Tape& t, Var memory, std::span<const int> prefix, bool last_only) {
    auto P = [&](std::size_t i) { return t.param(self.params_[i]); };
    std::vector<int> in;
    in.reserve(prefix.size() + 1);
    in.push_back(Vocabulary::kBos);
    in.insert(in.end(), prefix.begin(), prefix.end());
    Var y = embed_inputs(self, t, in);
    for (const auto& e : self.dec_) {
      const Var n1 = ad::layer_norm(t, y, P(e.ln1g), P(e.ln1b));
      y = ad::add(t, y, attention_block(self, t, n1, n1, e.self, true));
      const Var n2 = ad::layer_norm(t, y, P(e.ln2g), P(e.ln2b));
      y = ad::add(t, y, attention_block(self, t, n2, memory, e.cross, false));
      const Var n3 = ad::layer_norm(t, y, P(e.ln3g), P(e.ln3b));
      y = ad::add(t, y, ffn_block(self, t, n3, e.w1, e.b1, e.w2, e.b2));
    }
    Var h = ad::layer_norm(t, y, P(self.dec_lng_), P(self.dec_lnb_));
    if (last_only) {
      const Matrix& hv = t.value(h);
      h = t.constant(Matrix::row(std::vector<double>(hv.row_ptr(hv.rows - 1), hv.row_ptr(hv.rows - 1) + hv.cols)));
    }
    return ad::linear(t, h, P(self.out_w_), P(self.out_b_));
  }

  template <class Self>
  static Var logits_impl(Self& self, Tape& t, std::span<const int> source, std::span<const int> prefix) {
    const Var memory = encode_impl(self, t, source);
    return decode_impl(self, t, memory, prefix, false);
  }

  Vocabulary vocab_;
  ModelConfig cfg_;
  std::vector<Parameter> params_;
  std::size_t embed_ = 0, pos_ = 0, enc_lng_ = 0, enc_lnb_ = 0, dec_lng_ = 0, dec_lnb_ = 0, out_w_ = 0, out_b_ = 0;
  std::vector<EncLayerIdx> enc_;
  std::vector<DecLayerIdx> dec_;
};

/// Runs the reverse sweep for one loss and returns the flattened gradient.
/// Parameter gradients are zeroed first.
inline std::vector<double> gradient(Seq2SeqModel& m, Tape& t, Var loss, std::string_view objective = "loss") {
  const double v = t.scalar(loss);
  if (!std::isfinite(v)) throw NumericError("non-finite loss from objective '" + std::string(objective) + "'");
  m.zero_grad();
  t.backward(loss);
  auto g = m.flat_gradients();
  for (double x : g)
    if (!std::isfinite(x)) throw NumericError("non-finite gradient from objective '" + std::string(objective) + "'");
  return g;
}

}  // namespace softalign::model
