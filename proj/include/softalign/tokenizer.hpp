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

// Frequency-merged subword vocabularies with greedy longest-match
// segmentation that reports code-point spans into the original text.
//
// Word-initial pieces carry the marker U+2581 in the vocabulary; the marker
// is not part of the surface text and never contributes to a span. Whitespace
// is a hard boundary: no piece spans across it.

#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <unordered_map>

#include "softalign/common.hpp"

namespace softalign::tok {

inline constexpr std::string_view kWordMarker = "\xE2\x96\x81";  // U+2581
inline constexpr char32_t kWordMarkerCp = 0x2581;

struct Span {
  std::size_t start = 0;  // code-point offsets, half-open
  std::size_t end = 0;

  std::size_t length() const { return end - start; }
  friend bool operator==(const Span&, const Span&) = default;
};

/// Overlap length |a ∩ b| of two half-open spans.
inline std::size_t overlap(const Span& a, const Span& b) {
  const std::size_t lo = std::max(a.start, b.start);
  const std::size_t hi = std::min(a.end, b.end);
  return hi > lo ? hi - lo : 0;
}

struct Subword {
  std::string text;  // surface form, without the word marker
  Span span;
  int id = 0;
};

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr std::size_t kNumSpecial = 4;

  static const std::vector<std::string>& specials() {
    static const std::vector<std::string> s{"<pad>", "<bos>", "<eos>", "<unk>"};
    return s;
  }

  Vocabulary() : Vocabulary(specials()) {}

  /// Entries must start with the four special tokens and be unique.
  explicit Vocabulary(std::vector<std::string> entries) : entries_(std::move(entries)) {
    if (entries_.size() < kNumSpecial ||
        !std::equal(specials().begin(), specials().end(), entries_.begin()))
      throw ConfigError("vocabulary must begin with <pad> <bos> <eos> <unk>");
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (entries_[i].empty()) throw ConfigError("vocabulary entry " + std::to_string(i) + " is empty");
      if (!index_.emplace(entries_[i], static_cast<int>(i)).second)
        throw ConfigError("duplicate vocabulary entry '" + entries_[i] + "'");
      max_pieces_ = std::max(max_pieces_, utf8_decode(entries_[i]).size());
    }
  }

  std::size_t size() const { return entries_.size(); }
  const std::vector<std::string>& entries() const { return entries_; }
  const std::string& at(int id) const { return entries_.at(static_cast<std::size_t>(id)); }

  std::optional<int> find(const std::string& entry) const {
    const auto it = index_.find(entry);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  static bool is_special(int id) { return id >= 0 && id < static_cast<int>(kNumSpecial); }

  bool is_word_initial(int id) const {
    return !is_special(id) && at(id).starts_with(kWordMarker);
  }

  /// Surface text of a piece (marker stripped).
  std::string surface(int id) const {
    if (id == kUnk) return "?";
    if (is_special(id)) return "";
    const auto& e = at(id);
    return e.starts_with(kWordMarker) ? e.substr(kWordMarker.size()) : e;
  }

  std::size_t max_entry_length() const { return max_pieces_; }

  void save(const std::string& path) const {
    auto os = open_out(path, true);
    for (const auto& e : entries_) os << e << '\n';
    if (!os) throw IoError("write failed: " + path);
  }

  static Vocabulary load(const std::string& path) {
    auto is = open_in(path, true);
    std::vector<std::string> entries;
    std::string line;
    while (std::getline(is, line)) entries.push_back(line);
    return Vocabulary(std::move(entries));
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.entries_ == b.entries_; }

 private:
  std::vector<std::string> entries_;
  std::unordered_map<std::string, int> index_;
  std::size_t max_pieces_ = 0;
};

namespace detail {

inline std::uint64_t fnv(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string marked(char32_t c) {
  std::string s(kWordMarker);
  utf8_append(s, c);
  return s;
}

}  // namespace detail

/// Base inventory: for every character seen, a word-initial and a continuation
/// piece, sorted by code point after the special tokens.
inline std::vector<std::string> base_inventory(const std::vector<std::string>& corpus) {
  std::set<char32_t> chars;
  for (const auto& line : corpus)
    for (char32_t c : utf8_decode(line))
      if (!is_space(c)) chars.insert(c);
  std::vector<std::string> out(Vocabulary::specials());
  for (char32_t c : chars) out.push_back(detail::marked(c));
  for (char32_t c : chars) {
    std::string s;
    utf8_append(s, c);
    out.push_back(std::move(s));
  }
  return out;
}

/// Priority used to break ties between equally frequent pairs (lower wins).
inline std::uint64_t merge_priority(std::uint64_t seed, const std::string& left, const std::string& right) {
  return mix_seed(seed, detail::fnv(left + '\x1f' + right));
}

/// Trains a subword vocabulary by repeatedly merging the most frequent
/// adjacent pair (word-internal) until `vocab_size` entries exist or no pair
/// remains. The seed only reorders ties.
inline Vocabulary train_tokenizer(const std::vector<std::string>& corpus, std::size_t vocab_size,
                                  std::uint64_t seed) {
  if (corpus.empty()) throw ConfigError("train_tokenizer: empty corpus");
  if (vocab_size <= Vocabulary::kNumSpecial)
    throw ConfigError("train_tokenizer: vocab_size must exceed the special-token count");
  std::vector<std::string> entries = base_inventory(corpus);
  if (vocab_size < entries.size()) {
    throw ConfigError("train_tokenizer: vocab_size " + std::to_string(vocab_size) +
                      " is smaller than the character inventory (" + std::to_string(entries.size()) +
                      " entries including specials)");
  }

  // Word types with frequencies, as symbol sequences.
  std::map<std::string, std::size_t> freq;
  for (const auto& line : corpus)
    for (const auto& w : split_whitespace(line)) ++freq[w];
  std::vector<std::pair<std::vector<std::string>, std::size_t>> words;
  for (const auto& [w, f] : freq) {
    const auto cps = utf8_decode(w);
    std::vector<std::string> syms;
    for (std::size_t i = 0; i < cps.size(); ++i) {
      if (i == 0) {
        syms.push_back(detail::marked(cps[i]));
      } else {
        std::string s;
        utf8_append(s, cps[i]);
        syms.push_back(std::move(s));
      }
    }
    words.emplace_back(std::move(syms), f);
  }

  std::set<std::string> present(entries.begin(), entries.end());
  while (entries.size() < vocab_size) {
    std::map<std::pair<std::string, std::string>, std::size_t> counts;
    for (const auto& [syms, f] : words)
      for (std::size_t i = 0; i + 1 < syms.size(); ++i) counts[{syms[i], syms[i + 1]}] += f;
    if (counts.empty()) break;
    const std::pair<std::string, std::string>* best = nullptr;
    std::size_t best_count = 0;
    std::uint64_t best_prio = 0;
    for (const auto& [pair, c] : counts) {
      const auto prio = merge_priority(seed, pair.first, pair.second);
      if (c > best_count || (c == best_count && prio < best_prio)) {
        best = &pair;
        best_count = c;
        best_prio = prio;
      }
    }
    const std::string merged = best->first + best->second;
    const std::string left = best->first, right = best->second;
    for (auto& [syms, f] : words) {
      std::vector<std::string> next;
      next.reserve(syms.size());
      for (std::size_t i = 0; i < syms.size(); ++i) {
        if (i + 1 < syms.size() && syms[i] == left && syms[i + 1] == right) {
          next.push_back(merged);
          ++i;
        } else {
          next.push_back(syms[i]);
        }
      }
      syms = std::move(next);
    }
    if (present.insert(merged).second) entries.push_back(merged);
  }
  return Vocabulary(std::move(entries));
}

/// Greedy longest-match segmentation with code-point spans. Unknown
/// characters become <unk> pieces of length one.
inline std::vector<Subword> tokenize_with_spans(const Vocabulary& vocab, std::string_view text) {
  const std::u32string cps = utf8_decode(text);
  std::vector<Subword> out;
  std::size_t i = 0;
  const std::size_t max_len = vocab.max_entry_length();
  while (i < cps.size()) {
    if (is_space(cps[i])) {
      ++i;
      continue;
    }
    std::size_t word_end = i;
    while (word_end < cps.size() && !is_space(cps[word_end])) ++word_end;
    bool initial = true;
    while (i < word_end) {
      std::size_t take = 0;
      int id = Vocabulary::kUnk;
      const std::size_t limit = std::min(word_end - i, max_len);
      for (std::size_t len = limit; len >= 1; --len) {
        std::string key = initial ? std::string(kWordMarker) : std::string();
        key += utf8_encode(std::u32string_view(cps).substr(i, len));
        if (const auto found = vocab.find(key)) {
          take = len;
          id = *found;
          break;
        }
      }
      if (take == 0) take = 1;  // <unk>
      out.push_back(Subword{utf8_encode(std::u32string_view(cps).substr(i, take)), Span{i, i + take}, id});
      i += take;
      initial = false;
    }
  }
  return out;
}

inline std::vector<int> ids_of(const std::vector<Subword>& pieces) {
  std::vector<int> out;
  out.reserve(pieces.size());
  for (const auto& p : pieces) out.push_back(p.id);
  return out;
}

inline std::vector<Span> spans_of(const std::vector<Subword>& pieces) {
  std::vector<Span> out;
  out.reserve(pieces.size());
  for (const auto& p : pieces) out.push_back(p.span);
  return out;
}

inline std::vector<int> encode(const Vocabulary& vocab, std::string_view text) {
  return ids_of(tokenize_with_spans(vocab, text));
}

/// Text rendered from ids plus, for every id, its span in that text
/// (special tokens other than <unk> get no span).
struct Rendering {
  std::string text;
  std::vector<std::optional<Span>> spans;
};

inline Rendering render(const Vocabulary& vocab, std::span<const int> ids) {
  Rendering r;
  r.spans.reserve(ids.size());
  std::size_t pos = 0;  // code points emitted so far
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab.size())
      throw InputError("render: id " + std::to_string(id) + " out of vocabulary range");
    if (Vocabulary::is_special(id) && id != Vocabulary::kUnk) {
      r.spans.emplace_back(std::nullopt);
      continue;
    }
    if ((vocab.is_word_initial(id) || id == Vocabulary::kUnk) && pos > 0) {
      r.text.push_back(' ');
      ++pos;
    }
    const std::string s = vocab.surface(id);
    const std::size_t n = utf8_decode(s).size();
    r.text += s;
    r.spans.emplace_back(Span{pos, pos + n});
    pos += n;
  }
  return r;
}

inline std::string detokenize(const Vocabulary& vocab, std::span<const int> ids) {
  return render(vocab, ids).text;
}

/// Rebuilds text from pieces by placing each surface form at its span and
/// filling the gaps with the corresponding characters of `whitespace_source`
/// (or single spaces when not given).
inline std::string reassemble(const std::vector<Subword>& pieces, std::string_view whitespace_source = {}) {
  const std::u32string ws = utf8_decode(whitespace_source);
  std::u32string out;
  for (const auto& p : pieces) {
    while (out.size() < p.span.start) out.push_back(out.size() < ws.size() ? ws[out.size()] : U' ');
    out += utf8_decode(p.text);
  }
  while (out.size() < ws.size()) out.push_back(ws[out.size()]);
  return utf8_encode(out);
}

}  // namespace softalign::tok
