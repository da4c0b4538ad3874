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

// Synthetic multi-domain parallel corpora.
//
// A "world" fixes a source lexicon, a word-level grammar mapping every source
// word onto a target slot, and synonym groups. A slot is either a literal
// target word or a synonym group; each domain realises a group member with
// its own bias, so domains share meaning but differ in surface forms.

#pragma once

#include <algorithm>
#include <filesystem>
#include <set>
#include <unordered_set>

#include "softalign/common.hpp"
#include "softalign/config.hpp"

namespace softalign::corpus {

struct SentencePair {
  std::string source;
  std::string target;
  std::string domain_id;

  friend bool operator==(const SentencePair&, const SentencePair&) = default;
};

using PairList = std::vector<SentencePair>;

/// Where a source word lands on the target side.
struct TargetSlot {
  static constexpr std::size_t kLiteral = static_cast<std::size_t>(-1);
  std::size_t group = kLiteral;  // index into synonym_groups, or kLiteral
  std::string word;              // used when group == kLiteral
};

struct DomainSpec {
  std::string name;
  std::vector<std::string> source_words;
  std::vector<double> source_weights;  // empty means uniform
  std::vector<TargetSlot> grammar;      // grammar[i] realises source_words[i]
  std::vector<std::vector<std::string>> synonym_groups;
  std::vector<std::vector<double>> synonym_bias;  // per group, sums to 1
  bool reverse_order = false;
  std::size_t min_length = 3;
  std::size_t max_length = 8;

  std::size_t vocabulary_size() const { return source_words.size(); }

  void validate() const {
    auto fail = [&](const std::string& what) {
      throw ConfigError("domain '" + name + "': " + what);
    };
    if (source_words.empty()) fail("empty source vocabulary");
    if (grammar.size() != source_words.size()) fail("grammar must map every source word");
    if (!source_weights.empty()) {
      if (source_weights.size() != source_words.size()) fail("source weight count mismatch");
      double total = 0.0;
      for (double w : source_weights) {
        if (!(w >= 0.0) || !std::isfinite(w)) fail("negative or non-finite source weight");
        total += w;
      }
      if (!(total > 0.0)) fail("source weights have zero mass");
    }
    if (synonym_bias.size() != synonym_groups.size()) fail("one bias row per synonym group required");
    for (std::size_t g = 0; g < synonym_groups.size(); ++g) {
      if (synonym_groups[g].empty()) fail("synonym group " + std::to_string(g) + " is empty");
      const auto& w = synonym_bias[g];
      if (w.size() != synonym_groups[g].size())
        fail("bias for group " + std::to_string(g) + " has wrong arity");
      double total = 0.0;
      for (double x : w) {
        if (!(x >= 0.0)) fail("negative bias in group " + std::to_string(g));
        total += x;
      }
      if (std::abs(total - 1.0) > 1e-9)
        fail("bias weights of group " + std::to_string(g) + " sum to " + format_double(total) +
             ", expected 1");
    }
    for (const auto& slot : grammar) {
      if (slot.group == TargetSlot::kLiteral) {
        if (slot.word.empty()) fail("grammar maps a source word to an empty target word");
      } else if (slot.group >= synonym_groups.size()) {
        fail("grammar references unknown synonym group");
      }
    }
    if (min_length < 1 || min_length > max_length) fail("invalid sentence length range");
  }
};

/// Deterministic pseudo-word generator over a consonant/vowel inventory.
inline std::vector<std::string> make_lexicon(std::size_t count, std::uint64_t seed,
                                             std::string_view consonants, std::string_view vowels,
                                             const std::set<std::string>& taken = {}) {
  Rng rng(seed);
  std::vector<std::string> out;
  std::set<std::string> seen = taken;
  std::size_t attempts = 0;
  while (out.size() < count) {
    if (++attempts > 1000000) throw ConfigError("lexicon inventory too small for requested size");
    const std::size_t syllables = 2 + static_cast<std::size_t>(rng.below(2));
    std::string w;
    for (std::size_t s = 0; s < syllables; ++s) {
      w.push_back(consonants[rng.below(consonants.size())]);
      w.push_back(vowels[rng.below(vowels.size())]);
    }
    if (seen.insert(w).second) out.push_back(std::move(w));
  }
  return out;
}

/// Generates `n_pairs` sentence pairs; a pure function of (spec, n_pairs, seed).
inline PairList generate_domain(const DomainSpec& spec, std::size_t n_pairs, std::uint64_t seed) {
  spec.validate();
  if (n_pairs == 0) throw ConfigError("generate_domain: n_pairs must be positive");
  std::vector<double> weights = spec.source_weights;
  if (weights.empty()) weights.assign(spec.source_words.size(), 1.0);

  Rng rng(seed);
  PairList out;
  out.reserve(n_pairs);
  const std::size_t span = spec.max_length - spec.min_length + 1;
  for (std::size_t p = 0; p < n_pairs; ++p) {
    const std::size_t len = spec.min_length + static_cast<std::size_t>(rng.below(span));
    std::vector<std::string> src, tgt;
    src.reserve(len);
    tgt.reserve(len);
    for (std::size_t k = 0; k < len; ++k) {
      const std::size_t w = rng.categorical(weights);
      src.push_back(spec.source_words[w]);
      const TargetSlot& slot = spec.grammar[w];
      if (slot.group == TargetSlot::kLiteral) {
        tgt.push_back(slot.word);
      } else {
        const auto& group = spec.synonym_groups[slot.group];
        tgt.push_back(group[rng.categorical(spec.synonym_bias[slot.group])]);
      }
    }
    if (spec.reverse_order) std::reverse(tgt.begin(), tgt.end());
    out.push_back(SentencePair{join(src, " "), join(tgt, " "), spec.name});
  }
  return out;
}

/// Keeps the first occurrence of every exact (source, target) pair.
inline PairList deduplicate(const PairList& pairs) {
  std::unordered_set<std::string> seen;
  seen.reserve(pairs.size() * 2);
  PairList out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (seen.insert(p.source + '\t' + p.target).second) out.push_back(p);
  }
  return out;
}

struct CorpusSplits {
  PairList train;
  PairList validation;
  PairList test;
};

/// Deduplicates, then draws validation and test sets; train keeps the rest in
/// input order.
inline CorpusSplits split(const PairList& pairs, std::size_t n_val, std::size_t n_test,
                          std::uint64_t seed) {
  PairList unique = deduplicate(pairs);
  if (unique.size() <= n_val + n_test) {
    throw ConfigError("split: need at least " + std::to_string(n_val + n_test + 1) +
                      " distinct pairs, got " + std::to_string(unique.size()));
  }
  std::vector<std::size_t> order(unique.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  CorpusSplits s;
  std::vector<char> held(unique.size(), 0);
  for (std::size_t i = 0; i < n_val; ++i) {
    s.validation.push_back(unique[order[i]]);
    held[order[i]] = 1;
  }
  for (std::size_t i = n_val; i < n_val + n_test; ++i) {
    s.test.push_back(unique[order[i]]);
    held[order[i]] = 1;
  }
  for (std::size_t i = 0; i < unique.size(); ++i)
    if (!held[i]) s.train.push_back(unique[i]);
  return s;
}

// ----------------------------------------------------------------------------
// Persistence: one pair per line, "source\ttarget\n"; domain is in the file
// name (<domain>.<split>.tsv).
// ----------------------------------------------------------------------------

inline std::string split_file_name(std::string_view domain, std::string_view split_name) {
  return std::string(domain) + "." + std::string(split_name) + ".tsv";
}

inline void write_tsv(const std::string& path, const PairList& pairs) {
  auto os = open_out(path, true);
  for (const auto& p : pairs) {
    if (p.source.find_first_of("\t\n") != std::string::npos ||
        p.target.find_first_of("\t\n") != std::string::npos)
      throw InputError("sentence contains a tab or newline; cannot write TSV");
    os << p.source << '\t' << p.target << '\n';
  }
  if (!os) throw IoError("write failed: " + path);
}

inline PairList read_tsv(const std::string& path, const std::string& domain) {
  auto is = open_in(path, true);
  PairList out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos)
      throw IoError(path + ":" + std::to_string(line_no) + ": expected exactly one tab");
    SentencePair p{line.substr(0, tab), line.substr(tab + 1), domain};
    if (p.source.empty() || p.target.empty())
      throw IoError(path + ":" + std::to_string(line_no) + ": empty side");
    out.push_back(std::move(p));
  }
  return out;
}

inline std::vector<std::string> targets_of(const PairList& pairs) {
  std::vector<std::string> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(p.target);
  return out;
}

inline std::vector<std::string> sources_of(const PairList& pairs) {
  std::vector<std::string> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(p.source);
  return out;
}

// ----------------------------------------------------------------------------
// World configuration file. Grammar:
//
//   source_vocabulary = 40        # auto-generated source words
//   source_words = kapo tibe ...  # or an explicit lexicon (overrides the above)
//   lexicon_seed = 7
//   length_min = 3
//   length_max = 8
//   reverse_order = false
//   identity_grammar = false      # map every source word onto itself
//   group = big large             # synonym group, indexed in order of appearance
//   map = kapo @0                 # explicit slot: source word -> word or @group
//
//   [domain law]
//   bias.0 = 0.9 0.1              # member weights of group 0 in this domain
//   topic = 0 10 4.0              # multiply weights of source words [0,10) by 4
//
// Without map lines the grammar is automatic: source word i realises group i
// for i < #groups and a generated target word otherwise.
// ----------------------------------------------------------------------------

struct World {
  std::vector<DomainSpec> domains;

  const DomainSpec& domain(std::string_view name) const {
    for (const auto& d : domains)
      if (d.name == name) return d;
    throw ConfigError("unknown domain '" + std::string(name) + "'");
  }
};

inline World parse_world(const KeyValueConfig& cfg) {
  DomainSpec base;
  base.min_length = cfg.get_or<std::size_t>("length_min", 3);
  base.max_length = cfg.get_or<std::size_t>("length_max", 8);
  base.reverse_order = cfg.get_or<bool>("reverse_order", false);
  const bool identity = cfg.get_or<bool>("identity_grammar", false);
  const auto lexicon_seed = cfg.get_or<std::uint64_t>("lexicon_seed", 7);

  for (const auto& g : cfg.get_all("group")) base.synonym_groups.push_back(split_whitespace(g));

  std::set<std::string> taken;
  for (const auto& g : base.synonym_groups) taken.insert(g.begin(), g.end());

  if (const auto explicit_words = cfg.get("source_words")) {
    base.source_words = split_whitespace(*explicit_words);
  } else {
    const auto n = cfg.get_or<std::size_t>("source_vocabulary", 40);
    base.source_words = make_lexicon(n, lexicon_seed, "ptkbdgfh", "aeiou", taken);
  }
  taken.insert(base.source_words.begin(), base.source_words.end());

  base.grammar.resize(base.source_words.size());
  const auto maps = cfg.get_all("map");
  if (identity) {
    for (std::size_t i = 0; i < base.source_words.size(); ++i)
      base.grammar[i].word = base.source_words[i];
  } else if (!maps.empty()) {
    std::vector<char> mapped(base.source_words.size(), 0);
    for (const auto& m : maps) {
      const auto parts = split_whitespace(m);
      if (parts.size() != 2) throw ConfigError("map line needs '<source> <target|@group>': " + m);
      const auto it = std::find(base.source_words.begin(), base.source_words.end(), parts[0]);
      if (it == base.source_words.end()) throw ConfigError("map: unknown source word " + parts[0]);
      auto& slot = base.grammar[static_cast<std::size_t>(it - base.source_words.begin())];
      if (parts[1].front() == '@') {
        slot.group = cfg.convert<std::size_t>(parts[1].substr(1), "map");
      } else {
        slot.word = parts[1];
      }
      mapped[static_cast<std::size_t>(it - base.source_words.begin())] = 1;
    }
    for (std::size_t i = 0; i < mapped.size(); ++i)
      if (!mapped[i]) throw ConfigError("map: no slot for source word " + base.source_words[i]);
  } else {
    const std::size_t n_groups = std::min(base.synonym_groups.size(), base.source_words.size());
    const auto literals = make_lexicon(base.source_words.size() - n_groups,
                                       mix_seed(lexicon_seed, 1), "mnlrsvzw", "aeiouy", taken);
    for (std::size_t i = 0; i < base.source_words.size(); ++i) {
      if (i < n_groups) {
        base.grammar[i].group = i;
      } else {
        base.grammar[i].word = literals[i - n_groups];
      }
    }
  }

  World world;
  for (const auto& section : cfg.sections()) {
    const auto parts = split_whitespace(section);
    if (parts.size() != 2 || parts[0] != "domain") continue;
    DomainSpec d = base;
    d.name = parts[1];
    d.synonym_bias.clear();
    for (std::size_t g = 0; g < d.synonym_groups.size(); ++g) {
      if (const auto b = cfg.get("bias." + std::to_string(g), section)) {
        d.synonym_bias.push_back(parse_doubles(*b, "bias." + std::to_string(g)));
      } else {
        const auto size = d.synonym_groups[g].size();
        d.synonym_bias.emplace_back(size, 1.0 / static_cast<double>(size));
      }
    }
    const auto topics = cfg.get_all("topic", section);
    if (!topics.empty()) {
      d.source_weights.assign(d.source_words.size(), 1.0);
      for (const auto& t : topics) {
        const auto v = parse_doubles(t, "topic");
        if (v.size() != 3 || v[0] < 0 || v[1] < v[0])
          throw ConfigError("topic line needs '<first> <last> <factor>': " + t);
        const auto last = std::min(static_cast<std::size_t>(v[1]), d.source_words.size());
        for (auto i = static_cast<std::size_t>(v[0]); i < last; ++i) d.source_weights[i] *= v[2];
      }
    }
    d.validate();
    world.domains.push_back(std::move(d));
  }
  if (world.domains.empty()) throw ConfigError("world config declares no [domain NAME] sections");
  return world;
}

}  // namespace softalign::corpus
