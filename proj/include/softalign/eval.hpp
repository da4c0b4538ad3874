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

// Corpus BLEU, checkpoint-window averaging and the ID/OOD robustness report.

#pragma once

#include <array>
#include <map>
#include <tuple>

#include "softalign/common.hpp"

namespace softalign::eval {

struct BleuScore {
  double value = 0.0;
  std::array<double, 4> precisions{};
  double brevity_penalty = 0.0;
  std::array<std::uint64_t, 4> matches{};
  std::array<std::uint64_t, 4> totals{};
  std::uint64_t hyp_length = 0;
  std::uint64_t ref_length = 0;
};

namespace detail {

using NgramCounts = std::map<std::vector<std::string_view>, std::uint64_t>;

inline NgramCounts ngrams(const std::vector<std::string_view>& toks, std::size_t n) {
  NgramCounts out;
  for (std::size_t i = 0; i + n <= toks.size(); ++i)
    ++out[std::vector<std::string_view>(toks.begin() + static_cast<std::ptrdiff_t>(i),
                                        toks.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return out;
}

inline std::vector<std::string_view> tokens(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    const std::size_t start = i;
    while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    if (i > start) out.push_back(s.substr(start, i - start));
  }
  return out;
}

}  // namespace detail

/// Corpus BLEU-4 over whitespace tokens, unsmoothed.
inline BleuScore bleu(const std::vector<std::string>& hypotheses, const std::vector<std::string>& references) {
  if (hypotheses.size() != references.size())
    throw InputError("bleu: " + std::to_string(hypotheses.size()) + " hypotheses vs " +
                     std::to_string(references.size()) + " references");
  if (hypotheses.empty()) throw InputError("bleu: empty corpus");
  BleuScore s;
  for (std::size_t k = 0; k < hypotheses.size(); ++k) {
    const auto h = detail::tokens(hypotheses[k]);
    const auto r = detail::tokens(references[k]);
    s.hyp_length += h.size();
    s.ref_length += r.size();
    for (std::size_t n = 1; n <= 4; ++n) {
      const auto hc = detail::ngrams(h, n);
      const auto rc = detail::ngrams(r, n);
      for (const auto& [g, c] : hc) {
        const auto it = rc.find(g);
        s.matches[n - 1] += std::min(c, it == rc.end() ? std::uint64_t{0} : it->second);
        s.totals[n - 1] += c;
      }
    }
  }
  double log_sum = 0.0;
  bool zero = false;
  for (std::size_t n = 0; n < 4; ++n) {
    s.precisions[n] = s.totals[n] ? static_cast<double>(s.matches[n]) / static_cast<double>(s.totals[n]) : 0.0;
    if (s.precisions[n] == 0.0) zero = true;
    else log_sum += std::log(s.precisions[n]);
  }
  if (s.hyp_length == 0) s.brevity_penalty = 0.0;
  else if (s.hyp_length < s.ref_length)
    s.brevity_penalty = std::exp(1.0 - static_cast<double>(s.ref_length) / static_cast<double>(s.hyp_length));
  else s.brevity_penalty = 1.0;
  s.value = zero ? 0.0 : 100.0 * s.brevity_penalty * std::exp(log_sum / 4.0);
  return s;
}

/// Mean of scores[center − window .. center + window], truncated at the ends.
inline double windowed_average(std::span<const double> scores, std::size_t center, std::size_t window = 5) {
  if (scores.empty() || center >= scores.size()) throw InputError("windowed_average: empty window");
  const std::size_t lo = center >= window ? center - window : 0;
  const std::size_t hi = std::min(scores.size() - 1, center + window);
  double sum = 0.0;
  for (std::size_t i = lo; i <= hi; ++i) sum += scores[i];
  return sum / static_cast<double>(hi - lo + 1);
}

enum class Role { kId, kOod };

inline std::string to_string(Role r) { return r == Role::kId ? "ID" : "OOD"; }

struct DomainResult {
  std::string domain;
  Role role = Role::kOod;
  double original = 0.0;
  double adapted = 0.0;
  double delta_percent = 0.0;
};

struct RobustnessReport {
  std::vector<DomainResult> domains;
  double id_delta = 0.0;
  double ood_mean = 0.0;
  double ood_range = 0.0;  // OOD deltas lie within ood_mean ± ood_range
};

inline double delta_percent(double original, double adapted) {
  if (original == 0.0) throw NumericError("delta_percent: original BLEU is 0, relative change undefined");
  return (adapted - original) / original * 100.0;
}

/// Mean and half-width of the smallest mean-centred interval covering `xs`.
inline std::pair<double, double> mean_range(std::span<const double> xs) {
  if (xs.empty()) throw InputError("mean_range: no values");
  double m = 0.0;
  for (double x : xs) m += x;
  m /= static_cast<double>(xs.size());
  double r = 0.0;
  for (double x : xs) r = std::max(r, std::abs(x - m));
  return {m, r};
}

/// Builds the report from per-domain original scores and per-checkpoint
/// adapted test scores (all checkpoints of one log, in step order); the
/// adapted score is the window average around `center`.
inline RobustnessReport robustness_report(const std::map<std::string, double>& original,
                                          const std::map<std::string, std::vector<double>>& adapted_curve,
                                          std::size_t center, const std::string& id_domain,
                                          std::size_t window = 5) {
  if (!original.count(id_domain)) throw InputError("robustness_report: missing test set for ID domain " + id_domain);
  if (original.size() < 2) throw InputError("robustness_report: needs at least one OOD domain");
  RobustnessReport rep;
  std::vector<double> ood;
  for (const auto& [domain, orig] : original) {
    const auto it = adapted_curve.find(domain);
    if (it == adapted_curve.end()) throw InputError("robustness_report: missing test set for domain " + domain);
    DomainResult d;
    d.domain = domain;
    d.role = domain == id_domain ? Role::kId : Role::kOod;
    d.original = orig;
    d.adapted = windowed_average(it->second, center, window);
    d.delta_percent = delta_percent(orig, d.adapted);
    if (d.role == Role::kId) rep.id_delta = d.delta_percent;
    else ood.push_back(d.delta_percent);
    rep.domains.push_back(d);
  }
  std::tie(rep.ood_mean, rep.ood_range) = mean_range(ood);
  return rep;
}

inline void write_robustness_csv(const std::string& path, const RobustnessReport& rep) {
  auto os = open_out(path);
  os << "domain,role,original,adapted,delta_pct\n";
  for (const auto& d : rep.domains)
    os << d.domain << ',' << to_string(d.role) << ',' << format_double(d.original) << ','
       << format_double(d.adapted) << ',' << format_double(d.delta_percent) << '\n';
  if (!os) throw IoError("write failed: " + path);
}

inline RobustnessReport read_robustness_csv(const std::string& path) {
  auto is = open_in(path);
  std::string line;
  std::getline(is, line);
  RobustnessReport rep;
  std::vector<double> ood;
  while (std::getline(is, line)) {
    if (trim(line).empty()) continue;
    std::stringstream ss(line);
    std::string f[5];
    for (auto& x : f)
      if (!std::getline(ss, x, ',')) throw IoError("malformed robustness row in " + path + ": " + line);
    DomainResult d{f[0], f[1] == "ID" ? Role::kId : Role::kOod, std::stod(f[2]), std::stod(f[3]), std::stod(f[4])};
    if (d.role == Role::kId) rep.id_delta = d.delta_percent;
    else ood.push_back(d.delta_percent);
    rep.domains.push_back(d);
  }
  if (!ood.empty()) std::tie(rep.ood_mean, rep.ood_range) = mean_range(ood);
  return rep;
}

/// Long-format curve: one row per (checkpoint step, domain).
inline void write_training_curves_csv(const std::string& path, const std::vector<std::uint64_t>& steps,
                                      const std::map<std::string, std::vector<double>>& curves) {
  auto os = open_out(path);
  os << "step,domain,bleu\n";
  for (std::size_t i = 0; i < steps.size(); ++i)
    for (const auto& [domain, c] : curves) {
      if (i >= c.size()) throw InputError("training curve for " + domain + " is shorter than the step list");
      os << steps[i] << ',' << domain << ',' << format_double(c[i]) << '\n';
    }
  if (!os) throw IoError("write failed: " + path);
}

}  // namespace softalign::eval
