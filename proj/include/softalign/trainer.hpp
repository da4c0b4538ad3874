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

// Adaptation loop: warmup-then-constant gradient descent, periodic
// validation BLEU, early stopping and per-evaluation checkpoints.

#pragma once

#include <filesystem>
#include <map>

#include "softalign/eval.hpp"
#include "softalign/objectives.hpp"

namespace softalign::train {

using model::Seq2SeqModel;
using obj::LossValue;
using obj::ObjectiveConfig;

struct TrainConfig {
  ObjectiveConfig objective;
  double learning_rate = 2e-5;
  std::size_t warmup_steps = 1000;
  std::string schedule = "constant_decay";
  std::size_t batch_size = 1;
  std::size_t max_steps = 10000;
  std::size_t eval_every = 500;
  std::size_t patience_evals = 20;
  std::uint64_t seed = 1;
  bool sweep_mode = false;  // restrict learning_rate to the sweep range

  void validate() const {
    objective.validate();
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("train: learning_rate must be > 0");
    if (sweep_mode && (learning_rate < 2e-7 || learning_rate > 2e-4))
      throw ConfigError("train: learning_rate outside the sweep range [2e-7, 2e-4]");
    if (schedule != "constant_decay") throw ConfigError("train: unknown schedule '" + schedule + "'");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (eval_every < 1) throw ConfigError("train: eval_every must be >= 1");
    if (patience_evals < 1) throw ConfigError("train: patience_evals must be >= 1");
  }

  std::size_t early_stop_horizon() const { return eval_every * patience_evals; }
};

/// Linear warmup from 0, then constant.
inline double lr_at(const TrainConfig& cfg, std::size_t step) {
  if (cfg.warmup_steps == 0 || step >= cfg.warmup_steps) return cfg.learning_rate;
  return cfg.learning_rate * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
}

using DomainScores = std::map<std::string, double>;

struct LogRow {
  std::size_t step = 0;
  double lr = 0.0;
  LossValue loss;  // mean over the updates since the previous row
  DomainScores validation_bleu;
};

struct CheckpointLog {
  std::vector<LogRow> rows;
  std::string id_domain;
  double alpha = 0.0;
  std::size_t best_step = 0;      // argmax of ID validation BLEU, ties → earliest
  std::size_t selected_step = 0;  // checkpoint used for testing
  bool improved = false;          // ID BLEU ever beat the step-0 score

  std::size_t index_of(std::size_t step) const {
    for (std::size_t i = 0; i < rows.size(); ++i)
      if (rows[i].step == step) return i;
    throw InputError("no checkpoint at step " + std::to_string(step));
  }

  std::vector<std::uint64_t> steps() const {
    std::vector<std::uint64_t> out;
    for (const auto& r : rows) out.push_back(r.step);
    return out;
  }

  std::map<std::string, std::vector<double>> validation_curves() const {
    std::map<std::string, std::vector<double>> out;
    for (const auto& r : rows)
      for (const auto& [d, b] : r.validation_bleu) out[d].push_back(b);
    return out;
  }
};

inline std::string checkpoint_name(std::size_t step) { return "ckpt_" + std::to_string(step) + ".bin"; }

inline void write_log_csv(const std::string& path, const CheckpointLog& log) {
  auto os = open_out(path);
  os << "step,lr,loss_total,loss_mle,loss_extra";
  std::vector<std::string> domains;
  if (!log.rows.empty())
    for (const auto& [d, _] : log.rows.front().validation_bleu) domains.push_back(d);
  for (const auto& d : domains) os << ",bleu_" << d;
  os << '\n';
  for (const auto& r : log.rows) {
    os << r.step << ',' << format_double(r.lr) << ',' << format_double(r.loss.total) << ','
       << format_double(r.loss.mle_part) << ',' << format_double(r.loss.extra_part);
    for (const auto& d : domains) os << ',' << format_double(r.validation_bleu.at(d));
    os << '\n';
  }
  if (!os) throw IoError("write failed: " + path);
}

inline void write_meta_csv(const std::string& path, const CheckpointLog& log) {
  auto os = open_out(path);
  os << "key,value\n"
     << "id_domain," << log.id_domain << '\n'
     << "alpha," << format_double(log.alpha) << '\n'
     << "best_step," << log.best_step << '\n'
     << "selected_step," << log.selected_step << '\n'
     << "improved," << (log.improved ? 1 : 0) << '\n';
  if (!os) throw IoError("write failed: " + path);
}

/// Reads log.csv and meta.csv from a run directory.
inline CheckpointLog read_log(const std::string& dir) {
  namespace fs = std::filesystem;
  CheckpointLog log;
  {
    auto is = open_in((fs::path(dir) / "log.csv").string());
    std::string line;
    std::getline(is, line);
    std::vector<std::string> header;
    {
      std::stringstream ss(line);
      for (std::string f; std::getline(ss, f, ',');) header.push_back(f);
    }
    if (header.size() < 5) throw IoError("malformed log.csv header in " + dir);
    while (std::getline(is, line)) {
      if (trim(line).empty()) continue;
      std::vector<std::string> f;
      std::stringstream ss(line);
      for (std::string x; std::getline(ss, x, ',');) f.push_back(x);
      if (f.size() != header.size()) throw IoError("malformed log.csv row in " + dir + ": " + line);
      LogRow r;
      r.step = std::stoull(f[0]);
      r.lr = std::stod(f[1]);
      r.loss = LossValue{std::stod(f[2]), std::stod(f[3]), std::stod(f[4])};
      for (std::size_t i = 5; i < f.size(); ++i) r.validation_bleu[header[i].substr(5)] = std::stod(f[i]);
      log.rows.push_back(r);
    }
  }
  auto is = open_in((fs::path(dir) / "meta.csv").string());
  std::string line;
  std::getline(is, line);
  while (std::getline(is, line)) {
    const auto comma = line.find(',');
    if (comma == std::string::npos) continue;
    const std::string k = line.substr(0, comma), v = line.substr(comma + 1);
    if (k == "id_domain") log.id_domain = v;
    else if (k == "alpha") log.alpha = std::stod(v);
    else if (k == "best_step") log.best_step = std::stoull(v);
    else if (k == "selected_step") log.selected_step = std::stoull(v);
    else if (k == "improved") log.improved = v == "1";
  }
  return log;
}

/// Greedy-decodes `pairs` and scores them against their targets.
inline double decode_bleu(const Seq2SeqModel& m, const corpus::PairList& pairs) {
  std::vector<std::string> hyps, refs;
  for (const auto& p : pairs) {
    const auto src = tok::encode(m.vocab(), p.source);
    const auto ref_len = tok::encode(m.vocab(), p.target).size();
    const std::size_t cap = std::min(m.config().max_len - 1, 2 * std::max<std::size_t>(ref_len, src.size()) + 2);
    hyps.push_back(tok::detokenize(m.vocab(), m.greedy_decode(src, cap)));
    refs.push_back(p.target);
  }
  return eval::bleu(hyps, refs).value;
}

/// Validation BLEU per domain at a given step.
using Evaluator = std::function<DomainScores(const Seq2SeqModel&, std::size_t step)>;

inline Evaluator bleu_evaluator(std::map<std::string, corpus::PairList> validation) {
  return [validation = std::move(validation)](const Seq2SeqModel& m, std::size_t) {
    DomainScores out;
    for (const auto& [d, pairs] : validation) out[d] = decode_bleu(m, pairs);
    return out;
  };
}

/// Early-stopping bookkeeping over the ID score sequence.
class EarlyStopper {
 public:
  explicit EarlyStopper(std::size_t patience) : patience_(patience) {}

  /// Records the score at `step`; true when training should stop.
  bool record(std::size_t step, double score) {
    if (!seen_ || score > best_) {
      if (seen_) improved_ = true;
      best_ = score;
      best_step_ = step;
      stale_ = 0;
      seen_ = true;
      return false;
    }
    return ++stale_ >= patience_;
  }

  std::size_t best_step() const { return best_step_; }
  bool improved() const { return improved_; }
  double best() const { return best_; }

 private:
  std::size_t patience_;
  bool seen_ = false;
  bool improved_ = false;
  double best_ = 0.0;
  std::size_t best_step_ = 0;
  std::size_t stale_ = 0;
};

/// Deterministic sample order: epochs of seeded permutations.
class BatchStream {
 public:
  BatchStream(std::size_t n, std::uint64_t seed) : n_(n), seed_(seed) {
    if (n == 0) throw InputError("training set is empty");
  }

  std::size_t next() {
    if (pos_ == order_.size()) {
      order_.resize(n_);
      std::iota(order_.begin(), order_.end(), std::size_t{0});
      Rng rng(mix_seed(seed_, epoch_++));
      rng.shuffle(order_);
      pos_ = 0;
    }
    return order_[pos_++];
  }

 private:
  std::size_t n_;
  std::uint64_t seed_;
  std::uint64_t epoch_ = 0;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

/// MLE and complement values on the first ten training samples, without
/// updates; input to auto_balance_alpha.
inline double calibrate_alpha(Seq2SeqModel& m, const std::vector<obj::Sample>& samples, const ObjectiveConfig& cfg,
                              const obj::Grounding& g, std::uint64_t seed) {
  if (!obj::has_extra(cfg.kind)) return 0.0;
  std::vector<double> mle, extra;
  for (std::size_t i = 0; i < 10; ++i) {
    ad::Tape t(false);
    const auto l = obj::evaluate(t, m, samples[i % samples.size()], cfg, g, mix_seed(seed, 0xCA11B000 + i));
    mle.push_back(l.value.mle_part);
    extra.push_back(l.value.extra_part);
  }
  return obj::auto_balance_alpha(mle, extra);
}

struct TrainInputs {
  std::vector<obj::Sample> train;  // ID domain training samples
  std::string id_domain;
  obj::Grounding grounding;
  Evaluator evaluator;
  std::string output_dir;  // empty: no files written
};

/// Runs adaptation in place on `m`; on return `m` holds the final
/// parameters (not necessarily the selected checkpoint).
inline CheckpointLog train(Seq2SeqModel& m, const TrainInputs& in, TrainConfig cfg) {
  namespace fs = std::filesystem;
  cfg.validate();
  if (in.train.empty()) throw InputError("train: no training samples");
  if (!in.evaluator) throw ConfigError("train: no evaluator");
  if (!in.output_dir.empty()) fs::create_directories(in.output_dir);

  CheckpointLog log;
  log.id_domain = in.id_domain;
  if (cfg.objective.auto_alpha) cfg.objective.alpha = calibrate_alpha(m, in.train, cfg.objective, in.grounding, cfg.seed);
  log.alpha = obj::has_extra(cfg.objective.kind) ? cfg.objective.alpha : 0.0;

  EarlyStopper stopper(cfg.patience_evals);
  auto checkpoint = [&](std::size_t step, double lr, const LossValue& loss) {
    LogRow row{step, lr, loss, in.evaluator(m, step)};
    const auto it = row.validation_bleu.find(in.id_domain);
    if (it == row.validation_bleu.end()) throw InputError("evaluator returned no score for ID domain " + in.id_domain);
    if (!in.output_dir.empty())
      m.save_checkpoint((fs::path(in.output_dir) / checkpoint_name(step)).string(), step, cfg.seed);
    log.rows.push_back(std::move(row));
    return stopper.record(step, it->second);
  };

  checkpoint(0, 0.0, LossValue{});
  BatchStream stream(in.train.size(), mix_seed(cfg.seed, 0xBA7C4));
  LossValue acc;
  std::size_t acc_n = 0;
  const double inv_b = 1.0 / static_cast<double>(cfg.batch_size);
  for (std::size_t step = 1; step <= cfg.max_steps; ++step) {
    m.zero_grad();
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      const std::size_t idx = stream.next();
      ad::Tape t(true);
      const std::uint64_t sample_seed = mix_seed(cfg.seed, (static_cast<std::uint64_t>(step) << 20) + b);
      const auto l = obj::evaluate(t, m, in.train[idx], cfg.objective, in.grounding, sample_seed);
      if (!std::isfinite(l.value.total))
        throw NumericError("non-finite loss at step " + std::to_string(step) + " from objective '" +
                           obj::to_string(cfg.objective.kind) + "'");
      t.backward(l.var, inv_b);
      acc.total += l.value.total;
      acc.mle_part += l.value.mle_part;
      acc.extra_part += l.value.extra_part;
      ++acc_n;
    }
    const double lr = lr_at(cfg, step);
    for (auto& p : m.parameters()) {
      for (std::size_t k = 0; k < p.value.size(); ++k) {
        const double g = p.grad.data[k];
        if (!std::isfinite(g))
          throw NumericError("non-finite gradient at step " + std::to_string(step) + " from objective '" +
                             obj::to_string(cfg.objective.kind) + "'");
        p.value.data[k] -= lr * g;
      }
    }
    if (step % cfg.eval_every == 0 || step == cfg.max_steps) {
      const double inv = 1.0 / static_cast<double>(acc_n);
      const LossValue mean{acc.total * inv, acc.mle_part * inv, acc.extra_part * inv};
      acc = LossValue{};
      acc_n = 0;
      if (checkpoint(step, lr, mean)) break;
    }
  }
  log.best_step = stopper.best_step();
  log.improved = stopper.improved();
  log.selected_step = log.improved ? log.best_step : log.rows.back().step;
  if (!in.output_dir.empty()) {
    write_log_csv((fs::path(in.output_dir) / "log.csv").string(), log);
    write_meta_csv((fs::path(in.output_dir) / "meta.csv").string(), log);
  }
  return log;
}

// ----------------------------------------------------------------------------
// Pretraining of the original (pre-adaptation) model.
// ----------------------------------------------------------------------------

struct PretrainConfig {
  double learning_rate = 3e-3;
  std::size_t steps = 3000;
  std::size_t batch_size = 8;
  std::size_t warmup_steps = 200;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 1;
};

/// MLE with Adam over a mixed-domain corpus.
inline void pretrain(Seq2SeqModel& m, const std::vector<obj::Sample>& samples, const PretrainConfig& cfg,
                     const std::function<void(std::size_t, double)>& progress = {}) {
  if (samples.empty()) throw InputError("pretrain: no samples");
  std::vector<std::vector<double>> mom(m.parameters().size()), var(m.parameters().size());
  for (std::size_t i = 0; i < m.parameters().size(); ++i) {
    mom[i].assign(m.parameters()[i].value.size(), 0.0);
    var[i].assign(m.parameters()[i].value.size(), 0.0);
  }
  BatchStream stream(samples.size(), mix_seed(cfg.seed, 0x9E7A));
  const double inv_b = 1.0 / static_cast<double>(cfg.batch_size);
  double b1t = 1.0, b2t = 1.0;
  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    m.zero_grad();
    double loss = 0.0;
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      ad::Tape t(true);
      const auto l = obj::mle_loss(t, m, samples[stream.next()]);
      if (!std::isfinite(l.value.total)) throw NumericError("non-finite loss during pretraining at step " + std::to_string(step));
      t.backward(l.var, inv_b);
      loss += l.value.total * inv_b;
    }
    const double lr = cfg.learning_rate * std::min(1.0, static_cast<double>(step) / static_cast<double>(std::max<std::size_t>(cfg.warmup_steps, 1)));
    b1t *= cfg.beta1;
    b2t *= cfg.beta2;
    for (std::size_t i = 0; i < m.parameters().size(); ++i) {
      auto& p = m.parameters()[i];
      for (std::size_t k = 0; k < p.value.size(); ++k) {
        const double g = p.grad.data[k];
        mom[i][k] = cfg.beta1 * mom[i][k] + (1.0 - cfg.beta1) * g;
        var[i][k] = cfg.beta2 * var[i][k] + (1.0 - cfg.beta2) * g * g;
        const double mh = mom[i][k] / (1.0 - b1t), vh = var[i][k] / (1.0 - b2t);
        p.value.data[k] -= lr * mh / (std::sqrt(vh) + cfg.epsilon);
      }
    }
    if (progress) progress(step, loss);
  }
}

}  // namespace softalign::train
