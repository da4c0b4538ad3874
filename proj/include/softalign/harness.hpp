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

// Experiment pipeline: prepare → decontextualize → pretrain → train →
// evaluate → report. Every stage persists its artifacts and a completion
// marker, so reruns skip finished work.
//
// Layout under <output_dir>/<plan>/:
//   data/<domain>.{train,validation,test}.tsv, model.vocab, embedder.vocab
//   data/grounding.sagt                  decontextualised table (ID domain)
//   original-seed<k>.bin                 pretrained model per seed
//   <objective>/seed<k>/ckpt_<step>.bin, log.csv, meta.csv,
//                       original_scores.csv, window_scores.csv,
//                       robustness.csv, training_curves.csv
//   report.csv                           one row per (objective, seed)
//   summary.csv                          medians over seeds
//   .done/<stage>                        completion markers

#pragma once

#include <filesystem>
#include <set>

#include "softalign/config.hpp"
#include "softalign/corpus.hpp"
#include "softalign/grounding.hpp"
#include "softalign/trainer.hpp"

namespace softalign::harness {

namespace fs = std::filesystem;

struct ObjectiveRun {
  std::string name;  // run directory name
  train::TrainConfig config;
};

struct ExperimentPlan {
  std::string name = "plan";
  fs::path output_dir = "out";
  fs::path world_path;
  KeyValueConfig world;
  std::vector<std::string> domains;
  std::string id_domain;
  std::vector<ObjectiveRun> objectives;
  std::vector<std::uint64_t> seeds{1};

  std::size_t pairs_per_domain = 800;
  std::size_t n_val = 40;
  std::size_t n_test = 60;
  std::uint64_t corpus_seed = 1;
  std::uint64_t split_seed = 2;
  std::size_t model_vocab_size = 120;
  std::size_t embedder_vocab_size = 160;
  std::uint64_t tokenizer_seed = 3;

  grounding::EncoderConfig encoder;
  bool tie_synonyms = true;
  model::ModelConfig model;
  train::PretrainConfig pretrain;
  std::size_t window = 5;

  fs::path dir() const { return output_dir / name; }
  fs::path data_dir() const { return dir() / "data"; }
  fs::path original_path(std::uint64_t seed) const { return dir() / ("original-seed" + std::to_string(seed) + ".bin"); }
  fs::path run_dir(const std::string& objective, std::uint64_t seed) const {
    return dir() / objective / ("seed" + std::to_string(seed));
  }

  void validate() const {
    if (domains.empty()) throw ConfigError("plan: no domains");
    if (std::find(domains.begin(), domains.end(), id_domain) == domains.end())
      throw ConfigError("plan: id_domain '" + id_domain + "' is not among the domains");
    if (domains.size() < 2) throw ConfigError("plan: at least one OOD domain is required");
    if (seeds.empty()) throw ConfigError("plan: no seeds");
    std::set<std::string> names;
    for (const auto& o : objectives) {
      o.config.validate();
      if (!names.insert(o.name).second) throw ConfigError("plan: duplicate objective run '" + o.name + "'");
    }
  }
};

namespace detail {

template <class T>
std::vector<T> list(const KeyValueConfig& cfg, std::string_view key, std::string_view section = "") {
  std::vector<T> out;
  if (const auto v = cfg.get(key, section))
    for (const auto& w : split_whitespace(*v)) out.push_back(cfg.convert<T>(w, key));
  return out;
}

inline std::string short_double(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace detail

/// Reads training knobs from `section`, falling back to [train] and then to
/// the given defaults.
inline train::TrainConfig read_train_config(const KeyValueConfig& cfg, const std::string& section,
                                            train::TrainConfig base) {
  auto get = [&]<class T>(std::string_view key, T fallback) {
    return cfg.get_or<T>(key, cfg.get_or<T>(key, fallback, "train"), section);
  };
  train::TrainConfig t = base;
  t.learning_rate = get("learning_rate", base.learning_rate);
  t.warmup_steps = get("warmup_steps", base.warmup_steps);
  t.schedule = get("schedule", base.schedule);
  t.batch_size = get("batch_size", base.batch_size);
  t.max_steps = get("max_steps", base.max_steps);
  t.eval_every = get("eval_every", base.eval_every);
  t.patience_evals = get("patience_evals", base.patience_evals);
  t.sweep_mode = get("sweep_mode", base.sweep_mode);
  auto& o = t.objective;
  o.alpha = get("alpha", o.alpha);
  o.auto_alpha = get("auto_alpha", o.auto_alpha);
  o.K = get("K", o.K);
  o.n = get("n", o.n);
  o.temperature_targets = get("temperature_targets", o.temperature_targets);
  o.smoothing_eps = get("smoothing_eps", o.smoothing_eps);
  o.sample_temperature = get("sample_temperature", o.sample_temperature);
  o.max_len_factor = get("max_len_factor", o.max_len_factor);
  return t;
}

/// Parses a plan file. Relative paths resolve against the plan's directory.
inline ExperimentPlan parse_plan(const KeyValueConfig& cfg, const fs::path& base_dir = ".") {
  ExperimentPlan p;
  p.name = cfg.get_or<std::string>("name", p.name);
  p.output_dir = cfg.get_or<std::string>("output_dir", p.output_dir.string());
  if (p.output_dir.is_relative()) p.output_dir = base_dir / p.output_dir;
  p.world_path = cfg.require<std::string>("world");
  if (p.world_path.is_relative()) p.world_path = base_dir / p.world_path;
  p.world = KeyValueConfig::load(p.world_path.string());
  const auto world = corpus::parse_world(p.world);
  p.domains = detail::list<std::string>(cfg, "domains");
  if (p.domains.empty())
    for (const auto& d : world.domains) p.domains.push_back(d.name);
  for (const auto& d : p.domains) world.domain(d);
  p.id_domain = cfg.require<std::string>("id_domain");
  if (auto s = detail::list<std::uint64_t>(cfg, "seeds"); !s.empty()) p.seeds = s;

  p.pairs_per_domain = cfg.get_or("pairs_per_domain", p.pairs_per_domain);
  p.n_val = cfg.get_or("n_val", p.n_val);
  p.n_test = cfg.get_or("n_test", p.n_test);
  p.corpus_seed = cfg.get_or("corpus_seed", p.corpus_seed);
  p.split_seed = cfg.get_or("split_seed", p.split_seed);
  p.model_vocab_size = cfg.get_or("model_vocab_size", p.model_vocab_size);
  p.embedder_vocab_size = cfg.get_or("embedder_vocab_size", p.embedder_vocab_size);
  p.tokenizer_seed = cfg.get_or("tokenizer_seed", p.tokenizer_seed);
  p.window = cfg.get_or("window", p.window);

  auto& e = p.encoder;
  e.dim = cfg.get_or("dim", e.dim, "encoder");
  e.layers = cfg.get_or("layers", e.layers, "encoder");
  e.layer_index = cfg.get_or("layer_index", e.layers, "encoder");
  e.context_scale = cfg.get_or("context_scale", e.context_scale, "encoder");
  e.ffn_scale = cfg.get_or("ffn_scale", e.ffn_scale, "encoder");
  e.position_scale = cfg.get_or("position_scale", e.position_scale, "encoder");
  e.tie_noise = cfg.get_or("tie_noise", e.tie_noise, "encoder");
  e.seed = cfg.get_or("seed", e.seed, "encoder");
  p.tie_synonyms = cfg.get_or("tie_synonyms", p.tie_synonyms, "encoder");

  auto& m = p.model;
  m.d_model = cfg.get_or("d_model", m.d_model, "model");
  m.heads = cfg.get_or("heads", m.heads, "model");
  m.enc_layers = cfg.get_or("enc_layers", m.enc_layers, "model");
  m.dec_layers = cfg.get_or("dec_layers", m.dec_layers, "model");
  m.d_ff = cfg.get_or("d_ff", m.d_ff, "model");
  m.max_len = cfg.get_or("max_len", m.max_len, "model");
  m.validate();

  auto& pt = p.pretrain;
  pt.learning_rate = cfg.get_or("learning_rate", pt.learning_rate, "pretrain");
  pt.steps = cfg.get_or("steps", pt.steps, "pretrain");
  pt.batch_size = cfg.get_or("batch_size", pt.batch_size, "pretrain");
  pt.warmup_steps = cfg.get_or("warmup_steps", pt.warmup_steps, "pretrain");

  // Objectives, optionally expanded over a learning-rate × batch-size grid.
  const auto names = detail::list<std::string>(cfg, "objectives");
  if (names.empty()) throw ConfigError(cfg.origin() + ": plan lists no objectives");
  for (const auto& name : names) {
    train::TrainConfig base;
    base.objective.kind = obj::parse_kind(name);
    const std::string section = "objective " + name;
    const auto t = read_train_config(cfg, section, base);
    auto lrs = detail::list<double>(cfg, "learning_rates", "sweep");
    auto bss = detail::list<std::size_t>(cfg, "batch_sizes", "sweep");
    if (lrs.empty() && bss.empty()) {
      p.objectives.push_back({name, t});
      continue;
    }
    if (lrs.empty()) lrs = {t.learning_rate};
    if (bss.empty()) bss = {t.batch_size};
    for (double lr : lrs)
      for (std::size_t bs : bss) {
        ObjectiveRun r{name + "-lr" + detail::short_double(lr) + "-b" + std::to_string(bs), t};
        r.config.learning_rate = lr;
        r.config.batch_size = bs;
        p.objectives.push_back(r);
      }
  }
  p.validate();
  return p;
}

inline ExperimentPlan load_plan(const fs::path& path, const std::vector<std::pair<std::string, std::string>>& overrides = {}) {
  auto cfg = KeyValueConfig::load(path.string());
  for (const auto& [k, v] : overrides) {
    // "section/key" addresses a sectioned key.
    const auto slash = k.find('/');
    if (slash == std::string::npos) cfg.set(k, v);
    else cfg.set(k.substr(slash + 1), v, k.substr(0, slash));
  }
  return parse_plan(cfg, path.parent_path().empty() ? fs::path(".") : path.parent_path());
}

// ----------------------------------------------------------------------------
// Stage bookkeeping.
// ----------------------------------------------------------------------------

using Logger = std::function<void(const std::string&)>;

inline Logger stderr_logger() {
  return [](const std::string& s) { std::cerr << s << '\n'; };
}

class Stages {
 public:
  Stages(const ExperimentPlan& plan, Logger log) : dir_(plan.dir() / ".done"), log_(std::move(log)) {}

  bool done(const std::string& stage) const { return fs::exists(dir_ / stage); }

  void mark(const std::string& stage) {
    fs::create_directories(dir_);
    open_out((dir_ / stage).string()) << "done\n";
  }

  /// Runs `body` unless `stage` is complete; returns whether it ran.
  template <class F>
  bool run(const std::string& stage, F&& body) {
    if (done(stage)) {
      log("skip " + stage + " (complete)");
      return false;
    }
    log("stage " + stage);
    body();
    mark(stage);
    return true;
  }

  void log(const std::string& s) const {
    if (log_) log_(s);
  }

  void artifact(const fs::path& p) const { log("  wrote " + p.string()); }

 private:
  fs::path dir_;
  Logger log_;
};

// ----------------------------------------------------------------------------
// Loaded resources.
// ----------------------------------------------------------------------------

struct Data {
  std::map<std::string, corpus::CorpusSplits> splits;
  tok::Vocabulary model_vocab;
  tok::Vocabulary embedder_vocab;
};

inline Data load_data(const ExperimentPlan& plan) {
  Data d;
  for (const auto& dom : plan.domains) {
    auto& s = d.splits[dom];
    s.train = corpus::read_tsv((plan.data_dir() / corpus::split_file_name(dom, "train")).string(), dom);
    s.validation = corpus::read_tsv((plan.data_dir() / corpus::split_file_name(dom, "validation")).string(), dom);
    s.test = corpus::read_tsv((plan.data_dir() / corpus::split_file_name(dom, "test")).string(), dom);
  }
  d.model_vocab = tok::Vocabulary::load((plan.data_dir() / "model.vocab").string());
  d.embedder_vocab = tok::Vocabulary::load((plan.data_dir() / "embedder.vocab").string());
  return d;
}

inline std::vector<std::vector<std::string>> synonym_groups(const ExperimentPlan& plan) {
  if (!plan.tie_synonyms) return {};
  return corpus::parse_world(plan.world).domains.front().synonym_groups;
}

inline grounding::ContextualEncoder make_encoder(const ExperimentPlan& plan, const Data& d) {
  return grounding::ContextualEncoder(d.embedder_vocab, plan.encoder, synonym_groups(plan));
}

inline model::ModelConfig model_config(const ExperimentPlan& plan, std::uint64_t seed) {
  auto m = plan.model;
  m.seed = mix_seed(seed, 0x4D0D);
  return m;
}

// ----------------------------------------------------------------------------
// Stages.
// ----------------------------------------------------------------------------

inline void prepare(const ExperimentPlan& plan, Stages& st) {
  st.run("prepare", [&] {
    fs::create_directories(plan.data_dir());
    const auto world = corpus::parse_world(plan.world);
    std::vector<std::string> model_texts, target_texts;
    for (std::size_t i = 0; i < plan.domains.size(); ++i) {
      const auto& dom = plan.domains[i];
      const auto pairs = corpus::generate_domain(world.domain(dom), plan.pairs_per_domain, mix_seed(plan.corpus_seed, i));
      const auto s = corpus::split(pairs, plan.n_val, plan.n_test, mix_seed(plan.split_seed, i));
      for (const auto& [name, part] : {std::pair{"train", &s.train}, {"validation", &s.validation}, {"test", &s.test}}) {
        const auto path = plan.data_dir() / corpus::split_file_name(dom, name);
        corpus::write_tsv(path.string(), *part);
        st.artifact(path);
      }
      for (const auto& p : s.train) {
        model_texts.push_back(p.source);
        model_texts.push_back(p.target);
        target_texts.push_back(p.target);
      }
    }
    const auto mv = tok::train_tokenizer(model_texts, plan.model_vocab_size, plan.tokenizer_seed);
    mv.save((plan.data_dir() / "model.vocab").string());
    st.artifact(plan.data_dir() / "model.vocab");
    const auto ev = tok::train_tokenizer(target_texts, plan.embedder_vocab_size, mix_seed(plan.tokenizer_seed, 1));
    ev.save((plan.data_dir() / "embedder.vocab").string());
    st.artifact(plan.data_dir() / "embedder.vocab");
  });
}

inline void decontextualize(const ExperimentPlan& plan, Stages& st) {
  st.run("decontextualize", [&] {
    const Data d = load_data(plan);
    const auto enc = make_encoder(plan, d);
    const auto table = grounding::decontextualize(enc, corpus::targets_of(d.splits.at(plan.id_domain).train), plan.id_domain);
    const auto path = plan.data_dir() / "grounding.sagt";
    table.save(path.string());
    st.artifact(path);
    st.log("  grounding entries: " + std::to_string(table.size()));
  });
}

inline std::vector<obj::Sample> samples_of(const tok::Vocabulary& v, const corpus::PairList& pairs) {
  std::vector<obj::Sample> out;
  for (const auto& p : pairs) out.push_back(obj::make_sample(v, p));
  return out;
}

inline void pretrain(const ExperimentPlan& plan, Stages& st, std::uint64_t seed) {
  st.run("pretrain-seed" + std::to_string(seed), [&] {
    const Data d = load_data(plan);
    corpus::PairList mixture;
    for (const auto& dom : plan.domains) {
      const auto& t = d.splits.at(dom).train;
      mixture.insert(mixture.end(), t.begin(), t.end());
    }
    model::Seq2SeqModel m(d.model_vocab, model_config(plan, seed));
    auto cfg = plan.pretrain;
    cfg.seed = mix_seed(seed, 0x9E7);
    double running = 0.0;
    train::pretrain(m, samples_of(d.model_vocab, mixture), cfg, [&](std::size_t step, double loss) {
      running = step == 1 ? loss : 0.98 * running + 0.02 * loss;
      if (step % 500 == 0 || step == cfg.steps)
        st.log("  pretrain step " + std::to_string(step) + " loss " + detail::short_double(running));
    });
    m.save_checkpoint(plan.original_path(seed).string(), 0, seed);
    st.artifact(plan.original_path(seed));
  });
}

/// Frozen grounding resources of a plan, kept alive together.
struct GroundingBundle {
  Data data;
  grounding::ContextualEncoder encoder;
  grounding::GroundingTable table;
  align::VocabGrounding vocab;
  align::ContextualScorer scorer;

  explicit GroundingBundle(const ExperimentPlan& plan)
      : data(load_data(plan)),
        encoder(make_encoder(plan, data)),
        table(grounding::GroundingTable::load((plan.data_dir() / "grounding.sagt").string())),
        vocab(align::ground_vocabulary(data.model_vocab, data.embedder_vocab, table,
                                       corpus::targets_of(data.splits.at(plan.id_domain).train))),
        scorer(data.model_vocab, encoder) {}

  GroundingBundle(const GroundingBundle&) = delete;
  GroundingBundle& operator=(const GroundingBundle&) = delete;

  obj::Grounding view() const { return obj::Grounding{&data.embedder_vocab, &table, &vocab, &scorer}; }
};

inline void train_objective(const ExperimentPlan& plan, Stages& st, const ObjectiveRun& run, std::uint64_t seed,
                            const GroundingBundle& g) {
  st.run("train-" + run.name + "-seed" + std::to_string(seed), [&] {
    auto m = model::Seq2SeqModel::load_checkpoint(plan.original_path(seed).string(), g.data.model_vocab);
    std::map<std::string, corpus::PairList> validation;
    for (const auto& dom : plan.domains) validation[dom] = g.data.splits.at(dom).validation;
    train::TrainInputs in;
    in.train = samples_of(g.data.model_vocab, g.data.splits.at(plan.id_domain).train);
    in.id_domain = plan.id_domain;
    in.grounding = g.view();
    in.evaluator = train::bleu_evaluator(std::move(validation));
    in.output_dir = plan.run_dir(run.name, seed).string();
    auto cfg = run.config;
    cfg.seed = mix_seed(seed, 0x7A1);
    const auto log = train::train(m, in, cfg);
    st.log("  " + run.name + " seed " + std::to_string(seed) + ": " + std::to_string(log.rows.size()) +
           " evaluations, selected step " + std::to_string(log.selected_step) + ", alpha " +
           detail::short_double(log.alpha));
    st.artifact(fs::path(in.output_dir) / "log.csv");
  });
}

inline void write_scores_csv(const fs::path& path, const std::vector<std::uint64_t>& steps,
                             const std::map<std::string, std::vector<double>>& scores) {
  eval::write_training_curves_csv(path.string(), steps, scores);
}

inline void evaluate_objective(const ExperimentPlan& plan, Stages& st, const ObjectiveRun& run, std::uint64_t seed,
                               const Data& d) {
  st.run("evaluate-" + run.name + "-seed" + std::to_string(seed), [&] {
    const fs::path dir = plan.run_dir(run.name, seed);
    const auto log = train::read_log(dir.string());
    const auto original = model::Seq2SeqModel::load_checkpoint(plan.original_path(seed).string(), d.model_vocab);
    std::map<std::string, double> orig;
    for (const auto& dom : plan.domains) orig[dom] = train::decode_bleu(original, d.splits.at(dom).test);
    write_scores_csv(dir / "original_scores.csv", {0}, [&] {
      std::map<std::string, std::vector<double>> m;
      for (const auto& [k, v] : orig) m[k] = {v};
      return m;
    }());

    const std::size_t center = log.index_of(log.selected_step);
    const std::size_t lo = center >= plan.window ? center - plan.window : 0;
    const std::size_t hi = std::min(log.rows.size() - 1, center + plan.window);
    std::vector<std::uint64_t> steps;
    std::map<std::string, std::vector<double>> window;
    for (std::size_t i = lo; i <= hi; ++i) {
      const auto step = log.rows[i].step;
      steps.push_back(step);
      const auto m = model::Seq2SeqModel::load_checkpoint((dir / train::checkpoint_name(step)).string(), d.model_vocab);
      for (const auto& dom : plan.domains) window[dom].push_back(train::decode_bleu(m, d.splits.at(dom).test));
    }
    write_scores_csv(dir / "window_scores.csv", steps, window);
    const auto rep = eval::robustness_report(orig, window, center - lo, plan.id_domain, plan.window);
    eval::write_robustness_csv((dir / "robustness.csv").string(), rep);
    eval::write_training_curves_csv((dir / "training_curves.csv").string(), log.steps(), log.validation_curves());
    st.artifact(dir / "robustness.csv");
    st.artifact(dir / "training_curves.csv");
  });
}

struct ReportRow {
  std::string objective;
  std::uint64_t seed = 0;
  double id_delta = 0.0;
  double ood_mean = 0.0;
  double ood_range = 0.0;
};

inline double median(std::vector<double> v) {
  if (v.empty()) throw InputError("median of nothing");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Collects per-run robustness reports into report.csv and summary.csv.
inline std::vector<ReportRow> report(const ExperimentPlan& plan, Stages& st) {
  std::vector<ReportRow> rows;
  for (const auto& run : plan.objectives)
    for (auto seed : plan.seeds) {
      const auto rep = eval::read_robustness_csv((plan.run_dir(run.name, seed) / "robustness.csv").string());
      rows.push_back({run.name, seed, rep.id_delta, rep.ood_mean, rep.ood_range});
    }
  {
    const auto path = plan.dir() / "report.csv";
    auto os = open_out(path.string());
    os << "objective,seed,id_delta_pct,ood_mean_pct,ood_range_pct\n";
    for (const auto& r : rows)
      os << r.objective << ',' << r.seed << ',' << format_double(r.id_delta) << ',' << format_double(r.ood_mean)
         << ',' << format_double(r.ood_range) << '\n';
    st.artifact(path);
  }
  const auto path = plan.dir() / "summary.csv";
  auto os = open_out(path.string());
  os << "objective,median_id_delta_pct,median_ood_delta_pct\n";
  for (const auto& run : plan.objectives) {
    std::vector<double> id, ood;
    for (const auto& r : rows)
      if (r.objective == run.name) {
        id.push_back(r.id_delta);
        ood.push_back(r.ood_mean);
      }
    os << run.name << ',' << format_double(median(id)) << ',' << format_double(median(ood)) << '\n';
  }
  st.artifact(path);
  return rows;
}

inline std::vector<ReportRow> read_report(const ExperimentPlan& plan) {
  auto is = open_in((plan.dir() / "report.csv").string());
  std::string line;
  std::getline(is, line);
  std::vector<ReportRow> rows;
  while (std::getline(is, line)) {
    if (trim(line).empty()) continue;
    std::stringstream ss(line);
    std::string f[5];
    for (auto& x : f)
      if (!std::getline(ss, x, ',')) throw IoError("malformed report row: " + line);
    rows.push_back({f[0], std::stoull(f[1]), std::stod(f[2]), std::stod(f[3]), std::stod(f[4])});
  }
  return rows;
}

/// Full pipeline; every completed stage is skipped on rerun.
inline std::vector<ReportRow> run(const ExperimentPlan& plan, Logger logger = stderr_logger()) {
  Stages st(plan, std::move(logger));
  prepare(plan, st);
  decontextualize(plan, st);
  for (auto seed : plan.seeds) pretrain(plan, st, seed);
  std::optional<GroundingBundle> g;
  for (const auto& r : plan.objectives)
    for (auto seed : plan.seeds) {
      const std::string stage = "train-" + r.name + "-seed" + std::to_string(seed);
      if (st.done(stage)) {
        st.log("skip " + stage + " (complete)");
        continue;
      }
      if (!g) g.emplace(plan);
      train_objective(plan, st, r, seed, *g);
    }
  std::optional<Data> d;
  for (const auto& r : plan.objectives)
    for (auto seed : plan.seeds) {
      const std::string stage = "evaluate-" + r.name + "-seed" + std::to_string(seed);
      if (st.done(stage)) {
        st.log("skip " + stage + " (complete)");
        continue;
      }
      if (!d) d = load_data(plan);
      evaluate_objective(plan, st, r, seed, *d);
    }
  std::vector<ReportRow> rows;
  if (!st.run("report", [&] { rows = report(plan, st); })) rows = read_report(plan);
  return rows;
}

}  // namespace softalign::harness
