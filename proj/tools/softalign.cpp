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

// softalign: command-line driver for the adaptation pipeline.
//
//   softalign prepare         --plan PLAN
//   softalign decontextualize --plan PLAN
//   softalign pretrain        --plan PLAN [--seed S]
//   softalign train           --plan PLAN --objective NAME [--seed S]
//   softalign evaluate        --plan PLAN --objective NAME [--seed S]
//   softalign ablate          --plan PLAN
//   softalign report          --plan PLAN
//   softalign run             --plan PLAN
//
// Any plan key may be overridden with --set key=value (section/key=value for
// sectioned keys) or with the mirrored flags listed under --help.

#include <CLI11.hpp>

#include "softalign/harness.hpp"

namespace {

using namespace softalign;
using harness::ExperimentPlan;

struct Options {
  std::string plan_path;
  std::vector<std::string> sets;
  std::string output_dir;
  std::string id_domain;
  std::string objectives;
  std::string seeds;
  std::string learning_rate;
  std::string batch_size;
  std::string max_steps;
  std::string eval_every;
  std::string patience_evals;
  std::string warmup_steps;
  std::string alpha;
};

ExperimentPlan load(const Options& o) {
  std::vector<std::pair<std::string, std::string>> ov;
  auto flag = [&](const char* key, const std::string& v) {
    if (!v.empty()) ov.emplace_back(key, v);
  };
  flag("output_dir", o.output_dir);
  flag("id_domain", o.id_domain);
  flag("objectives", o.objectives);
  flag("seeds", o.seeds);
  flag("train/learning_rate", o.learning_rate);
  flag("train/batch_size", o.batch_size);
  flag("train/max_steps", o.max_steps);
  flag("train/eval_every", o.eval_every);
  flag("train/patience_evals", o.patience_evals);
  flag("train/warmup_steps", o.warmup_steps);
  flag("train/alpha", o.alpha);
  for (const auto& s : o.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + s + "'");
    ov.emplace_back(trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
  }
  return harness::load_plan(o.plan_path, ov);
}

const harness::ObjectiveRun& find_run(const ExperimentPlan& plan, const std::string& name) {
  for (const auto& r : plan.objectives)
    if (r.name == name) return r;
  throw ConfigError("objective run '" + name + "' is not in the plan");
}

std::vector<std::uint64_t> pick_seeds(const ExperimentPlan& plan, std::int64_t seed) {
  if (seed < 0) return plan.seeds;
  return {static_cast<std::uint64_t>(seed)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Soft-alignment adaptation toolkit"};
  app.require_subcommand(1);
  Options o;
  std::string objective;
  std::int64_t seed = -1;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--plan", o.plan_path, "experiment plan file")->required()->check(CLI::ExistingFile);
    sub->add_option("--set", o.sets, "override a plan key (key=value or section/key=value)");
    sub->add_option("--output-dir", o.output_dir, "output_dir");
    sub->add_option("--id-domain", o.id_domain, "id_domain");
    sub->add_option("--objectives", o.objectives, "objectives (space separated)");
    sub->add_option("--seeds", o.seeds, "seeds (space separated)");
    sub->add_option("--learning-rate", o.learning_rate, "train/learning_rate");
    sub->add_option("--batch-size", o.batch_size, "train/batch_size");
    sub->add_option("--max-steps", o.max_steps, "train/max_steps");
    sub->add_option("--eval-every", o.eval_every, "train/eval_every");
    sub->add_option("--patience-evals", o.patience_evals, "train/patience_evals");
    sub->add_option("--warmup-steps", o.warmup_steps, "train/warmup_steps");
    sub->add_option("--alpha", o.alpha, "train/alpha");
  };

  auto* prepare = app.add_subcommand("prepare", "generate corpora, splits and tokenizers");
  auto* decon = app.add_subcommand("decontextualize", "build the decontextualised grounding table");
  auto* pretrain = app.add_subcommand("pretrain", "train the original model on the domain mixture");
  auto* train = app.add_subcommand("train", "adapt with one objective");
  auto* evaluate = app.add_subcommand("evaluate", "test-set robustness report of one run");
  auto* ablate = app.add_subcommand("ablate", "train and evaluate every objective of the plan");
  auto* report = app.add_subcommand("report", "aggregate per-run reports");
  auto* run = app.add_subcommand("run", "full pipeline");
  for (auto* s : {prepare, decon, pretrain, train, evaluate, ablate, report, run}) add_common(s);
  for (auto* s : {pretrain, train, evaluate}) s->add_option("--seed", seed, "seed (default: all plan seeds)");
  for (auto* s : {train, evaluate}) s->add_option("--objective", objective, "objective run name")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    const ExperimentPlan plan = load(o);
    harness::Stages st(plan, harness::stderr_logger());
    if (prepare->parsed()) {
      harness::prepare(plan, st);
    } else if (decon->parsed()) {
      harness::decontextualize(plan, st);
    } else if (pretrain->parsed()) {
      for (auto s : pick_seeds(plan, seed)) harness::pretrain(plan, st, s);
    } else if (train->parsed()) {
      const auto& r = find_run(plan, objective);
      const harness::GroundingBundle g(plan);
      for (auto s : pick_seeds(plan, seed)) harness::train_objective(plan, st, r, s, g);
    } else if (evaluate->parsed()) {
      const auto& r = find_run(plan, objective);
      const auto d = harness::load_data(plan);
      for (auto s : pick_seeds(plan, seed)) harness::evaluate_objective(plan, st, r, s, d);
    } else if (ablate->parsed() || run->parsed()) {
      const auto rows = harness::run(plan);
      for (const auto& r : rows)
        std::cout << r.objective << " seed " << r.seed << ": ID " << format_double(r.id_delta) << "% OOD "
                  << format_double(r.ood_mean) << "% ±" << format_double(r.ood_range) << '\n';
    } else if (report->parsed()) {
      harness::report(plan, st);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  }
  return 0;
}
