// Copyright 2026 The musclegail Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// musclegail: expert generation, training, evaluation, synergy fitting and
// aggregation for the muscle-actuated limb.
//
// Exit codes: 0 success, 2 configuration error, 3 runtime fault.

#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "musclegail/errors.hpp"
#include "musclegail/harness.hpp"

namespace mg = musclegail;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct Options {
  std::string config;
  std::string out;
  std::string preset;
  std::string checkpoint;
  std::string expert;
  std::string play_data;
  std::vector<std::uint64_t> seeds;
  std::optional<std::uint64_t> seed;
  int episodes = 0;
  int n_syn = 0;
  bool verbose = false;
};

mg::RunConfig resolve_config(const Options& o) {
  mg::RunConfig c = o.config.empty() ? mg::RunConfig{} : mg::load_run_config(o.config);
  if (!o.seeds.empty()) c.seeds = o.seeds;
  if (o.seed) c.seeds = {*o.seed};
  if (!o.play_data.empty()) c.synergy.play_data = o.play_data;
  if (o.n_syn > 0) c.synergy.n_syn = o.n_syn;
  if (o.episodes > 0) c.eval_episodes = o.episodes;
  c.validate();
  return c;
}

int run_gen_expert(const Options& o) {
  const mg::RunConfig c = resolve_config(o);
  const std::string path = o.out.empty() ? c.expert.file : (std::filesystem::path(o.out) / "expert.csv").string();
  const mg::GenExpertReport r = mg::cmd_gen_expert(c, path);
  std::cout << "wrote " << r.path << ": " << r.rows << " rows, " << r.periods << " periods\n";
  return kExitOk;
}

int run_train(const Options& o) {
  const mg::RunConfig c = resolve_config(o);
  const std::string out = o.out.empty() ? c.output : o.out;
  const mg::TrainReport r = mg::cmd_train(c, o.preset, out);
  std::cout << "runs in " << out << ", aggregate " << r.aggregate_path << "\n";
  if (r.failed_seeds() > 0)
    std::cout << r.failed_seeds() << " of " << r.total_seeds() << " seeds failed; see manifest.json\n";
  return r.failed_seeds() == r.total_seeds() ? kExitRuntime : kExitOk;
}

int run_eval(const Options& o) {
  if (o.checkpoint.empty()) throw mg::ConfigError("eval needs --checkpoint");
  std::string expert = o.expert;
  int episodes = o.episodes > 0 ? o.episodes : 10;
  if (!o.config.empty()) {
    const mg::RunConfig c = mg::load_run_config(o.config);
    if (o.episodes <= 0) episodes = c.eval_episodes;
    if (expert.empty() && c.train.reset_from_expert) expert = c.expert.file;
  }
  const mg::EvalReport r = mg::cmd_eval(o.checkpoint, episodes, o.seed.value_or(0), o.out, expert);
  std::cout << r.to_json().dump(2) << "\n";
  return kExitOk;
}

int run_synergy(const Options& o) {
  const mg::RunConfig c = resolve_config(o);
  const mg::SynergyReport r = mg::cmd_synergy(c, o.out);
  std::cout << "synergy map " << r.map_path << " (N_syn = " << r.map.n_syn()
            << (r.map.ica_converged() ? "" : ", ICA not converged") << ")\n"
            << r.table;
  return kExitOk;
}

int run_aggregate(const Options& o) {
  if (o.out.empty()) throw mg::ConfigError("aggregate needs --out <run directory>");
  std::cout << "wrote " << mg::aggregate_runs(o.out) << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial imitation on a muscle-actuated limb"};
  app.require_subcommand(1);
  Options o;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "run configuration (JSON)");
    sub->add_option("--out", o.out, "output directory");
    sub->add_flag("-v,--verbose", o.verbose, "debug logging");
  };
  auto seeds = [&](CLI::App* sub) {
    sub->add_option("--seeds", o.seeds, "seed list")->delimiter(',');
    sub->add_option("--seed", o.seed, "single seed");
  };

  CLI::App* gen = app.add_subcommand("gen-expert", "write the scripted-expert state dataset");
  common(gen);
  CLI::App* train = app.add_subcommand("train", "train one setup or an ablation preset");
  common(train);
  seeds(train);
  train->add_option("--preset", o.preset, "ablation preset")
      ->check(CLI::IsMember({"dist", "objective", "synergy", "fig4"}));
  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  common(eval);
  eval->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required();
  eval->add_option("--episodes", o.episodes, "episodes per evaluation mode");
  eval->add_option("--seed", o.seed, "evaluation seed");
  eval->add_option("--expert", o.expert, "expert file for reset states");
  CLI::App* syn = app.add_subcommand("synergy", "fit a synergy map from play-phase actions");
  common(syn);
  seeds(syn);
  syn->add_option("--play-data", o.play_data, "recorded action matrix instead of a play phase");
  syn->add_option("--n-syn", o.n_syn, "number of synergies");
  CLI::App* agg = app.add_subcommand("aggregate", "aggregate the seeds of a run directory");
  agg->add_option("--out", o.out, "run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }
  spdlog::set_level(o.verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    if (*gen) return run_gen_expert(o);
    if (*train) return run_train(o);
    if (*eval) return run_eval(o);
    if (*syn) return run_synergy(o);
    if (*agg) return run_aggregate(o);
  } catch (const mg::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const mg::SimulationFault& e) {
    std::cerr << "runtime fault: " << e.what() << "\n" << e.dump() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "runtime fault: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitConfig;
}
