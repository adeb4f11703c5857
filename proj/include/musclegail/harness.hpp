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

#ifndef MUSCLEGAIL_HARNESS_HPP_
#define MUSCLEGAIL_HARNESS_HPP_

// Batch front end: run configuration, ablation presets, and the commands
// behind the command-line tool.
//
// Run directory layout written by `cmd_train`:
//   <out>/manifest.json                 preset, setups, per-seed status
//   <out>/aggregate.csv                 per-iteration statistics across seeds
//   <out>/<setup>/seed_<s>/config.json  resolved config of that run
//   <out>/<setup>/seed_<s>/seed.json    seed manifest
//   <out>/<setup>/seed_<s>/metrics.csv
//   <out>/<setup>/seed_<s>/checkpoint.json

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "musclegail/checkpoint.hpp"
#include "musclegail/config_io.hpp"
#include "musclegail/errors.hpp"
#include "musclegail/expert.hpp"
#include "musclegail/gail.hpp"
#include "musclegail/play_phase.hpp"
#include "musclegail/synergy.hpp"

namespace musclegail {

namespace fs = std::filesystem;

enum class SynergyMode { kOff, kSar, kLatent };

inline std::string to_string(SynergyMode m) {
  switch (m) {
    case SynergyMode::kOff: return "off";
    case SynergyMode::kSar: return "sar";
    case SynergyMode::kLatent: return "latent";
  }
  return "unknown";
}

inline SynergyMode synergy_mode_from_string(const std::string& s) {
  if (s == "off") return SynergyMode::kOff;
  if (s == "sar") return SynergyMode::kSar;
  if (s == "latent") return SynergyMode::kLatent;
  throw ConfigError("unknown synergy mode '" + s + "' (expected off, sar or latent)");
}

struct SynergySettings {
  SynergyMode mode = SynergyMode::kOff;
  std::string file;        // fitted map, read for mode sar, written by cmd_synergy
  int n_syn = 4;
  SynergyNormalization normalization = SynergyNormalization::kSign;
  long play_steps = 50000;
  std::string play_data;   // optional recorded action matrix
  std::uint64_t ica_seed = 0;
};

struct ExpertSettings {
  std::string file = "expert.csv";
  int episodes = 4;
  int periods = 25;
  int transient_periods = 5;
};

struct RunConfig {
  LimbConfig env = LimbConfig::default_config();
  ExpertSettings expert;
  PolicyConfig policy;
  ObjectiveConfig objective;
  SynergySettings synergy;
  TrainConfig train;
  int eval_episodes = 10;
  std::string output = "runs";
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};

  void validate() const {
    env.validate();
    policy.validate();
    train.validate();
    ObjectiveConfig o = objective;
    o.bounds = ActionBox::unit(env.num_muscles());
    o.validate();
    if (seeds.empty()) throw ConfigError("seeds must not be empty");
    if (eval_episodes < 1) throw ConfigError("eval.episodes must be >= 1");
    if (expert.episodes < 1 || expert.periods < 1 || expert.transient_periods < 0)
      throw ConfigError("expert needs episodes >= 1, periods >= 1, transient_periods >= 0");
    const bool unbounded = policy.family == DistributionKind::kGaussian ||
                           policy.family == DistributionKind::kLatentGaussian;
    if (objective.uses_flipped_kl() && !unbounded)
      throw ConfigError("objective '" + to_string(objective.mode) +
                        "' requires policy.family gaussian or latent_gaussian, got " +
                        to_string(policy.family));
    if (synergy.mode == SynergyMode::kLatent && policy.family != DistributionKind::kLatentGaussian)
      throw ConfigError("synergy.mode latent requires policy.family latent_gaussian");
    if (synergy.mode == SynergyMode::kSar) {
      if (synergy.file.empty()) throw ConfigError("synergy.mode sar requires synergy.file");
      if (objective.uses_flipped_kl())
        throw ConfigError("flipped_kl cannot be combined with synergy.mode sar");
    }
    if (synergy.n_syn < 1 || synergy.n_syn > env.num_muscles())
      throw ConfigError("synergy.n_syn must lie in [1, " + std::to_string(env.num_muscles()) + "]");
    if (synergy.play_steps < 0) throw ConfigError("synergy.play_steps must be >= 0");
  }
};

inline json to_json(const RunConfig& c) {
  json j;
  j["env"] = to_json(c.env);
  j["expert"] = {{"file", c.expert.file},
                 {"episodes", c.expert.episodes},
                 {"periods", c.expert.periods},
                 {"transient_periods", c.expert.transient_periods}};
  j["policy"] = to_json(c.policy);
  j["objective"] = to_json(c.objective);
  j["synergy"] = {{"mode", to_string(c.synergy.mode)},
                  {"file", c.synergy.file},
                  {"n_syn", c.synergy.n_syn},
                  {"normalization", to_string(c.synergy.normalization)},
                  {"play_steps", c.synergy.play_steps},
                  {"play_data", c.synergy.play_data},
                  {"ica_seed", c.synergy.ica_seed}};
  j["train"] = to_json(c.train);
  j["eval"] = {{"episodes", c.eval_episodes}};
  j["output"] = c.output;
  j["seeds"] = c.seeds;
  return j;
}

inline RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  const Section top(j, "config",
                    {"env", "expert", "policy", "objective", "synergy", "train", "eval", "output",
                     "seeds"});
  if (top.has("env")) c.env = limb_config_from_json(top.raw("env"));
  if (top.has("expert")) {
    const Section s(top.raw("expert"), "expert", {"file", "episodes", "periods", "transient_periods"});
    s.get("file", c.expert.file);
    s.get("episodes", c.expert.episodes);
    s.get("periods", c.expert.periods);
    s.get("transient_periods", c.expert.transient_periods);
  }
  if (top.has("policy")) c.policy = policy_config_from_json(top.raw("policy"));
  if (top.has("objective")) c.objective = objective_config_from_json(top.raw("objective"));
  if (top.has("synergy")) {
    const Section s(top.raw("synergy"), "synergy",
                    {"mode", "file", "n_syn", "normalization", "play_steps", "play_data", "ica_seed"});
    std::string mode = to_string(c.synergy.mode), norm = to_string(c.synergy.normalization);
    s.get("mode", mode);
    s.get("normalization", norm);
    c.synergy.mode = synergy_mode_from_string(mode);
    c.synergy.normalization = synergy_normalization_from_string(norm);
    s.get("file", c.synergy.file);
    s.get("n_syn", c.synergy.n_syn);
    s.get("play_steps", c.synergy.play_steps);
    s.get("play_data", c.synergy.play_data);
    s.get("ica_seed", c.synergy.ica_seed);
  }
  if (top.has("train")) c.train = train_config_from_json(top.raw("train"));
  if (top.has("eval")) {
    const Section s(top.raw("eval"), "eval", {"episodes"});
    s.get("episodes", c.eval_episodes);
  }
  top.get("output", c.output);
  top.get("seeds", c.seeds);
  c.validate();
  return c;
}

inline json read_json_file(const std::string& path, const std::string& what) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read " + what + " '" + path + "'");
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError(what + " '" + path + "' is not valid JSON: " + e.what());
  }
}

inline void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot write '" + path.string() + "'");
  os << text;
}

inline RunConfig load_run_config(const std::string& path) {
  return run_config_from_json(read_json_file(path, "config file"));
}

// Hash of everything that defines a run except the seed list and the
// output directory, so that all seeds of one setup share it.
inline std::string config_hash(const RunConfig& c) {
  json j = to_json(c);
  j.erase("seeds");
  j.erase("output");
  return hash_hex(fnv1a64(j.dump()));
}

// ---------------------------------------------------------------------------
// Presets.

struct Setup {
  std::string name;
  RunConfig config;
};

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"dist", "objective", "synergy", "fig4"};
  return names;
}

// Metrics columns aggregated for a preset ("" is a plain single-setup run).
inline std::vector<std::string> preset_metrics(const std::string& preset) {
  if (preset == "fig4") return {"entropy", "abs_action_mean"};
  if (preset.empty()) return {"task_return", "episode_length", "gail_reward", "entropy", "abs_action_mean"};
  return {"task_return", "episode_length", "gail_reward"};
}

inline std::vector<Setup> expand_preset(const RunConfig& base, const std::string& preset) {
  auto with = [&](std::string name, DistributionKind family, ObjectiveMode mode,
                  SynergyMode syn = SynergyMode::kOff) {
    Setup s{std::move(name), base};
    s.config.policy.family = family;
    s.config.objective.mode = mode;
    s.config.synergy.mode = syn;
    return s;
  };
  std::vector<Setup> out;
  if (preset.empty()) {
    out.push_back({"run", base});
  } else if (preset == "dist") {
    out.push_back(with("gaussian", DistributionKind::kGaussian, ObjectiveMode::kEntropy));
    out.push_back(with("squashed_gaussian", DistributionKind::kSquashedGaussian, ObjectiveMode::kEntropy));
    out.push_back(with("beta_alpha_beta", DistributionKind::kBetaAlphaBeta, ObjectiveMode::kEntropy));
    Setup uni = with("beta_mean_std_unimodal", DistributionKind::kBetaMeanStd, ObjectiveMode::kEntropy);
    uni.config.policy.beta_unimodal = true;
    out.push_back(uni);
    Setup free = with("beta_mean_std", DistributionKind::kBetaMeanStd, ObjectiveMode::kEntropy);
    free.config.policy.beta_unimodal = false;
    out.push_back(free);
  } else if (preset == "objective" || preset == "fig4") {
    for (auto m : {ObjectiveMode::kEntropy, ObjectiveMode::kNone, ObjectiveMode::kTargetEntropy,
                   ObjectiveMode::kFlippedKl, ObjectiveMode::kFlippedKlTargetEntropy,
                   ObjectiveMode::kOobPenaltyEntropy})
      out.push_back(with(to_string(m), DistributionKind::kGaussian, m));
  } else if (preset == "synergy") {
    out.push_back(with("gaussian", DistributionKind::kGaussian, ObjectiveMode::kEntropy));
    out.push_back(with("sar", DistributionKind::kGaussian, ObjectiveMode::kEntropy, SynergyMode::kSar));
    out.push_back(with("latent", DistributionKind::kLatentGaussian, ObjectiveMode::kEntropy,
                       SynergyMode::kLatent));
    out.push_back(with("latent+oob", DistributionKind::kLatentGaussian,
                       ObjectiveMode::kOobPenaltyEntropy, SynergyMode::kLatent));
    out.push_back(with("latent+flipped_kl", DistributionKind::kLatentGaussian,
                       ObjectiveMode::kFlippedKl, SynergyMode::kLatent));
  } else {
    throw ConfigError("unknown preset '" + preset + "' (expected dist, objective, synergy or fig4)");
  }
  for (auto& s : out) s.config.validate();
  return out;
}

// ---------------------------------------------------------------------------
// Action matrices on disk: one row per timestep, one column per muscle.

inline void save_action_matrix(const Mat& m, const std::string& path) {
  std::string s;
  for (Eigen::Index i = 0; i < m.rows(); ++i) s += fmt::format("{}m{}", i ? "," : "", i);
  s += "\n";
  for (Eigen::Index t = 0; t < m.cols(); ++t) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) s += (i ? "," : "") + format_number(m(i, t));
    s += "\n";
  }
  write_text_file(path, s);
}

inline Mat load_action_matrix(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read action matrix '" + path + "'");
  std::string line;
  if (!std::getline(is, line)) throw ConfigError("action matrix '" + path + "' is empty");
  const auto cols = static_cast<Eigen::Index>(std::count(line.begin(), line.end(), ',') + 1);
  std::vector<double> vals;
  Eigen::Index rows = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    Eigen::Index n = 0;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        vals.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw ConfigError("action matrix '" + path + "': bad number '" + cell + "'");
      }
      ++n;
    }
    if (n != cols) throw ConfigError("action matrix '" + path + "': ragged row " + std::to_string(rows + 2));
    ++rows;
  }
  Mat m(cols, rows);
  for (Eigen::Index t = 0; t < rows; ++t)
    for (Eigen::Index i = 0; i < cols; ++i) m(i, t) = vals[static_cast<std::size_t>(t * cols + i)];
  return m;
}

// ---------------------------------------------------------------------------
// Commands.

inline ExpertTrajectory load_expert_for(const RunConfig& c) {
  if (!fs::exists(c.expert.file))
    throw ConfigError("expert file '" + c.expert.file + "' not found; run gen-expert first");
  return load_expert_trajectory(c.expert.file);
}

// Counts upward zero crossings of the centered hip angle.
inline int count_periods(const ExpertTrajectory& traj) {
  int n = 0;
  for (const auto& ep : traj.episodes) {
    if (ep.empty()) continue;
    double mean = 0.0;
    for (const auto& r : ep) mean += r(0);
    mean /= static_cast<double>(ep.size());
    for (std::size_t k = 1; k < ep.size(); ++k)
      n += (ep[k - 1](0) - mean < 0.0) && (ep[k](0) - mean >= 0.0);
  }
  return n;
}

struct GenExpertReport {
  std::string path;
  std::size_t rows = 0;
  int periods = 0;
};

inline GenExpertReport cmd_gen_expert(const RunConfig& c, const std::string& out_path = "") {
  const ExpertTrajectory traj =
      generate_expert_trajectory(c.env, ExpertConfig::default_config(), c.expert.episodes,
                                 c.expert.periods, c.expert.transient_periods);
  GenExpertReport r;
  r.path = out_path.empty() ? c.expert.file : out_path;
  if (fs::path(r.path).has_parent_path()) fs::create_directories(fs::path(r.path).parent_path());
  save_expert_trajectory(traj, r.path);
  r.rows = traj.num_rows();
  r.periods = count_periods(traj);
  return r;
}

struct SeedStatus {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double seconds = 0.0;
};

struct SetupStatus {
  std::string name;
  std::string hash;
  std::vector<SeedStatus> seeds;
};

struct TrainReport {
  std::string preset;
  std::vector<SetupStatus> setups;
  std::string aggregate_path;

  int failed_seeds() const {
    int n = 0;
    for (const auto& s : setups)
      for (const auto& r : s.seeds) n += !r.ok;
    return n;
  }
  int total_seeds() const {
    int n = 0;
    for (const auto& s : setups) n += static_cast<int>(s.seeds.size());
    return n;
  }
};

inline std::optional<SynergyMap> load_synergy_for(const RunConfig& c) {
  if (c.synergy.mode != SynergyMode::kSar) return std::nullopt;
  if (!fs::exists(c.synergy.file))
    throw ConfigError("synergy.mode sar needs a fitted map at '" + c.synergy.file +
                      "'; run the synergy command first");
  return SynergyMap::load(c.synergy.file);
}

// Trains one (setup, seed) into `dir`. Metrics rows are appended as they are
// produced.
inline TrainResult run_single(const RunConfig& c, std::uint64_t seed, const ExpertTrajectory& expert,
                              const SynergyMap* synergy, const fs::path& dir) {
  fs::create_directories(dir);
  RunConfig resolved = c;
  resolved.seeds = {seed};
  resolved.output = dir.string();
  write_text_file(dir / "config.json", to_json(resolved).dump(2) + "\n");
  TrainConfig tcfg = c.train;
  tcfg.seed = seed;
  std::ofstream metrics(dir / "metrics.csv", std::ios::binary);
  if (!metrics) throw ConfigError("cannot write metrics in '" + dir.string() + "'");
  metrics << metrics_csv_header() << "\n";
  TrainResult res = train_gail(c.env, expert, c.policy, c.objective, synergy, tcfg,
                               [&](const MetricsRow& r) {
                                 metrics << metrics_csv_row(r) << "\n";
                                 metrics.flush();
                                 spdlog::debug("seed {} iteration {}: task_return {:.2f}", seed,
                                               r.iteration, r.task_return);
                               });
  Checkpoint ck;
  ck.config_hash = config_hash(c);
  ck.seed = seed;
  ck.env_steps = tcfg.total_steps;
  ck.env = c.env;
  ck.policy = res.policy;
  ck.critic = res.critic;
  ck.discriminator = res.discriminator;
  if (synergy) ck.synergy = *synergy;
  save_checkpoint(ck, (dir / "checkpoint.json").string());
  return res;
}

inline json manifest_json(const TrainReport& r) {
  json j;
  j["preset"] = r.preset;
  j["setups"] = json::array();
  for (const auto& s : r.setups) {
    json seeds = json::array();
    for (const auto& e : s.seeds)
      seeds.push_back({{"seed", e.seed}, {"status", e.ok ? "ok" : "failed"}, {"error", e.error}});
    j["setups"].push_back({{"name", s.name}, {"config_hash", s.hash}, {"seeds", seeds}});
  }
  return j;
}

inline std::string aggregate_runs(const std::string& out_dir);

inline TrainReport cmd_train(const RunConfig& base, const std::string& preset,
                             const std::string& out_dir) {
  const std::vector<Setup> setups = expand_preset(base, preset);
  const ExpertTrajectory expert = load_expert_for(base);
  // Every setup is checked before any training starts.
  std::vector<std::optional<SynergyMap>> maps;
  for (const auto& s : setups) {
    maps.push_back(load_synergy_for(s.config));
    ObjectiveConfig obj = s.config.objective;
    obj.bounds = ActionBox::unit(s.config.env.num_muscles());
    check_training_setup(s.config.env, expert, s.config.policy, obj,
                         maps.back() ? &*maps.back() : nullptr, s.config.train);
  }
  const fs::path root(out_dir);
  fs::create_directories(root);
  TrainReport report;
  report.preset = preset;
  for (std::size_t k = 0; k < setups.size(); ++k) {
    const Setup& s = setups[k];
    SetupStatus st{s.name, config_hash(s.config), {}};
    for (std::uint64_t seed : s.config.seeds) {
      SeedStatus ss;
      ss.seed = seed;
      const fs::path dir = root / s.name / fmt::format("seed_{}", seed);
      const auto t0 = std::chrono::steady_clock::now();
      try {
        run_single(s.config, seed, expert, maps[k] ? &*maps[k] : nullptr, dir);
        ss.ok = true;
      } catch (const ConfigError&) {
        throw;
      } catch (const std::exception& e) {
        ss.error = e.what();
        spdlog::error("setup {} seed {} failed: {}", s.name, seed, e.what());
      }
      ss.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      json seed_manifest = {{"seed", seed},
                            {"setup", s.name},
                            {"config_hash", st.hash},
                            {"status", ss.ok ? "ok" : "failed"},
                            {"error", ss.error}};
      write_text_file(dir / "seed.json", seed_manifest.dump(2) + "\n");
      st.seeds.push_back(ss);
      spdlog::info("setup {} seed {}: {} ({:.1f} s)", s.name, seed, ss.ok ? "ok" : "failed",
                   ss.seconds);
    }
    report.setups.push_back(std::move(st));
    write_text_file(root / "manifest.json", manifest_json(report).dump(2) + "\n");
  }
  report.aggregate_path = aggregate_runs(out_dir);
  return report;
}

// ---------------------------------------------------------------------------
// Aggregation.

struct MetricsTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  int column(const std::string& name) const {
    const auto it = std::find(columns.begin(), columns.end(), name);
    if (it == columns.end()) throw ConfigError("metrics file lacks column '" + name + "'");
    return static_cast<int>(it - columns.begin());
  }
};

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

inline MetricsTable read_metrics_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read metrics '" + path + "'");
  MetricsTable t;
  std::string line;
  if (!std::getline(is, line)) throw ConfigError("metrics '" + path + "' is empty");
  t.columns = split_csv(line);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != t.columns.size()) throw ConfigError("metrics '" + path + "': ragged row");
    std::vector<double> r;
    for (const auto& c : cells) r.push_back(std::stod(c));
    t.rows.push_back(std::move(r));
  }
  return t;
}

// Linearly interpolated quantile of sorted data.
inline double quantile_sorted(const std::vector<double>& v, double q) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

struct SeriesStats {
  double median = 0.0, mean = 0.0, q25 = 0.0, q75 = 0.0;
};

inline SeriesStats series_stats(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  SeriesStats s;
  s.median = quantile_sorted(v, 0.5);
  s.q25 = quantile_sorted(v, 0.25);
  s.q75 = quantile_sorted(v, 0.75);
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  return s;
}

// Per-iteration median, mean and interquartile range across the successful
// seeds of every setup in `<out_dir>/manifest.json`. Writes
// `<out_dir>/aggregate.csv` and returns its path.
inline std::string aggregate_runs(const std::string& out_dir) {
  const fs::path root(out_dir);
  const json manifest = read_json_file((root / "manifest.json").string(), "manifest");
  const std::string preset = manifest.value("preset", "");
  const std::vector<std::string> metrics = preset_metrics(preset);
  std::vector<std::string> header{"iteration", "env_steps"};
  std::vector<std::string> names;
  std::size_t n_rows = std::numeric_limits<std::size_t>::max();
  std::vector<std::vector<MetricsTable>> tables;
  for (const auto& s : manifest.at("setups")) {
    const std::string name = s.at("name");
    const std::string hash = s.at("config_hash");
    std::vector<MetricsTable> seeds;
    for (const auto& e : s.at("seeds")) {
      if (e.at("status") != "ok") continue;
      const fs::path dir = root / name / fmt::format("seed_{}", e.at("seed").get<std::uint64_t>());
      const RunConfig rc = load_run_config((dir / "config.json").string());
      if (config_hash(rc) != hash)
        throw ConfigError("run '" + dir.string() + "' has config hash " + config_hash(rc) +
                          ", expected " + hash + "; refusing to mix configs");
      seeds.push_back(read_metrics_csv((dir / "metrics.csv").string()));
      n_rows = std::min(n_rows, seeds.back().rows.size());
    }
    if (seeds.empty()) {
      spdlog::warn("aggregate: setup {} has no successful seeds", name);
      continue;
    }
    names.push_back(name);
    tables.push_back(std::move(seeds));
  }
  if (tables.empty()) n_rows = 0;
  std::string csv;
  for (const auto& name : names)
    for (const auto& m : metrics)
      for (const char* stat : {"median", "mean", "q25", "q75"})
        header.push_back(name + ":" + m + ":" + stat);
  for (std::size_t k = 0; k < header.size(); ++k) csv += (k ? "," : "") + header[k];
  csv += "\n";
  for (std::size_t it = 0; it < n_rows; ++it) {
    const MetricsTable& first = tables.front().front();
    csv += fmt::format("{},{}", it, static_cast<long>(first.rows[it][first.column("env_steps")]));
    for (const auto& seeds : tables) {
      for (const auto& m : metrics) {
        std::vector<double> v;
        for (const auto& t : seeds) v.push_back(t.rows[it][t.column(m)]);
        const SeriesStats st = series_stats(v);
        csv += "," + format_number(st.median) + "," + format_number(st.mean) + "," +
               format_number(st.q25) + "," + format_number(st.q75);
      }
    }
    csv += "\n";
  }
  const fs::path path = root / "aggregate.csv";
  write_text_file(path, csv);
  return path.string();
}

// ---------------------------------------------------------------------------
// Evaluation and synergy fitting.

struct EvalReport {
  EvalSummary deterministic;
  EvalSummary stochastic;
  EvalSummary random;
  json to_json() const {
    auto one = [](const EvalSummary& s) {
      return json{{"episodes", s.episodes},
                  {"task_return", s.task_return},
                  {"episode_length", s.episode_length},
                  {"gail_reward", s.gail_reward},
                  {"gail_return", s.gail_return}};
    };
    return {{"deterministic", one(deterministic)},
            {"stochastic", one(stochastic)},
            {"random", one(random)}};
  }
};

// Evaluates a checkpoint. With `expert_file` set, episodes start from
// expert states and the trajectory dump sits next to the expert data in the
// same file format.
inline EvalReport cmd_eval(const std::string& checkpoint_path, int episodes, std::uint64_t seed,
                           const std::string& out_dir, const std::string& expert_file = "") {
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  std::vector<Vec> resets;
  if (!expert_file.empty()) resets = expert_reset_states(load_expert_trajectory(expert_file));
  const SynergyMap* syn = ck.synergy ? &*ck.synergy : nullptr;
  const Discriminator* disc = ck.discriminator ? &*ck.discriminator : nullptr;
  EvalReport r;
  r.deterministic = evaluate_policy(ck.env, ck.policy, syn, episodes, true, seed, disc, resets);
  r.stochastic = evaluate_policy(ck.env, ck.policy, syn, episodes, false, seed, disc, resets);
  r.random = evaluate_random(ck.env, episodes, seed, disc, resets);
  if (!out_dir.empty()) {
    const fs::path root(out_dir);
    fs::create_directories(root);
    write_text_file(root / "eval.json", r.to_json().dump(2) + "\n");
    ExpertTrajectory traj;
    traj.dt = ck.env.dt;
    for (const char* n : observation_names()) traj.columns.emplace_back(n);
    traj.episodes.push_back(r.deterministic.first_episode);
    save_expert_trajectory(traj, (root / "trajectory.csv").string());
  }
  return r;
}

struct SynergyReport {
  SynergyMap map;
  std::string map_path;
  std::string play_data_path;
  std::string table;  // explained-variance report
};

inline std::string variance_table(const SynergyMap& m) {
  std::string s = "component,explained_variance,cumulative\n";
  double cum = 0.0;
  const Vec& r = m.explained_variance_ratio();
  for (Eigen::Index k = 0; k < r.size(); ++k) {
    cum += r(k);
    s += fmt::format("{},{},{}{}\n", k + 1, format_number(r(k)), format_number(cum),
                     k < m.n_syn() ? "" : ",unused");
  }
  return s;
}

inline SynergyReport cmd_synergy(const RunConfig& c, const std::string& out_dir) {
  const fs::path root(out_dir.empty() ? "." : out_dir);
  fs::create_directories(root);
  SynergyReport r;
  Mat actions;
  if (!c.synergy.play_data.empty()) {
    actions = load_action_matrix(c.synergy.play_data);
    r.play_data_path = c.synergy.play_data;
  } else {
    const ExpertTrajectory expert = load_expert_for(c);
    TrainConfig t = c.train;
    t.seed = c.seeds.front();
    const long min_steps = static_cast<long>(kMinSamplesPerAction) * c.env.num_muscles();
    if (c.synergy.play_steps < min_steps)
      throw ConfigError("synergy.play_steps = " + std::to_string(c.synergy.play_steps) +
                        " is below the 10 x |A| = " + std::to_string(min_steps) + " minimum");
    actions = play_phase(c.env, expert, c.synergy.play_steps, t, c.policy, c.objective).actions;
    r.play_data_path = (root / "play_actions.csv").string();
    save_action_matrix(actions, r.play_data_path);
  }
  if (actions.rows() != c.env.num_muscles())
    throw ConfigError("play data has " + std::to_string(actions.rows()) + " muscles; expected " +
                      std::to_string(c.env.num_muscles()));
  IcaOptions ica;
  ica.seed = c.synergy.ica_seed;
  r.map = SynergyMap::fit(actions, c.synergy.n_syn, c.synergy.normalization, ica);
  r.map_path = c.synergy.file.empty() ? (root / "synergy.json").string() : c.synergy.file;
  if (fs::path(r.map_path).has_parent_path()) fs::create_directories(fs::path(r.map_path).parent_path());
  r.map.save(r.map_path);
  r.table = variance_table(r.map);
  write_text_file(root / "explained_variance.csv", r.table);
  return r;
}

}  // namespace musclegail

#endif  // MUSCLEGAIL_HARNESS_HPP_
