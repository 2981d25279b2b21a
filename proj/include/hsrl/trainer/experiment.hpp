#pragma once

// Experiment assembly: tokenizer, the two simulators and agent training wired
// together, plus the ablation variants and the supervised baseline.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hsrl/env/records.hpp"
#include "hsrl/env/simulator.hpp"
#include "hsrl/tokenizer/codebook.hpp"
#include "hsrl/trainer/learner.hpp"

namespace hsrl::trainer {

struct Seeds {
  std::uint64_t tokenizer = 1;
  std::uint64_t simulator = 2;
  std::uint64_t agent = 3;
};

struct TokenizerSettings {
  std::vector<std::size_t> vocab_sizes{16, 16, 16};
  tokenizer::KMeansOptions kmeans;
};

struct SimulatorSettings {
  env::ResponseModelConfig model;
  double train_fraction = 0.8;
  // Start the simulators' item tables from the item content vectors.
  bool content_init = true;
  env::EnvConfig env;
};

struct AgentSettings {
  std::size_t d_model = 32;
  std::size_t history_window = 10;
  std::size_t critic_hidden = 64;
  bool per_level_heads = false;
  bool init_from_codebook = false;
  TrainConfig train;
  ClonerConfig cloner;
};

// Everything the agent needs that does not depend on the agent seed.
struct Workbench {
  std::vector<tokenizer::ItemEmbedding> embeddings;
  std::vector<env::LogRecord> records;
  tokenizer::FitResult tokens;
  env::SimulatorPair simulators;
  std::vector<env::LogRecord> train_records;  // earliest share of each user
  std::vector<env::PoolEntry> train_pool;
  std::vector<env::PoolEntry> eval_pool;
  env::EnvConfig env;

  env::Environment train_environment() const;
  env::Environment eval_environment() const;
};

Workbench build_workbench(std::vector<tokenizer::ItemEmbedding> embeddings,
                          std::vector<env::LogRecord> records,
                          const TokenizerSettings& tok,
                          const SimulatorSettings& sim, const Seeds& seeds);

// Same as build_workbench but with an already fitted codebook and simulators.
Workbench assemble_workbench(std::vector<env::LogRecord> records,
                             tokenizer::FitResult tokens, env::SimulatorPair simulators,
                             const SimulatorSettings& sim);

enum class Variant { kFull, kNoEntropy, kFlatPolicy, kNoBc, kSingleCritic };

// Throws ConfigError for unknown names.
Variant parse_variant(const std::string& name);
std::string variant_name(Variant variant);
const std::vector<Variant>& all_variants();

hpn::PolicyConfig policy_config(const AgentSettings& settings,
                                const tokenizer::Codebook& codebook, Variant variant);
mlc::CriticConfig critic_config(const AgentSettings& settings, std::size_t levels,
                                Variant variant);
TrainConfig train_config(const AgentSettings& settings, Variant variant);

hpn::PolicyNetwork make_policy(const Workbench& bench, const AgentSettings& settings,
                               Variant variant, std::uint64_t seed);
Learner make_learner(const Workbench& bench, const AgentSettings& settings,
                     Variant variant, std::uint64_t seed);

// Seed used for the evaluation episodes of an agent seed; shared by every
// variant so their evaluations face the same users and click draws.
std::uint64_t eval_seed_for(std::uint64_t agent_seed);

struct AgentRun {
  TrainSummary train;
  std::vector<EpisodeMetrics> episodes;
  EvalSummary eval;
};

AgentRun run_ablation(const Workbench& bench, const AgentSettings& settings,
                      Variant variant, std::uint64_t seed,
                      const std::function<void(const MetricsRow&)>& on_row = {},
                      std::optional<Learner>* out = nullptr);

// Behavior cloning on the logged training records, then greedy evaluation.
AgentRun run_cloning_baseline(const Workbench& bench, const AgentSettings& settings,
                              std::uint64_t seed);

}  // namespace hsrl::trainer
