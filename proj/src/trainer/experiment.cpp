#include "hsrl/trainer/experiment.hpp"

#include "hsrl/numerics/errors.hpp"

namespace hsrl::trainer {

env::Environment Workbench::train_environment() const {
  return env::Environment(simulators.train, train_pool, env);
}

env::Environment Workbench::eval_environment() const {
  return env::Environment(simulators.eval, eval_pool, env);
}

Workbench assemble_workbench(std::vector<env::LogRecord> records,
                             tokenizer::FitResult tokens, env::SimulatorPair simulators,
                             const SimulatorSettings& sim) {
  if (records.empty()) throw DataError("no logged records");
  Workbench bench;
  bench.records = std::move(records);
  bench.tokens = std::move(tokens);
  bench.simulators = std::move(simulators);
  bench.env = sim.env;
  auto [train, held_out] = env::split_records(bench.records, sim.train_fraction);
  bench.train_records = std::move(train);
  bench.train_pool = env::user_pool_from(bench.train_records);
  bench.eval_pool = env::user_pool_from(held_out.empty() ? bench.records : held_out);
  if (bench.train_pool.empty()) bench.train_pool = bench.eval_pool;
  return bench;
}

Workbench build_workbench(std::vector<tokenizer::ItemEmbedding> embeddings,
                          std::vector<env::LogRecord> records,
                          const TokenizerSettings& tok,
                          const SimulatorSettings& sim, const Seeds& seeds) {
  tokenizer::FitOptions fit;
  fit.vocab_sizes = tok.vocab_sizes;
  fit.seed = seeds.tokenizer;
  fit.kmeans = tok.kmeans;
  tokenizer::FitResult tokens = tokenizer::fit_codebook(embeddings, fit);
  for (const auto& item : env::catalog_of(records)) {
    if (!tokens.index.contains(item)) {
      throw DataError("logged item " + std::to_string(item) + " has no embedding");
    }
  }
  env::SimulatorPair sims = env::fit_simulators(
      records, tokens.index.items(), sim.model, seeds.simulator, sim.train_fraction,
      sim.content_init ? std::span<const tokenizer::ItemEmbedding>(embeddings)
                       : std::span<const tokenizer::ItemEmbedding>());
  Workbench bench =
      assemble_workbench(std::move(records), std::move(tokens), std::move(sims), sim);
  bench.embeddings = std::move(embeddings);
  return bench;
}

Variant parse_variant(const std::string& name) {
  for (Variant v : all_variants()) {
    if (variant_name(v) == name) return v;
  }
  throw ConfigError("unknown variant '" + name +
                    "' (expected full, no_entropy, flat_policy, no_bc, single_critic)");
}

std::string variant_name(Variant variant) {
  switch (variant) {
    case Variant::kFull: return "full";
    case Variant::kNoEntropy: return "no_entropy";
    case Variant::kFlatPolicy: return "flat_policy";
    case Variant::kNoBc: return "no_bc";
    case Variant::kSingleCritic: return "single_critic";
  }
  return "full";
}

const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> v{Variant::kFull, Variant::kNoEntropy,
                                      Variant::kFlatPolicy, Variant::kNoBc,
                                      Variant::kSingleCritic};
  return v;
}

hpn::PolicyConfig policy_config(const AgentSettings& settings,
                                const tokenizer::Codebook& codebook, Variant variant) {
  hpn::PolicyConfig c;
  c.d_model = settings.d_model;
  c.history_window = settings.history_window;
  c.vocab_sizes = codebook.vocab_sizes();
  c.hierarchical = variant != Variant::kFlatPolicy;
  return c;
}

mlc::CriticConfig critic_config(const AgentSettings& settings, std::size_t levels,
                                Variant variant) {
  mlc::CriticConfig c;
  c.d_model = settings.d_model;
  c.hidden = settings.critic_hidden;
  c.levels = levels;
  c.per_level_heads = settings.per_level_heads;
  c.single_level = variant == Variant::kSingleCritic;
  return c;
}

TrainConfig train_config(const AgentSettings& settings, Variant variant) {
  TrainConfig c = settings.train;
  if (variant == Variant::kNoEntropy) c.lambda_entropy = 0.0;
  if (variant == Variant::kNoBc) c.lambda_bc = 0.0;
  return c;
}

hpn::PolicyNetwork make_policy(const Workbench& bench, const AgentSettings& settings,
                               Variant variant, std::uint64_t seed) {
  hpn::PolicyNetwork policy(policy_config(settings, bench.tokens.codebook, variant),
                            bench.tokens.index.items(), mix_seed(seed, 0));
  if (settings.init_from_codebook) {
    policy.init_from_codebook(bench.tokens.codebook, bench.tokens.index,
                              mix_seed(seed, 4));
  }
  return policy;
}

Learner make_learner(const Workbench& bench, const AgentSettings& settings,
                     Variant variant, std::uint64_t seed) {
  hpn::PolicyNetwork policy = make_policy(bench, settings, variant, seed);
  mlc::Critic critic(critic_config(settings, policy.levels(), variant),
                     mix_seed(seed, 1));
  Learner learner(std::move(policy), std::move(critic), bench.tokens.index,
                  train_config(settings, variant));
  if (learner.config().bc_logged_per_step > 0) {
    learner.set_logged_records(bench.train_records, mix_seed(seed, 6));
  }
  return learner;
}

std::uint64_t eval_seed_for(std::uint64_t agent_seed) { return mix_seed(agent_seed, 2); }

AgentRun run_ablation(const Workbench& bench, const AgentSettings& settings,
                      Variant variant, std::uint64_t seed,
                      const std::function<void(const MetricsRow&)>& on_row,
                      std::optional<Learner>* out) {
  Learner learner = make_learner(bench, settings, variant, seed);
  const env::Environment train_env = bench.train_environment();
  const env::Environment eval_env = bench.eval_environment();
  TrainLoopOptions options;
  options.seed = mix_seed(seed, 3);
  options.eval_seed = eval_seed_for(seed);
  options.row_seed = seed;
  options.on_row = on_row;
  AgentRun run;
  run.train = train_agent(learner, train_env, eval_env, options);
  const TrainConfig& tc = learner.config();
  run.episodes = evaluate(eval_env, learner.policy(), learner.index(),
                          tc.eval_episodes, options.eval_seed,
                          std::min(tc.horizon, bench.env.horizon));
  if (!run.episodes.empty()) run.eval = summarize(run.episodes);
  if (out) out->emplace(std::move(learner));
  return run;
}

AgentRun run_cloning_baseline(const Workbench& bench, const AgentSettings& settings,
                              std::uint64_t seed) {
  hpn::PolicyNetwork policy = make_policy(bench, settings, Variant::kFull, seed);
  behavior_clone(policy, bench.tokens.index, bench.train_records, settings.cloner,
                 mix_seed(seed, 5));
  AgentRun run;
  run.episodes = evaluate(bench.eval_environment(), policy, bench.tokens.index,
                          settings.train.eval_episodes, eval_seed_for(seed),
                          std::min(settings.train.horizon, bench.env.horizon));
  if (!run.episodes.empty()) run.eval = summarize(run.episodes);
  return run;
}

}  // namespace hsrl::trainer
