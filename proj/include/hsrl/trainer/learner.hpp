#pragma once

// On-policy actor-critic training: rollouts on the training simulator, one
// joint optimizer step per batch of fresh transitions, greedy evaluation on
// the evaluation simulator.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hsrl/env/simulator.hpp"
#include "hsrl/hpn/policy.hpp"
#include "hsrl/mlc/critic.hpp"
#include "hsrl/numerics/optimizer.hpp"
#include "hsrl/tokenizer/codebook.hpp"

namespace hsrl::trainer {

using env::ItemId;
using hpn::UserState;

struct TrainConfig {
  double gamma = 0.9;
  double lambda_entropy = 0.1;
  double lambda_bc = 0.5;
  double advantage_clip = 1.0;
  std::size_t horizon = 20;
  std::size_t batch_size = 8;   // parallel sessions, one transition each per iteration
  std::size_t iterations = 20000;
  mlc::TargetSyncOptions target;
  numerics::OptimizerOptions optimizer;
  // Stops the critic loss from reaching the shared state encoder.
  bool detach_critic_encoder = false;
  // Logged records drawn into the BC term each step, on top of the rollout
  // feedback. Needs Learner::set_logged_records.
  std::size_t bc_logged_per_step = 0;
  std::size_t eval_every = 1000;
  std::size_t eval_episodes = 50;

  void validate() const;
};

struct Transition {
  UserState state;
  std::vector<std::vector<double>> distributions;  // policy output when acting
  std::vector<ItemId> slate;
  std::vector<tokenizer::SemanticId> sids;
  std::vector<std::uint8_t> feedback;
  double reward = 0.0;
  UserState next_state;
  bool done = false;
};

struct LossReport {
  double loss_v = 0.0;
  double loss_pg = 0.0;
  double h_en = 0.0;
  double loss_bc = 0.0;
  double total = 0.0;
  std::vector<double> weights;  // normalized level weights after the step
};

class Learner {
 public:
  Learner(hpn::PolicyNetwork policy, mlc::Critic critic, tokenizer::SidIndex index,
          TrainConfig config);

  // Joint loss, one backward pass, one optimizer step, one target update.
  // Throws TrainingError (parameters untouched) if any loss is not finite.
  LossReport train_step(std::span<const Transition> batch);

  // Source of the logged BC records; draws use their own stream.
  void set_logged_records(std::vector<env::LogRecord> records, std::uint64_t seed);

  double state_value(const UserState& state) const;
  double target_value(const UserState& state) const;

  const hpn::PolicyNetwork& policy() const { return policy_; }
  const mlc::Critic& critic() const { return critic_; }
  const mlc::TargetCritic& target() const { return target_; }
  const tokenizer::SidIndex& index() const { return index_; }
  const TrainConfig& config() const { return config_; }
  std::uint64_t steps() const { return optimizer_.step_count(); }

  // Policy followed by critic parameters.
  numerics::ParameterList parameters() const;

 private:
  hpn::PolicyNetwork policy_;
  mlc::Critic critic_;
  mlc::TargetCritic target_;
  tokenizer::SidIndex index_;
  TrainConfig config_;
  numerics::Optimizer optimizer_;
  std::vector<env::LogRecord> logged_;
  Rng logged_rng_{0};
};

struct EpisodeMetrics {
  double total_reward = 0.0;
  std::size_t depth = 0;
};

struct Episode {
  std::vector<Transition> transitions;
  EpisodeMetrics metrics;
};

// One action for a session: forward pass, slate selection, environment step.
Transition act_once(const env::Environment& env, const hpn::PolicyNetwork& policy,
                    const tokenizer::SidIndex& index, const env::SessionState& session,
                    hpn::SlateMode mode, Rng& rng, env::SessionState* next_session);

// Full episode from env.reset(rng) until done or `horizon` steps. Any
// environment failure surfaces as RolloutError and the partial episode is
// discarded.
Episode rollout(const env::Environment& env, const hpn::PolicyNetwork& policy,
                const tokenizer::SidIndex& index, hpn::SlateMode mode, Rng& rng,
                std::size_t horizon = 20);

// Greedy episodes; episode e draws everything from Rng(seed).derive(e).
std::vector<EpisodeMetrics> evaluate(const env::Environment& env,
                                     const hpn::PolicyNetwork& policy,
                                     const tokenizer::SidIndex& index,
                                     std::size_t episodes, std::uint64_t seed,
                                     std::size_t horizon = 20);

struct EvalSummary {
  std::size_t episodes = 0;
  double mean_reward = 0.0;
  double median_reward = 0.0;
  double stddev_reward = 0.0;
  double mean_depth = 0.0;
  double median_depth = 0.0;
  double stddev_depth = 0.0;
};

EvalSummary summarize(std::span<const EpisodeMetrics> episodes);

double median(std::vector<double> values);

struct MetricsRow {
  std::size_t iteration = 0;
  double total_reward = 0.0;  // mean over evaluation episodes
  double depth = 0.0;
  double loss_v = 0.0;        // means over the iterations since the last row
  double loss_pg = 0.0;
  double h_en = 0.0;
  double loss_bc = 0.0;
  std::vector<double> weights;
  std::uint64_t seed = 0;
};

std::string metrics_header(std::size_t levels);
std::string format_metrics_row(const MetricsRow& row);

struct TrainLoopOptions {
  std::uint64_t seed = 0;       // rollout streams
  std::uint64_t eval_seed = 0;  // evaluation episodes
  std::uint64_t row_seed = 0;   // seed column of the metrics rows
  std::function<void(const MetricsRow&)> on_row;
};

struct TrainSummary {
  std::vector<MetricsRow> rows;
  std::size_t iterations = 0;
  std::size_t training_episodes = 0;
};

// Runs config.iterations iterations of B parallel sessions on `train_env`.
// Every eval_every iterations (and after the last one) the greedy policy is
// evaluated on `eval_env` and a metrics row is emitted.
TrainSummary train_agent(Learner& learner, const env::Environment& train_env,
                         const env::Environment& eval_env,
                         const TrainLoopOptions& options);

// Supervised baseline: behavior cloning of logged clicks.
struct ClonerConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
};

// Returns the mean loss of the last epoch.
double behavior_clone(hpn::PolicyNetwork& policy, const tokenizer::SidIndex& index,
                      const std::vector<env::LogRecord>& records,
                      const ClonerConfig& config, std::uint64_t seed);

// State a logged record describes: its history, every entry a click.
UserState state_from_record(const env::LogRecord& record, std::size_t window);

}  // namespace hsrl::trainer
