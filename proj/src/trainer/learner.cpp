#include "hsrl/trainer/learner.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

#include "hsrl/numerics/errors.hpp"
#include "hsrl/trainer/losses.hpp"

namespace hsrl::trainer {

using numerics::Tensor;

void TrainConfig::validate() const {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in (0, 1)");
  if (!(lambda_entropy >= 0.0)) throw ConfigError("lambda_entropy must be >= 0");
  if (!(lambda_bc >= 0.0)) throw ConfigError("lambda_bc must be >= 0");
  if (!(advantage_clip > 0.0)) throw ConfigError("advantage clip must be > 0");
  if (horizon == 0) throw ConfigError("horizon must be >= 1");
  if (batch_size == 0) throw ConfigError("batch size must be >= 1");
  if (!(optimizer.learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
  if (target.mode == mlc::TargetSyncMode::kSoft &&
      !(target.tau >= 0.0 && target.tau <= 1.0)) {
    throw ConfigError("target tau must lie in [0, 1]");
  }
  if (target.mode == mlc::TargetSyncMode::kHard && target.period == 0) {
    throw ConfigError("target period must be >= 1");
  }
}

namespace {

std::vector<Tensor> learnable(const hpn::PolicyNetwork& policy,
                              const mlc::Critic& critic) {
  auto params = numerics::tensors_of(policy.parameters());
  for (auto& t : numerics::tensors_of(critic.parameters())) params.push_back(t);
  return params;
}

}  // namespace

Learner::Learner(hpn::PolicyNetwork policy, mlc::Critic critic,
                 tokenizer::SidIndex index, TrainConfig config)
    : policy_(std::move(policy)),
      critic_(std::move(critic)),
      target_(critic_, config.target),
      index_(std::move(index)),
      config_(config),
      optimizer_(learnable(policy_, critic_), config.optimizer) {
  config_.validate();
  if (critic_.config().levels != policy_.levels()) {
    throw ContractError("critic and policy disagree on the number of levels");
  }
  if (critic_.config().d_model != policy_.config().d_model) {
    throw ContractError("critic and policy disagree on d_model");
  }
}

numerics::ParameterList Learner::parameters() const {
  auto out = policy_.parameters();
  for (auto& p : critic_.parameters()) out.push_back(p);
  return out;
}

double Learner::state_value(const UserState& state) const {
  numerics::NoGradGuard guard;
  return critic_.value(policy_.act(state).contexts).item();
}

double Learner::target_value(const UserState& state) const {
  numerics::NoGradGuard guard;
  return target_.network().value(policy_.act(state).contexts).item();
}

void Learner::set_logged_records(std::vector<env::LogRecord> records, std::uint64_t seed) {
  for (const auto& r : records) {
    if (r.slate.size() != r.labels.size()) throw DataError("logged record slate and labels differ in length");
    for (ItemId item : r.slate) index_.encode(item);
  }
  logged_ = std::move(records);
  logged_rng_ = Rng(seed);
}

LossReport Learner::train_step(std::span<const Transition> batch) {
  if (batch.empty()) throw ContractError("train step on an empty batch");
  std::vector<Tensor> values, log_probs, entropies, clones;
  std::vector<double> targets, advantages;
  hpn::ForwardOptions critic_path;
  critic_path.detach_heads = true;
  auto numeric_abort = [&](const NumericError& e) {
    return TrainingError("non-finite value at step " + std::to_string(optimizer_.step_count()) +
                         ": " + e.what());
  };
  Tensor lv, lpg, hen, lbc, total;
  try {
    for (const auto& t : batch) {
      if (t.slate.size() != t.feedback.size() || t.slate.size() != t.sids.size()) {
        throw ContractError("transition slate, SIDs and feedback differ in length");
      }
      Tensor c0 = policy_.encode_state(t.state);
      hpn::PolicyOutput out = policy_.forward(c0);
      hpn::PolicyOutput trajectory = policy_.forward(
          config_.detach_critic_encoder ? c0.detach() : c0, critic_path);
      Tensor v = critic_.value(trajectory.contexts);
      const double next = t.done ? 0.0 : target_value(t.next_state);
      const double q = td_target(t.reward, t.done, next, config_.gamma);
      values.push_back(v);
      targets.push_back(q);
      advantages.push_back(clip_advantage(q, v.item(), config_.advantage_clip));
      log_probs.push_back(slate_log_prob(out, t.sids));
      entropies.push_back(entropy_term(out));
      clones.push_back(bc_loss(out, t.sids, t.feedback));
    }
    if (!logged_.empty()) {
      for (std::size_t i = 0; i < config_.bc_logged_per_step; ++i) {
        const auto& r = logged_[logged_rng_.uniform_int(logged_.size())];
        std::vector<tokenizer::SemanticId> sids;
        for (ItemId item : r.slate) sids.push_back(index_.encode(item));
        const UserState s = state_from_record(r, policy_.config().history_window);
        clones.push_back(bc_loss(policy_.act(s), sids, r.labels));
      }
    }
    lv = critic_loss(values, targets);
    lpg = pg_loss(log_probs, advantages);
    hen = numerics::mean(numerics::stack(entropies));
    lbc = numerics::mean(numerics::stack(clones));
    total = numerics::add(lv, lpg);
    if (config_.lambda_entropy != 0.0) {
      total = numerics::add(total, numerics::scale(hen, config_.lambda_entropy));
    }
    if (config_.lambda_bc != 0.0) {
      total = numerics::add(total, numerics::scale(lbc, config_.lambda_bc));
    }
  } catch (const NumericError& e) {
    throw numeric_abort(e);
  }

  LossReport report;
  report.loss_v = lv.item();
  report.loss_pg = lpg.item();
  report.h_en = hen.item();
  report.loss_bc = lbc.item();
  report.total = total.item();
  for (double x : {report.loss_v, report.loss_pg, report.h_en, report.loss_bc,
                   report.total}) {
    if (!std::isfinite(x)) {
      std::ostringstream msg;
      msg << "non-finite loss at step " << optimizer_.step_count() << ": loss_V="
          << report.loss_v << " loss_PG=" << report.loss_pg
          << " H_en=" << report.h_en << " loss_BC=" << report.loss_bc;
      throw TrainingError(msg.str());
    }
  }
  optimizer_.zero_grad();
  try {
    numerics::backward(total);
  } catch (const NumericError& e) {
    throw numeric_abort(e);
  }
  optimizer_.step();
  target_.on_step(critic_);
  report.weights = critic_.weight_snapshot();
  return report;
}

// ---- rollouts ----------------------------------------------------------

Transition act_once(const env::Environment& env, const hpn::PolicyNetwork& policy,
                    const tokenizer::SidIndex& index, const env::SessionState& session,
                    hpn::SlateMode mode, Rng& rng, env::SessionState* next_session) {
  Transition t;
  t.state = session.user;
  std::vector<ItemId> slate;
  {
    numerics::NoGradGuard guard;
    hpn::PolicyOutput out = policy.act(session.user);
    t.distributions = out.snapshot();
    slate = hpn::select_slate(out, index, index.items(), env.config().slate_size,
                              mode, rng);
  }
  env::StepResult step = env.step(session, slate, rng);
  t.slate = std::move(slate);
  for (ItemId item : t.slate) t.sids.push_back(index.encode(item));
  t.feedback = std::move(step.feedback);
  t.reward = step.reward;
  t.next_state = step.next.user;
  t.done = step.done;
  if (next_session) *next_session = std::move(step.next);
  return t;
}

Episode rollout(const env::Environment& env, const hpn::PolicyNetwork& policy,
                const tokenizer::SidIndex& index, hpn::SlateMode mode, Rng& rng,
                std::size_t horizon) {
  Episode episode;
  try {
    env::SessionState session = env.reset(rng);
    while (!session.done && episode.metrics.depth < horizon) {
      env::SessionState next;
      Transition t = act_once(env, policy, index, session, mode, rng, &next);
      if (episode.metrics.depth + 1 == horizon) t.done = true;
      episode.metrics.total_reward += t.reward;
      ++episode.metrics.depth;
      episode.transitions.push_back(std::move(t));
      session = std::move(next);
    }
  } catch (const TrainingError&) {
    throw;
  } catch (const Error& e) {
    throw RolloutError(std::string("rollout aborted: ") + e.what());
  }
  return episode;
}

std::vector<EpisodeMetrics> evaluate(const env::Environment& env,
                                     const hpn::PolicyNetwork& policy,
                                     const tokenizer::SidIndex& index,
                                     std::size_t episodes, std::uint64_t seed,
                                     std::size_t horizon) {
  std::vector<EpisodeMetrics> out;
  out.reserve(episodes);
  for (std::size_t e = 0; e < episodes; ++e) {
    Rng rng = Rng(seed).derive(e);
    out.push_back(
        rollout(env, policy, index, hpn::SlateMode::kGreedy, rng, horizon).metrics);
  }
  return out;
}

double median(std::vector<double> values) {
  if (values.empty()) throw ContractError("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

namespace {

std::pair<double, double> mean_stddev(const std::vector<double>& v) {
  const double mean =
      std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(v.size()))};
}

}  // namespace

EvalSummary summarize(std::span<const EpisodeMetrics> episodes) {
  if (episodes.empty()) throw ContractError("summary of zero episodes");
  std::vector<double> rewards, depths;
  for (const auto& m : episodes) {
    rewards.push_back(m.total_reward);
    depths.push_back(static_cast<double>(m.depth));
  }
  EvalSummary s;
  s.episodes = episodes.size();
  std::tie(s.mean_reward, s.stddev_reward) = mean_stddev(rewards);
  std::tie(s.mean_depth, s.stddev_depth) = mean_stddev(depths);
  s.median_reward = median(rewards);
  s.median_depth = median(depths);
  return s;
}

// ---- metrics log ------------------------------------------------------

namespace {

void append_number(std::string& out, double x) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  out.append(buf, end);
}

}  // namespace

std::string metrics_header(std::size_t levels) {
  std::string out = "iteration,total_reward,depth,loss_V,loss_PG,H_en,loss_BC";
  for (std::size_t l = 0; l <= levels; ++l) out += ",w_" + std::to_string(l);
  out += ",seed";
  return out;
}

std::string format_metrics_row(const MetricsRow& row) {
  std::string out = std::to_string(row.iteration);
  for (double x : {row.total_reward, row.depth, row.loss_v, row.loss_pg, row.h_en,
                   row.loss_bc}) {
    out += ',';
    append_number(out, x);
  }
  for (double w : row.weights) {
    out += ',';
    append_number(out, w);
  }
  out += ',' + std::to_string(row.seed);
  return out;
}

// ---- training loop ----------------------------------------------------

TrainSummary train_agent(Learner& learner, const env::Environment& train_env,
                         const env::Environment& eval_env,
                         const TrainLoopOptions& options) {
  const TrainConfig& config = learner.config();
  const std::size_t horizon = std::min(config.horizon, train_env.config().horizon);
  struct Slot {
    env::SessionState session;
    Rng rng;
    std::size_t depth = 0;
  };
  TrainSummary summary;
  std::uint64_t next_episode = 0;
  const Rng root(options.seed);
  auto begin_episode = [&](Slot& slot) {
    slot.rng = root.derive(next_episode++);
    slot.session = train_env.reset(slot.rng);
    slot.depth = 0;
  };
  std::vector<Slot> slots(config.batch_size);
  for (auto& slot : slots) begin_episode(slot);

  MetricsRow pending;
  std::size_t pending_steps = 0;
  std::vector<Transition> batch;
  batch.reserve(slots.size());
  for (std::size_t it = 1; it <= config.iterations; ++it) {
    batch.clear();
    for (auto& slot : slots) {
      env::SessionState next;
      Transition t;
      try {
        t = act_once(train_env, learner.policy(), learner.index(), slot.session,
                     hpn::SlateMode::kSample, slot.rng, &next);
      } catch (const TrainingError&) {
        throw;
      } catch (const Error& e) {
        throw RolloutError(std::string("rollout aborted: ") + e.what());
      }
      ++slot.depth;
      if (slot.depth >= horizon) t.done = true;
      const bool finished = t.done;
      batch.push_back(std::move(t));
      if (finished) {
        ++summary.training_episodes;
        begin_episode(slot);
      } else {
        slot.session = std::move(next);
      }
    }
    const LossReport report = learner.train_step(batch);
    pending.loss_v += report.loss_v;
    pending.loss_pg += report.loss_pg;
    pending.h_en += report.h_en;
    pending.loss_bc += report.loss_bc;
    pending.weights = report.weights;
    ++pending_steps;
    summary.iterations = it;

    const bool eval_now = (config.eval_every && it % config.eval_every == 0) ||
                          it == config.iterations;
    if (eval_now) {
      const auto episodes =
          evaluate(eval_env, learner.policy(), learner.index(),
                   config.eval_episodes, options.eval_seed, horizon);
      MetricsRow row = pending;
      const double n = static_cast<double>(pending_steps);
      row.iteration = it;
      row.loss_v /= n;
      row.loss_pg /= n;
      row.h_en /= n;
      row.loss_bc /= n;
      row.seed = options.row_seed;
      if (!episodes.empty()) {
        const EvalSummary s = summarize(episodes);
        row.total_reward = s.mean_reward;
        row.depth = s.mean_depth;
      }
      summary.rows.push_back(row);
      if (options.on_row) options.on_row(row);
      pending = MetricsRow{};
      pending_steps = 0;
    }
  }
  return summary;
}

// ---- behavior cloning baseline ----------------------------------------

UserState state_from_record(const env::LogRecord& record, std::size_t window) {
  UserState s;
  const std::size_t offset =
      record.history.size() > window ? record.history.size() - window : 0;
  for (std::size_t i = offset; i < record.history.size(); ++i) {
    s.history.push_back({record.history[i], true});
  }
  return s;
}

double behavior_clone(hpn::PolicyNetwork& policy, const tokenizer::SidIndex& index,
                      const std::vector<env::LogRecord>& records,
                      const ClonerConfig& config, std::uint64_t seed) {
  if (config.batch_size == 0) throw ConfigError("cloning batch size must be >= 1");
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (std::any_of(records[i].labels.begin(), records[i].labels.end(),
                    [](std::uint8_t y) { return y != 0; })) {
      usable.push_back(i);
    }
  }
  if (usable.empty()) throw DataError("no logged record has a positive label");
  numerics::OptimizerOptions opt;
  opt.learning_rate = config.learning_rate;
  numerics::Optimizer optimizer(numerics::tensors_of(policy.parameters()), opt);
  Rng rng(seed);
  double last = 0.0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = usable.size(); i > 1; --i) {
      std::swap(usable[i - 1], usable[rng.uniform_int(i)]);
    }
    double total = 0.0;
    for (std::size_t start = 0; start < usable.size(); start += config.batch_size) {
      const std::size_t end = std::min(usable.size(), start + config.batch_size);
      std::vector<Tensor> losses;
      for (std::size_t i = start; i < end; ++i) {
        const auto& r = records[usable[i]];
        std::vector<tokenizer::SemanticId> sids;
        for (ItemId item : r.slate) sids.push_back(index.encode(item));
        hpn::PolicyOutput out = policy.act(
            state_from_record(r, policy.config().history_window));
        losses.push_back(bc_loss(out, sids, r.labels));
      }
      Tensor loss = numerics::mean(numerics::stack(losses));
      if (!std::isfinite(loss.item())) throw TrainingError("non-finite cloning loss");
      optimizer.zero_grad();
      numerics::backward(loss);
      optimizer.step();
      total += loss.item() * static_cast<double>(end - start);
    }
    last = total / static_cast<double>(usable.size());
  }
  return last;
}

}  // namespace hsrl::trainer
