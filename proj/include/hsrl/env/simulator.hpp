#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "hsrl/env/records.hpp"
#include "hsrl/hpn/encoder.hpp"
#include "hsrl/hpn/policy.hpp"
#include "hsrl/numerics/rng.hpp"

namespace hsrl::env {

using hpn::UserState;

inline constexpr double kClickSignal = 1.0;
inline constexpr double kSkipSignal = -0.2;

struct EnvConfig {
  std::size_t slate_size = 5;
  std::size_t patience = 3;   // P0
  std::size_t horizon = 20;   // T_max
  std::size_t history_window = 10;
};

struct SessionState {
  std::uint64_t user_id = 0;
  UserState user;                // window-truncated, feedback-tagged history
  std::vector<ItemId> clicked;   // most recent positives, window-truncated
  std::size_t patience = 0;
  std::size_t t = 0;
  bool done = false;

  bool operator==(const SessionState&) const = default;
};

struct StepResult {
  std::vector<std::uint8_t> feedback;
  double reward = 0.0;
  SessionState next;
  bool done = false;
};

// Maps a session and a slate to per-item click probabilities in (0, 1).
class ClickModel {
 public:
  virtual ~ClickModel() = default;
  virtual std::vector<double> click_probabilities(
      const SessionState& session, std::span<const ItemId> slate) const = 0;
};

struct PoolEntry {
  std::uint64_t user_id = 0;
  std::vector<ItemId> history;  // logged positives, oldest first
};

// Pool of starting states taken from logged records.
std::vector<PoolEntry> user_pool_from(const std::vector<LogRecord>& records);

// Mean per-item signal: 1.0 for a click, -0.2 otherwise.
double reward_from_feedback(std::span<const std::uint8_t> feedback);

class Environment {
 public:
  Environment(const ClickModel& model, std::vector<PoolEntry> pool,
              EnvConfig config);

  SessionState reset(Rng& rng) const;
  SessionState start(const PoolEntry& entry) const;
  StepResult step(const SessionState& session, std::span<const ItemId> slate,
                  Rng& rng) const;

  const EnvConfig& config() const { return config_; }
  const ClickModel& model() const { return *model_; }
  const std::vector<PoolEntry>& pool() const { return pool_; }

 private:
  const ClickModel* model_;
  std::vector<PoolEntry> pool_;
  EnvConfig config_;
};

struct ResponseModelConfig {
  std::size_t width = 32;
  std::size_t window = 10;
  std::size_t epochs = 3;
  std::size_t batch_size = 32;
  double learning_rate = 3e-3;
};

// Learned user-response model: an encoder over the user's recent positive
// items produces a preference vector u; item j in the slate clicks with
// probability sigmoid(u . v_j + b_j + b).
class ResponseModel : public ClickModel {
 public:
  ResponseModel() = default;
  // With `features`, both item tables start from a fixed unit-norm projection
  // of the item content vectors, so items with similar content begin with
  // similar click behavior.
  ResponseModel(ResponseModelConfig config, std::vector<ItemId> catalog,
                std::uint64_t seed,
                std::span<const tokenizer::ItemEmbedding> features = {});

  std::vector<double> click_probabilities(
      const SessionState& session, std::span<const ItemId> slate) const override;

  // Logits for a record-shaped input; differentiable.
  numerics::Tensor logits(std::span<const ItemId> positives,
                          std::span<const ItemId> slate) const;

  numerics::ParameterList parameters() const;
  const ResponseModelConfig& config() const { return config_; }
  const std::vector<ItemId>& catalog() const { return catalog_; }

 private:
  std::size_t row(ItemId item) const;

  ResponseModelConfig config_;
  std::vector<ItemId> catalog_;
  hpn::SequenceEncoder encoder_;
  numerics::Tensor item_table_;  // N x width
  numerics::Tensor item_bias_;   // N
  numerics::Tensor global_bias_;
};

// Supervised binary cross-entropy fit. Deterministic given the seed.
ResponseModel fit_response_model(const std::vector<LogRecord>& records,
                                 const std::vector<ItemId>& catalog,
                                 const ResponseModelConfig& config,
                                 std::uint64_t seed,
                                 std::span<const tokenizer::ItemEmbedding> features = {});

// Mean binary cross-entropy of the model on the records.
double log_loss(const ResponseModel& model, const std::vector<LogRecord>& records);

struct SimulatorPair {
  ResponseModel train;  // fitted on the training split, used for learning
  ResponseModel eval;   // fitted on all records, used only for evaluation
};

// Fits both simulators from one record set: the earliest `train_fraction`
// of every user's records for the training simulator and everything for the
// evaluation simulator, with independent seeds derived from `seed`.
SimulatorPair fit_simulators(const std::vector<LogRecord>& records,
                             const std::vector<ItemId>& catalog,
                             const ResponseModelConfig& config,
                             std::uint64_t seed, double train_fraction = 0.8,
                             std::span<const tokenizer::ItemEmbedding> features = {});

void save_response_model(const std::filesystem::path& path,
                         const ResponseModel& model);
// Rebuilds the architecture from config and catalog, then restores weights.
ResponseModel load_response_model(const std::filesystem::path& path,
                                  const ResponseModelConfig& config,
                                  const std::vector<ItemId>& catalog);

}  // namespace hsrl::env
