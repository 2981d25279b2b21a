#include "hsrl/env/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hsrl/hpn/checkpoint.hpp"
#include "hsrl/numerics/errors.hpp"

namespace hsrl::env {

using numerics::Tensor;

namespace {

template <typename T>
void truncate_front(std::vector<T>& v, std::size_t window) {
  if (v.size() > window) {
    v.erase(v.begin(), v.end() - static_cast<std::ptrdiff_t>(window));
  }
}

}  // namespace

std::vector<PoolEntry> user_pool_from(const std::vector<LogRecord>& records) {
  std::vector<PoolEntry> pool;
  pool.reserve(records.size());
  for (const auto& r : records) pool.push_back({r.user_id, r.history});
  return pool;
}

double reward_from_feedback(std::span<const std::uint8_t> feedback) {
  if (feedback.empty()) throw ContractError("reward of an empty slate");
  double total = 0.0;
  for (std::uint8_t y : feedback) total += y ? kClickSignal : kSkipSignal;
  return total / static_cast<double>(feedback.size());
}

// ---- Environment ----------------------------------------------------------

Environment::Environment(const ClickModel& model, std::vector<PoolEntry> pool,
                         EnvConfig config)
    : model_(&model), pool_(std::move(pool)), config_(config) {
  if (config_.patience == 0) throw ConfigError("patience must be at least 1");
  if (config_.horizon == 0) throw ConfigError("horizon must be at least 1");
  if (config_.slate_size == 0) throw ConfigError("slate size must be at least 1");
}

SessionState Environment::start(const PoolEntry& entry) const {
  SessionState s;
  s.user_id = entry.user_id;
  for (ItemId item : entry.history) {
    s.user.history.push_back({item, true});
    s.clicked.push_back(item);
  }
  truncate_front(s.user.history, config_.history_window);
  truncate_front(s.clicked, config_.history_window);
  s.patience = config_.patience;
  s.t = 0;
  s.done = false;
  return s;
}

SessionState Environment::reset(Rng& rng) const {
  if (pool_.empty()) throw DataError("environment user pool is empty");
  return start(pool_[rng.uniform_int(pool_.size())]);
}

StepResult Environment::step(const SessionState& session,
                             std::span<const ItemId> slate, Rng& rng) const {
  if (session.done) throw ContractError("step on a finished session");
  if (slate.size() != config_.slate_size) {
    throw ContractError("slate has " + std::to_string(slate.size()) +
                        " items, environment expects " +
                        std::to_string(config_.slate_size));
  }
  const std::vector<double> probs = model_->click_probabilities(session, slate);
  if (probs.size() != slate.size()) {
    throw ContractError("click model returned wrong number of probabilities");
  }
  StepResult out;
  out.feedback.reserve(slate.size());
  std::size_t clicks = 0;
  for (double p : probs) {
    if (!(p >= 0.0 && p <= 1.0)) throw NumericError("click probability outside [0,1]");
    const bool y = rng.bernoulli(p);
    out.feedback.push_back(y ? 1 : 0);
    clicks += y ? 1 : 0;
  }
  out.reward = reward_from_feedback(out.feedback);

  SessionState next = session;
  for (std::size_t j = 0; j < slate.size(); ++j) {
    next.user.history.push_back({slate[j], out.feedback[j] != 0});
    if (out.feedback[j]) next.clicked.push_back(slate[j]);
  }
  truncate_front(next.user.history, config_.history_window);
  truncate_front(next.clicked, config_.history_window);
  next.patience = clicks == 0 ? session.patience - 1 : config_.patience;
  next.t = session.t + 1;
  next.done = next.patience == 0 || next.t >= config_.horizon;
  out.done = next.done;
  out.next = std::move(next);
  return out;
}

// ---- ResponseModel --------------------------------------------------------

ResponseModel::ResponseModel(ResponseModelConfig config,
                             std::vector<ItemId> catalog, std::uint64_t seed,
                             std::span<const tokenizer::ItemEmbedding> features)
    : config_(config), catalog_(std::move(catalog)) {
  if (catalog_.empty()) throw DataError("response model needs a catalog");
  if (!std::is_sorted(catalog_.begin(), catalog_.end())) {
    throw ContractError("response model catalog must be ascending");
  }
  Rng rng(seed);
  hpn::EncoderConfig enc;
  enc.num_items = catalog_.size();
  enc.width = config_.width;
  enc.window = config_.window;
  encoder_ = hpn::SequenceEncoder(enc, rng);
  item_table_ = hpn::init_parameter(
      {catalog_.size(), config_.width},
      1.0 / std::sqrt(static_cast<double>(config_.width)), rng);
  item_bias_ = Tensor::zeros({catalog_.size()}, true);
  global_bias_ = Tensor::zeros({}, true);
  if (features.empty()) return;
  const std::size_t dim = features.front().vector.size();
  const hpn::FeatureProjection proj(dim, config_.width, rng);
  Tensor history_table = encoder_.item_table();
  auto a = item_table_.mutable_data();
  auto b = history_table.mutable_data();
  const std::size_t w = config_.width;
  for (const auto& f : features) {
    if (f.vector.size() != dim) throw DimensionError("item features differ in length");
    auto it = std::lower_bound(catalog_.begin(), catalog_.end(), f.item_id);
    if (it == catalog_.end() || *it != f.item_id) continue;
    const std::size_t r = static_cast<std::size_t>(it - catalog_.begin());
    proj.apply(f.vector, a.subspan(r * w, w));
    std::copy_n(a.begin() + static_cast<std::ptrdiff_t>(r * w), w,
                b.begin() + static_cast<std::ptrdiff_t>(r * w));
  }
}

std::size_t ResponseModel::row(ItemId item) const {
  auto it = std::lower_bound(catalog_.begin(), catalog_.end(), item);
  if (it == catalog_.end() || *it != item) {
    throw LookupError("response model: unknown item " + std::to_string(item));
  }
  return static_cast<std::size_t>(it - catalog_.begin());
}

Tensor ResponseModel::logits(std::span<const ItemId> positives,
                             std::span<const ItemId> slate) const {
  std::vector<std::size_t> hist_rows;
  const std::size_t offset =
      positives.size() > config_.window ? positives.size() - config_.window : 0;
  for (std::size_t i = offset; i < positives.size(); ++i) {
    hist_rows.push_back(row(positives[i]));
  }
  std::vector<std::uint8_t> bits(hist_rows.size(), 1);
  Tensor user = encoder_.encode(hist_rows, bits, {});
  std::vector<std::size_t> slate_rows;
  for (ItemId item : slate) slate_rows.push_back(row(item));
  Tensor items = numerics::gather_rows(item_table_, slate_rows);
  Tensor scores = numerics::matvec(items, user);
  std::vector<Tensor> bias_terms;
  for (std::size_t r : slate_rows) bias_terms.push_back(numerics::at(item_bias_, r));
  Tensor bias = numerics::stack(bias_terms);
  std::vector<Tensor> global(slate_rows.size(), global_bias_);
  return numerics::add(numerics::add(scores, bias), numerics::stack(global));
}

std::vector<double> ResponseModel::click_probabilities(
    const SessionState& session, std::span<const ItemId> slate) const {
  numerics::NoGradGuard guard;
  return numerics::sigmoid(logits(session.clicked, slate)).to_vector();
}

numerics::ParameterList ResponseModel::parameters() const {
  numerics::ParameterList out;
  encoder_.append_parameters(out, "response.encoder.");
  out.push_back({"response.item_table", item_table_});
  out.push_back({"response.item_bias", item_bias_});
  out.push_back({"response.global_bias", global_bias_});
  return out;
}

namespace {

Tensor record_loss(const ResponseModel& model, const LogRecord& r) {
  Tensor z = model.logits(r.history, r.slate);
  std::vector<double> sign(r.labels.size());
  for (std::size_t j = 0; j < sign.size(); ++j) sign[j] = r.labels[j] ? 1.0 : -1.0;
  // -log sigmoid(s * z) is the cross-entropy for label s in {+1, -1}
  Tensor signed_logits = numerics::mul(z, Tensor::vector(std::move(sign)));
  return numerics::scale(numerics::mean(numerics::log_sigmoid(signed_logits)), -1.0);
}

}  // namespace

ResponseModel fit_response_model(const std::vector<LogRecord>& records,
                                 const std::vector<ItemId>& catalog,
                                 const ResponseModelConfig& config,
                                 std::uint64_t seed,
                                 std::span<const tokenizer::ItemEmbedding> features) {
  if (records.empty()) throw DataError("cannot fit a response model on no records");
  if (config.batch_size == 0) throw ConfigError("response model batch size must be positive");
  ResponseModel model(config, catalog, seed, features);
  numerics::OptimizerOptions opt;
  opt.learning_rate = config.learning_rate;
  numerics::Optimizer optimizer(numerics::tensors_of(model.parameters()), opt);
  Rng rng = Rng(seed).derive(1);
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    // Fisher-Yates with the library stream keeps the shuffle portable.
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng.uniform_int(i)]);
    }
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      optimizer.zero_grad();
      std::vector<Tensor> losses;
      for (std::size_t i = start; i < end; ++i) {
        losses.push_back(record_loss(model, records[order[i]]));
      }
      numerics::backward(numerics::mean(numerics::stack(losses)));
      optimizer.step();
    }
  }
  return model;
}

double log_loss(const ResponseModel& model, const std::vector<LogRecord>& records) {
  if (records.empty()) throw DataError("log loss over no records");
  numerics::NoGradGuard guard;
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& r : records) {
    total += record_loss(model, r).item() * static_cast<double>(r.slate.size());
    count += r.slate.size();
  }
  return total / static_cast<double>(count);
}

SimulatorPair fit_simulators(const std::vector<LogRecord>& records,
                             const std::vector<ItemId>& catalog,
                             const ResponseModelConfig& config,
                             std::uint64_t seed, double train_fraction,
                             std::span<const tokenizer::ItemEmbedding> features) {
  auto [train, rest] = split_records(records, train_fraction);
  if (train.empty()) throw DataError("training split is empty");
  SimulatorPair out{
      fit_response_model(train, catalog, config, mix_seed(seed, 0), features),
      fit_response_model(records, catalog, config, mix_seed(seed, 1), features),
  };
  return out;
}

void save_response_model(const std::filesystem::path& path,
                         const ResponseModel& model) {
  hpn::save_checkpoint(path, model.parameters());
}

ResponseModel load_response_model(const std::filesystem::path& path,
                                  const ResponseModelConfig& config,
                                  const std::vector<ItemId>& catalog) {
  ResponseModel model(config, catalog, 0);
  auto params = model.parameters();
  hpn::restore_parameters(params, hpn::load_checkpoint(path));
  return model;
}

}  // namespace hsrl::env
