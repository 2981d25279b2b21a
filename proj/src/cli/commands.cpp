#include "hsrl/cli/commands.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>

#include "hsrl/env/synthetic.hpp"
#include "hsrl/hpn/checkpoint.hpp"
#include "hsrl/numerics/binary_io.hpp"
#include "hsrl/numerics/errors.hpp"
#include "json.hpp"

namespace hsrl::cli {

namespace fs = std::filesystem;
using trainer::Variant;

namespace {

std::string num(double x) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, end);
}

std::uint64_t agent_seed(const RunConfig& c, std::size_t i) { return c.seeds.agent + i; }

env::SyntheticConfig synthetic_of(const RunConfig& c) {
  env::SyntheticConfig s = c.synthetic;
  s.slate_size = c.simulator.env.slate_size;
  return s;
}

tokenizer::FitResult fit_tokens(const RunConfig& c,
                                const std::vector<tokenizer::ItemEmbedding>& embeddings,
                                std::vector<std::size_t> vocab_sizes) {
  tokenizer::FitOptions fit;
  fit.vocab_sizes = std::move(vocab_sizes);
  fit.seed = c.seeds.tokenizer;
  fit.kmeans = c.tokenizer.kmeans;
  return tokenizer::fit_codebook(embeddings, fit);
}

tokenizer::FitResult tokens_for(const RunConfig& c, const LoadedData& data,
                                std::ostream& log) {
  const fs::path path = c.out / files::kCodebook;
  if (fs::exists(path)) {
    auto loaded = tokenizer::load_codebook(path);
    if (loaded.codebook.vocab_sizes() != c.tokenizer.vocab_sizes) {
      throw ConfigError(path.string() +
                        " was built with different vocabulary sizes; rerun tokenize");
    }
    log << "using codebook " << path.string() << "\n";
    tokenizer::FitResult r;
    r.codebook = std::move(loaded.codebook);
    r.index = std::move(loaded.index);
    return r;
  }
  auto r = fit_tokens(c, data.embeddings, c.tokenizer.vocab_sizes);
  tokenizer::save_codebook(path, r.codebook, r.index);
  log << "fitted codebook " << path.string() << "\n";
  return r;
}

env::SimulatorPair fit_sims(const RunConfig& c, const LoadedData& data,
                            const std::vector<env::ItemId>& catalog) {
  return env::fit_simulators(
      data.records, catalog, c.simulator.model, c.seeds.simulator,
      c.simulator.train_fraction,
      c.simulator.content_init ? std::span<const tokenizer::ItemEmbedding>(data.embeddings)
                               : std::span<const tokenizer::ItemEmbedding>());
}

env::SimulatorPair sims_for(const RunConfig& c, const LoadedData& data,
                            const std::vector<env::ItemId>& catalog, std::ostream& log) {
  const fs::path train = c.out / files::kSimTrain, eval = c.out / files::kSimEval;
  if (fs::exists(train) && fs::exists(eval)) {
    log << "using simulators " << train.string() << ", " << eval.string() << "\n";
    return {env::load_response_model(train, c.simulator.model, catalog),
            env::load_response_model(eval, c.simulator.model, catalog)};
  }
  auto sims = fit_sims(c, data, catalog);
  env::save_response_model(train, sims.train);
  env::save_response_model(eval, sims.eval);
  log << "fitted simulators " << train.string() << ", " << eval.string() << "\n";
  return sims;
}

void check_catalog(const LoadedData& data, const tokenizer::SidIndex& index) {
  for (auto item : env::catalog_of(data.records)) {
    if (!index.contains(item)) {
      throw DataError("logged item " + std::to_string(item) + " is missing from the codebook");
    }
  }
}

trainer::Workbench workbench_for(const RunConfig& c, std::ostream& log) {
  LoadedData data = load_data(c);
  auto tokens = tokens_for(c, data, log);
  check_catalog(data, tokens.index);
  auto sims = sims_for(c, data, tokens.index.items(), log);
  auto bench = trainer::assemble_workbench(std::move(data.records), std::move(tokens),
                                           std::move(sims), c.simulator);
  bench.embeddings = std::move(data.embeddings);
  return bench;
}

std::size_t horizon_of(const RunConfig& c) {
  return std::min(c.agent.train.horizon, c.simulator.env.horizon);
}

void print_summary(std::ostream& log, const std::string& label,
                   const trainer::EvalSummary& s) {
  log << label << ": episodes=" << s.episodes << " total_reward mean=" << num(s.mean_reward)
      << " median=" << num(s.median_reward) << " stddev=" << num(s.stddev_reward)
      << " depth mean=" << num(s.mean_depth) << " median=" << num(s.median_depth)
      << " stddev=" << num(s.stddev_depth) << "\n";
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace

RunConfig resolve_config(const CommandLine& line) {
  RunConfig c = line.config ? load_config(*line.config) : default_config();
  if (line.seed_agent) c.seeds.agent = *line.seed_agent;
  if (line.seed_sim) c.seeds.simulator = *line.seed_sim;
  if (line.seed_tok) c.seeds.tokenizer = *line.seed_tok;
  if (line.out) c.out = *line.out;
  c.validate();
  return c;
}

LoadedData load_data(const RunConfig& c) {
  LoadedData d;
  switch (c.source) {
    case DataSource::kSynthetic: {
      auto syn = env::generate_synthetic(synthetic_of(c), c.seeds.simulator);
      d.embeddings = std::move(syn.embeddings);
      d.records = std::move(syn.records);
      break;
    }
    case DataSource::kRecords:
      d.embeddings = tokenizer::read_embeddings(c.embeddings_path);
      d.records = env::read_records(c.records_path);
      break;
    case DataSource::kRatings:
      d.embeddings = tokenizer::read_embeddings(c.embeddings_path);
      d.records = env::ingest_ml1m_style(c.ratings_path).records;
      break;
  }
  if (d.records.empty()) throw DataError("no logged records");
  return d;
}

std::vector<fs::path> cmd_gen_data(const RunConfig& c, std::ostream& log) {
  auto syn = env::generate_synthetic(synthetic_of(c), c.seeds.simulator);
  const fs::path e = c.out / files::kEmbeddings, r = c.out / files::kRecords;
  tokenizer::write_embeddings(e, syn.embeddings);
  env::write_records(r, syn.records);
  log << "generated " << syn.embeddings.size() << " items and " << syn.records.size()
      << " records\n";
  return {e, r};
}

std::vector<fs::path> cmd_tokenize(const RunConfig& c, std::ostream& log) {
  LoadedData data = load_data(c);
  auto r = fit_tokens(c, data.embeddings, c.tokenizer.vocab_sizes);
  const fs::path book = c.out / files::kCodebook, report = c.out / files::kTokenizeReport;
  tokenizer::save_codebook(book, r.codebook, r.index);
  const auto stats = tokenizer::collision_report(r.index);
  std::string csv = "level,vocab_size,entropy,residual_error\n";
  for (std::size_t l = 0; l < r.codebook.levels(); ++l) {
    csv += std::to_string(l + 1) + "," + std::to_string(r.codebook.vocab_size(l)) + "," +
           num(stats.level_entropy[l]) + "," + num(r.level_errors[l]) + "\n";
    log << "level " << l + 1 << ": T=" << r.codebook.vocab_size(l)
        << " entropy=" << num(stats.level_entropy[l])
        << " residual_error=" << num(r.level_errors[l]) << "\n";
  }
  write_file(report, csv);
  log << "catalog=" << stats.catalog_size << " distinct_sids=" << stats.distinct_sids
      << " colliding_sids=" << stats.colliding_sids << " max_bucket=" << stats.max_bucket
      << "\n";
  return {book, report};
}

std::vector<fs::path> cmd_fit_sim(const RunConfig& c, std::ostream& log) {
  LoadedData data = load_data(c);
  auto tokens = tokens_for(c, data, log);
  check_catalog(data, tokens.index);
  auto sims = fit_sims(c, data, tokens.index.items());
  const fs::path train = c.out / files::kSimTrain, eval = c.out / files::kSimEval,
                 report = c.out / files::kSimReport;
  env::save_response_model(train, sims.train);
  env::save_response_model(eval, sims.eval);
  auto [train_split, held_out] = env::split_records(data.records, c.simulator.train_fraction);
  std::string csv = "simulator,split,log_loss\n";
  auto add = [&](const char* name, const env::ResponseModel& m, const char* split,
                 const std::vector<env::LogRecord>& recs) {
    if (recs.empty()) return;
    const double ll = env::log_loss(m, recs);
    csv += std::string(name) + "," + split + "," + num(ll) + "\n";
    log << name << " simulator log-loss on " << split << ": " << num(ll) << "\n";
  };
  add("train", sims.train, "train", train_split);
  add("train", sims.train, "held_out", held_out);
  add("eval", sims.eval, "all", data.records);
  write_file(report, csv);
  return {train, eval, report};
}

std::vector<fs::path> cmd_train(const RunConfig& c, std::ostream& log) {
  const trainer::Workbench bench = workbench_for(c, log);
  const Variant variant = trainer::parse_variant(c.variant);
  trainer::Learner learner =
      trainer::make_learner(bench, c.agent, variant, c.seeds.agent);
  const fs::path ckpt = c.out / files::kCheckpoint, metrics = c.out / files::kMetrics;
  hpn::save_checkpoint(ckpt, learner.parameters());
  const std::string header = trainer::metrics_header(learner.policy().levels()) + "\n";
  write_file(metrics, header);
  std::ofstream csv(metrics, std::ios::app | std::ios::binary);
  if (!csv) throw DataError("cannot append to " + metrics.string());

  const env::Environment train_env = bench.train_environment();
  const env::Environment eval_env = bench.eval_environment();
  trainer::TrainLoopOptions options;
  options.seed = mix_seed(c.seeds.agent, 3);
  options.eval_seed = trainer::eval_seed_for(c.seeds.agent);
  options.row_seed = c.seeds.agent;
  options.on_row = [&](const trainer::MetricsRow& row) {
    csv << trainer::format_metrics_row(row) << "\n";
    csv.flush();
    hpn::save_checkpoint(ckpt, learner.parameters());
    log << "iteration " << row.iteration << " total_reward=" << num(row.total_reward)
        << " depth=" << num(row.depth) << " loss_V=" << num(row.loss_v)
        << " H_en=" << num(row.h_en) << "\n";
  };
  const auto summary = trainer::train_agent(learner, train_env, eval_env, options);
  hpn::save_checkpoint(ckpt, learner.parameters());
  log << "trained " << summary.iterations << " iterations over "
      << summary.training_episodes << " finished episodes\n";
  return {ckpt, metrics};
}

std::vector<fs::path> cmd_eval(const RunConfig& c, const fs::path& checkpoint,
                               std::optional<std::size_t> episodes, std::ostream& log) {
  const trainer::Workbench bench = workbench_for(c, log);
  const Variant variant = trainer::parse_variant(c.variant);
  hpn::PolicyNetwork policy = trainer::make_policy(bench, c.agent, variant, c.seeds.agent);
  auto params = policy.parameters();
  hpn::restore_parameters(params, hpn::load_checkpoint(checkpoint));
  const std::size_t e = episodes.value_or(c.agent.train.eval_episodes);
  if (e == 0) throw ConfigError("evaluation needs at least one episode");
  const auto metrics =
      trainer::evaluate(bench.eval_environment(), policy, bench.tokens.index, e,
                        trainer::eval_seed_for(c.seeds.agent), horizon_of(c));
  std::string csv = "episode,total_reward,depth\n";
  for (std::size_t i = 0; i < metrics.size(); ++i) {
    csv += std::to_string(i) + "," + num(metrics[i].total_reward) + "," +
           std::to_string(metrics[i].depth) + "\n";
  }
  const fs::path out = c.out / files::kEval;
  write_file(out, csv);
  print_summary(log, "evaluation", trainer::summarize(metrics));
  return {out};
}

std::vector<double> sweep_grid(const std::string& axis) {
  if (axis == "entropy") return {0.0, 0.1, 0.2, 0.3};
  if (axis == "vocab") return {16, 32, 64, 80, 128};
  if (axis == "levels") return {2, 3, 4, 5};
  throw ConfigError("unknown sweep axis '" + axis + "' (expected entropy, vocab or levels)");
}

std::vector<fs::path> cmd_sweep(const RunConfig& c, const std::string& axis,
                                std::ostream& log) {
  const auto grid = sweep_grid(axis);
  const trainer::Workbench base = workbench_for(c, log);
  std::string csv = "axis,value,seed,mean_total_reward,median_total_reward,"
                    "stddev_total_reward,mean_depth\n";
  for (double value : grid) {
    RunConfig point = c;
    std::vector<std::size_t> vocab = c.tokenizer.vocab_sizes;
    if (axis == "entropy") point.agent.train.lambda_entropy = value;
    if (axis == "vocab") vocab.assign(vocab.size(), static_cast<std::size_t>(value));
    if (axis == "levels") vocab.assign(static_cast<std::size_t>(value), vocab.front());
    trainer::Workbench bench = base;
    if (vocab != c.tokenizer.vocab_sizes) {
      bench = trainer::assemble_workbench(base.records, fit_tokens(c, base.embeddings, vocab),
                                          base.simulators, c.simulator);
    }
    for (std::size_t i = 0; i < c.agent_seeds; ++i) {
      const auto run =
          trainer::run_ablation(bench, point.agent, Variant::kFull, agent_seed(c, i));
      csv += axis + "," + num(value) + "," + std::to_string(agent_seed(c, i)) + "," +
             num(run.eval.mean_reward) + "," + num(run.eval.median_reward) + "," +
             num(run.eval.stddev_reward) + "," + num(run.eval.mean_depth) + "\n";
      print_summary(log, axis + "=" + num(value) + " seed " +
                             std::to_string(agent_seed(c, i)), run.eval);
    }
  }
  const fs::path out = c.out / ("sweep_" + axis + ".csv");
  write_file(out, csv);
  return {out};
}

std::vector<fs::path> cmd_ablate(const RunConfig& c, std::ostream& log) {
  const trainer::Workbench bench = workbench_for(c, log);
  struct Result {
    std::string name;
    std::vector<double> rewards;  // per-seed mean total reward
    std::vector<double> depths;
  };
  std::vector<Result> results;
  for (Variant v : trainer::all_variants()) {
    Result r{trainer::variant_name(v), {}, {}};
    for (std::size_t i = 0; i < c.agent_seeds; ++i) {
      const auto run = trainer::run_ablation(bench, c.agent, v, agent_seed(c, i));
      r.rewards.push_back(run.eval.mean_reward);
      r.depths.push_back(run.eval.mean_depth);
      print_summary(log, r.name + " seed " + std::to_string(agent_seed(c, i)), run.eval);
    }
    results.push_back(std::move(r));
  }
  Result baseline{"behavior_cloning", {}, {}};
  for (std::size_t i = 0; i < c.agent_seeds; ++i) {
    const auto run = trainer::run_cloning_baseline(bench, c.agent, agent_seed(c, i));
    baseline.rewards.push_back(run.eval.mean_reward);
    baseline.depths.push_back(run.eval.mean_depth);
    print_summary(log, "behavior_cloning seed " + std::to_string(agent_seed(c, i)), run.eval);
  }

  const double full = trainer::median(results.front().rewards);
  auto row = [&](const Result& r) {
    const double m = trainer::median(r.rewards);
    const double delta = full != 0.0 ? 100.0 * (m - full) / std::fabs(full) : 0.0;
    return r.name + "," + std::to_string(r.rewards.size()) + "," + num(m) + "," +
           num(mean_of(r.rewards)) + "," + num(trainer::median(r.depths)) + "," +
           num(delta) + "\n";
  };
  const std::string header =
      "variant,seeds,median_total_reward,mean_total_reward,median_depth,delta_pct\n";
  std::string csv = header;
  for (const auto& r : results) csv += row(r);
  const fs::path out = c.out / files::kAblation, base = c.out / files::kBaseline;
  write_file(out, csv);
  write_file(base, header + row(results.front()) + row(baseline));
  return {out, base};
}

int exit_code_for(const std::exception& error) {
  if (dynamic_cast<const ConfigError*>(&error) || dynamic_cast<const ContractError*>(&error)) {
    return kExitConfig;
  }
  if (dynamic_cast<const NumericError*>(&error) || dynamic_cast<const TrainingError*>(&error)) {
    return kExitNumeric;
  }
  if (dynamic_cast<const DataError*>(&error) || dynamic_cast<const FormatError*>(&error) ||
      dynamic_cast<const LookupError*>(&error) ||
      dynamic_cast<const DimensionError*>(&error)) {
    return kExitData;
  }
  return kExitFailure;
}

namespace {

void write_manifest(const fs::path& path, const nlohmann::ordered_json& doc) {
  write_file(path, doc.dump(2) + "\n");
}

}  // namespace

int run_command(const CommandLine& line, std::ostream& log, std::ostream& err) {
  RunConfig config;
  try {
    config = resolve_config(line);
    if (line.command == "sweep") sweep_grid(line.axis);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }

  const auto started = std::chrono::steady_clock::now();
  nlohmann::ordered_json manifest;
  manifest["command"] = line.command;
  manifest["version"] = kVersion;
  manifest["status"] = "running";
  manifest["started_unix"] = static_cast<std::int64_t>(std::time(nullptr));
  manifest["seeds"] = {{"tokenizer", config.seeds.tokenizer},
                       {"simulator", config.seeds.simulator},
                       {"agent", config.seeds.agent}};
  manifest["config"] = render_config(config);
  manifest["outputs"] = nlohmann::ordered_json::array();
  const fs::path manifest_path = config.out / ("manifest-" + line.command + ".json");

  int code = kExitOk;
  std::vector<fs::path> outputs;
  try {
    fs::create_directories(config.out);
    write_manifest(manifest_path, manifest);
    const std::string& cmd = line.command;
    if (cmd == "gen-data") outputs = cmd_gen_data(config, log);
    else if (cmd == "tokenize") outputs = cmd_tokenize(config, log);
    else if (cmd == "fit-sim") outputs = cmd_fit_sim(config, log);
    else if (cmd == "train") outputs = cmd_train(config, log);
    else if (cmd == "eval")
      outputs = cmd_eval(config, line.checkpoint.value_or(config.out / files::kCheckpoint),
                         line.episodes, log);
    else if (cmd == "sweep") outputs = cmd_sweep(config, line.axis, log);
    else if (cmd == "ablate") outputs = cmd_ablate(config, log);
    else throw ConfigError("unknown command '" + cmd + "'");
    manifest["status"] = "complete";
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    code = exit_code_for(e);
    manifest["status"] = "failed";
    manifest["error"] = e.what();
  }
  for (const auto& p : outputs) manifest["outputs"].push_back(p.string());
  manifest["exit_code"] = code;
  manifest["wall_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  try {
    write_manifest(manifest_path, manifest);
  } catch (const std::exception& e) {
    err << "error: cannot finalize manifest: " << e.what() << "\n";
    if (code == kExitOk) code = kExitData;
  }
  return code;
}

}  // namespace hsrl::cli
