#pragma once

// Pipeline commands behind the `hsrl` executable. Each cmd_* function does the
// work and writes its files into config.out; run_command adds the run
// manifest and maps failures to exit codes.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "hsrl/cli/config.hpp"
#include "hsrl/trainer/experiment.hpp"

namespace hsrl::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

inline constexpr const char* kVersion = "hsrl 0.1.0";

// File names inside the output directory.
namespace files {
inline constexpr const char* kEmbeddings = "embeddings.txt";
inline constexpr const char* kRecords = "records.tsv";
inline constexpr const char* kCodebook = "codebook.bin";
inline constexpr const char* kTokenizeReport = "tokenize.csv";
inline constexpr const char* kSimTrain = "sim_train.bin";
inline constexpr const char* kSimEval = "sim_eval.bin";
inline constexpr const char* kSimReport = "simulator.csv";
inline constexpr const char* kCheckpoint = "checkpoint.bin";
inline constexpr const char* kMetrics = "metrics.csv";
inline constexpr const char* kEval = "eval.csv";
inline constexpr const char* kAblation = "ablation.csv";
inline constexpr const char* kBaseline = "baseline.csv";
}  // namespace files

struct CommandLine {
  std::string command;
  std::optional<std::filesystem::path> config;
  std::optional<std::uint64_t> seed_agent;
  std::optional<std::uint64_t> seed_sim;
  std::optional<std::uint64_t> seed_tok;
  std::optional<std::filesystem::path> out;
  std::string axis;                                  // sweep
  std::optional<std::filesystem::path> checkpoint;   // eval
  std::optional<std::size_t> episodes;               // eval
};

// Config file (if any) with the flag overrides applied, validated.
RunConfig resolve_config(const CommandLine& line);

struct LoadedData {
  std::vector<tokenizer::ItemEmbedding> embeddings;
  std::vector<env::LogRecord> records;
};

LoadedData load_data(const RunConfig& config);

std::vector<std::filesystem::path> cmd_gen_data(const RunConfig& config, std::ostream& log);
std::vector<std::filesystem::path> cmd_tokenize(const RunConfig& config, std::ostream& log);
std::vector<std::filesystem::path> cmd_fit_sim(const RunConfig& config, std::ostream& log);
std::vector<std::filesystem::path> cmd_train(const RunConfig& config, std::ostream& log);
std::vector<std::filesystem::path> cmd_eval(const RunConfig& config,
                                            const std::filesystem::path& checkpoint,
                                            std::optional<std::size_t> episodes,
                                            std::ostream& log);
std::vector<std::filesystem::path> cmd_sweep(const RunConfig& config,
                                             const std::string& axis, std::ostream& log);
std::vector<std::filesystem::path> cmd_ablate(const RunConfig& config, std::ostream& log);

// Grid of a sweep axis: entropy, vocab or levels. Throws ConfigError
// otherwise.
std::vector<double> sweep_grid(const std::string& axis);

// Exit code for an exception escaping a command.
int exit_code_for(const std::exception& error);

// Runs one command end to end and returns the process exit code.
int run_command(const CommandLine& line, std::ostream& log, std::ostream& err);

}  // namespace hsrl::cli
