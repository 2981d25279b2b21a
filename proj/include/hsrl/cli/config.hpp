#pragma once

// Run configuration: one declarative text document of `key = value` lines
// grouped under `[section]` headers. '#' starts a comment. Unknown sections or
// keys are rejected before any work starts.

#include <cstdint>
#include <filesystem>
#include <string>

#include "hsrl/env/synthetic.hpp"
#include "hsrl/trainer/experiment.hpp"

namespace hsrl::cli {

enum class DataSource { kSynthetic, kRecords, kRatings };

struct RunConfig {
  DataSource source = DataSource::kSynthetic;
  std::filesystem::path embeddings_path;  // required for records / ratings
  std::filesystem::path records_path;
  std::filesystem::path ratings_path;
  env::SyntheticConfig synthetic;

  trainer::TokenizerSettings tokenizer;
  trainer::SimulatorSettings simulator;
  trainer::AgentSettings agent;
  trainer::Seeds seeds;
  std::string variant = "full";
  std::size_t agent_seeds = 1;  // seeds per grid point in ablate / sweep

  std::filesystem::path out = "hsrl-out";

  // Cross-field checks; throws ConfigError.
  void validate() const;
};

// Desk-scale defaults.
RunConfig default_config();

// Applies the document on top of `base`.
RunConfig parse_config(const std::string& text, RunConfig base = default_config());
RunConfig load_config(const std::filesystem::path& path,
                      RunConfig base = default_config());

// Fully resolved document; parse_config(render_config(c)) reproduces c.
std::string render_config(const RunConfig& config);

std::string source_name(DataSource source);

}  // namespace hsrl::cli
