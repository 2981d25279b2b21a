#include <iostream>

#include "CLI11.hpp"
#include "hsrl/cli/commands.hpp"

int main(int argc, char** argv) {
  using namespace hsrl::cli;
  CLI::App app{"Hierarchical semantic RL recommendation lab"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  CommandLine line;
  std::string config, out, checkpoint;
  std::uint64_t seed_agent = 0, seed_sim = 0, seed_tok = 0;
  std::size_t episodes = 0;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config, "Run configuration file");
    sub->add_option("--seed-agent", seed_agent, "Agent seed");
    sub->add_option("--seed-sim", seed_sim, "Simulator and synthetic data seed");
    sub->add_option("--seed-tok", seed_tok, "Tokenizer seed");
    sub->add_option("--out", out, "Output directory");
  };
  const std::pair<const char*, const char*> plain[] = {
      {"gen-data", "Write the synthetic catalog and logged sessions"},
      {"tokenize", "Fit the semantic-ID codebook"},
      {"fit-sim", "Fit the training and evaluation user simulators"},
      {"train", "Train one agent variant"},
      {"ablate", "Train every variant and the cloning baseline"}};
  for (const auto& [name, about] : plain) common(app.add_subcommand(name, about));
  auto* eval = app.add_subcommand("eval", "Greedy evaluation of a checkpoint");
  common(eval);
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file (default <out>/checkpoint.bin)");
  eval->add_option("--episodes", episodes, "Number of evaluation episodes");
  auto* sweep = app.add_subcommand("sweep", "Train across one axis of a grid");
  common(sweep);
  sweep->add_option("--axis", line.axis, "entropy, vocab or levels")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  CLI::App* sub = app.get_subcommands().front();
  line.command = sub->get_name();
  if (sub->count("--config")) line.config = config;
  if (sub->count("--out")) line.out = out;
  if (sub->count("--seed-agent")) line.seed_agent = seed_agent;
  if (sub->count("--seed-sim")) line.seed_sim = seed_sim;
  if (sub->count("--seed-tok")) line.seed_tok = seed_tok;
  if (line.command == "eval") {
    if (sub->count("--checkpoint")) line.checkpoint = checkpoint;
    if (sub->count("--episodes")) line.episodes = episodes;
  }
  return run_command(line, std::cout, std::cerr);
}
