#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hsrl/cli/commands.hpp"
#include "hsrl/cli/config.hpp"
#include "hsrl/numerics/errors.hpp"
#include "json.hpp"

using namespace hsrl;
using namespace hsrl::cli;
namespace fs = std::filesystem;

namespace {

const char* kTiny = R"(# small enough for a unit test
[data]
num_items = 60
clusters = 4
dim = 6
users = 40
records_per_user = 4

[tokenizer]
vocab_sizes = 4,4

[simulator]
epochs = 1

[agent]
d_model = 8
critic_hidden = 8
batch_size = 4
iterations = 30
eval_every = 10
eval_episodes = 4
seeds = 2
cloner_epochs = 1
)";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines_of(const fs::path& p) {
  std::vector<std::string> out;
  std::ifstream in(p);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() /
            ("hsrl_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root_);
    fs::create_directories(root_);
    write_config("tiny.conf", kTiny);
  }
  void TearDown() override { fs::remove_all(root_); }

  fs::path write_config(const std::string& name, const std::string& body) {
    std::ofstream(root_ / name) << body;
    return root_ / name;
  }

  int run(const std::string& command, const std::string& out, std::string conf = "tiny.conf",
          std::optional<fs::path> checkpoint = {}, std::optional<std::size_t> episodes = {},
          std::string axis = {}) {
    CommandLine line;
    line.command = command;
    line.config = root_ / conf;
    line.out = root_ / out;
    line.checkpoint = checkpoint;
    line.episodes = episodes;
    line.axis = axis;
    std::ostringstream log, err;
    const int code = run_command(line, log, err);
    last_err_ = err.str();
    return code;
  }

  fs::path root_;
  std::string last_err_;
};

}  // namespace

TEST(Config, RenderRoundTrip) {
  RunConfig c = parse_config(kTiny);
  EXPECT_EQ(c.tokenizer.vocab_sizes, (std::vector<std::size_t>{4, 4}));
  EXPECT_EQ(c.synthetic.num_items, 60u);
  const std::string text = render_config(c);
  EXPECT_EQ(render_config(parse_config(text)), text);
}

TEST(Config, RejectsUnknownAndDuplicateKeys) {
  EXPECT_THROW(parse_config("[data]\nnum_itemz = 3\n"), ConfigError);
  EXPECT_THROW(parse_config("[nowhere]\n"), ConfigError);
  EXPECT_THROW(parse_config("[data]\nusers = 3\nusers = 4\n"), ConfigError);
  EXPECT_THROW(parse_config("[agent]\ngamma = 2\n").validate(), ConfigError);
  EXPECT_THROW(parse_config("[tokenizer]\nvocab_sizes = 4,0\n").validate(), ConfigError);
}

TEST(Grids, DocumentedValues) {
  auto has = [](const std::vector<double>& g, double v) {
    return std::find(g.begin(), g.end(), v) != g.end();
  };
  EXPECT_TRUE(has(sweep_grid("entropy"), 0.1));
  EXPECT_TRUE(has(sweep_grid("vocab"), 80));
  EXPECT_TRUE(has(sweep_grid("levels"), 4));
  EXPECT_THROW(sweep_grid("depth"), ConfigError);
}

TEST(ExitCodes, ErrorFamilies) {
  EXPECT_EQ(exit_code_for(ConfigError("x")), kExitConfig);
  EXPECT_EQ(exit_code_for(ContractError("x")), kExitConfig);
  EXPECT_EQ(exit_code_for(DataError("x")), kExitData);
  EXPECT_EQ(exit_code_for(FormatError("x")), kExitData);
  EXPECT_EQ(exit_code_for(TrainingError("x")), kExitNumeric);
  EXPECT_EQ(exit_code_for(std::runtime_error("x")), kExitFailure);
}

TEST_F(Cli, TokenizeDefaultScaleIsByteStable) {
  write_config("tok.conf",
               "[data]\nnum_items = 300\nclusters = 8\n[tokenizer]\nvocab_sizes = 16,16,16\n");
  ASSERT_EQ(run("tokenize", "a", "tok.conf"), kExitOk) << last_err_;
  ASSERT_EQ(run("tokenize", "b", "tok.conf"), kExitOk) << last_err_;
  EXPECT_EQ(slurp(root_ / "a" / files::kCodebook), slurp(root_ / "b" / files::kCodebook));
  EXPECT_EQ(slurp(root_ / "a" / files::kTokenizeReport), slurp(root_ / "b" / files::kTokenizeReport));
  EXPECT_EQ(lines_of(root_ / "a" / files::kTokenizeReport).size(), 4u);
}

TEST_F(Cli, VocabularyLargerThanCatalogFails) {
  write_config("big.conf", "[data]\nnum_items = 20\nclusters = 2\n[tokenizer]\nvocab_sizes = 32\n");
  EXPECT_NE(run("tokenize", "a", "big.conf"), kExitOk);
  EXPECT_FALSE(last_err_.empty());
}

TEST_F(Cli, ZeroBudgetWritesCheckpointAndHeader) {
  std::string body = kTiny;
  body.replace(body.find("iterations = 30"), 15, "iterations = 0");
  write_config("zero.conf", body);
  ASSERT_EQ(run("train", "z", "zero.conf"), kExitOk) << last_err_;
  EXPECT_TRUE(fs::exists(root_ / "z" / files::kCheckpoint));
  EXPECT_EQ(lines_of(root_ / "z" / files::kMetrics).size(), 1u);
}

TEST_F(Cli, TrainTwiceIdenticalThenEvalDeterministic) {
  ASSERT_EQ(run("train", "a"), kExitOk) << last_err_;
  ASSERT_EQ(run("train", "b"), kExitOk) << last_err_;
  const auto metrics = slurp(root_ / "a" / files::kMetrics);
  EXPECT_EQ(metrics, slurp(root_ / "b" / files::kMetrics));
  EXPECT_EQ(lines_of(root_ / "a" / files::kMetrics).size(), 4u);
  EXPECT_EQ(slurp(root_ / "a" / files::kCheckpoint), slurp(root_ / "b" / files::kCheckpoint));

  const auto ckpt = root_ / "a" / files::kCheckpoint;
  ASSERT_EQ(run("eval", "a", "tiny.conf", ckpt, 1), kExitOk) << last_err_;
  const auto first = slurp(root_ / "a" / files::kEval);
  ASSERT_EQ(run("eval", "a", "tiny.conf", ckpt, 1), kExitOk) << last_err_;
  EXPECT_EQ(slurp(root_ / "a" / files::kEval), first);
  EXPECT_EQ(lines_of(root_ / "a" / files::kEval).size(), 2u);

  std::string body = kTiny;
  body.replace(body.find("vocab_sizes = 4,4"), 17, "vocab_sizes = 4,4,4");
  write_config("three.conf", body);
  EXPECT_NE(run("eval", "c", "three.conf", ckpt, 1), kExitOk);
}

TEST_F(Cli, AblationRowsAndFullDeltaZero) {
  ASSERT_EQ(run("ablate", "ab"), kExitOk) << last_err_;
  auto rows = lines_of(root_ / "ab" / files::kAblation);
  ASSERT_EQ(rows.size(), 6u);
  EXPECT_EQ(rows[0], "variant,seeds,median_total_reward,mean_total_reward,median_depth,delta_pct");
  bool saw_full = false;
  for (const auto& r : rows) {
    if (r.rfind("full,", 0) == 0) {
      saw_full = true;
      EXPECT_EQ(r.substr(r.rfind(',') + 1), "0");
    }
  }
  EXPECT_TRUE(saw_full);
  EXPECT_EQ(lines_of(root_ / "ab" / files::kBaseline).size(), 3u);
}

TEST_F(Cli, SweepAxisAndUnknownAxis) {
  ASSERT_EQ(run("sweep", "sw", "tiny.conf", {}, {}, "entropy"), kExitOk) << last_err_;
  // one row per grid point and agent seed
  EXPECT_EQ(lines_of(root_ / "sw" / "sweep_entropy.csv").size(), 1u + 4u * 2u);
  EXPECT_EQ(run("sweep", "sw2", "tiny.conf", {}, {}, "depth"), kExitConfig);
}

TEST_F(Cli, ManifestFinalized) {
  ASSERT_EQ(run("gen-data", "g"), kExitOk) << last_err_;
  auto m = nlohmann::json::parse(slurp(root_ / "g" / "manifest-gen-data.json"));
  EXPECT_EQ(m["status"], "complete");
  EXPECT_EQ(m["exit_code"], 0);
  EXPECT_EQ(m["version"], kVersion);
  EXPECT_TRUE(m["outputs"].is_array());
  EXPECT_TRUE(fs::exists(root_ / "g" / files::kRecords));

  EXPECT_EQ(run("eval", "g", "tiny.conf", root_ / "missing.bin", 1), kExitData);
  auto f = nlohmann::json::parse(slurp(root_ / "g" / "manifest-eval.json"));
  EXPECT_EQ(f["status"], "failed");
  EXPECT_EQ(f["exit_code"], kExitData);
}

TEST_F(Cli, ExecutableExitCodes) {
  const std::string exe = HSRL_CLI_PATH;
  auto code = [&](const std::string& args) {
    const int raw = std::system((exe + " " + args + " > /dev/null 2>&1").c_str());
    return WEXITSTATUS(raw);
  };
  EXPECT_EQ(code("--version"), 0);
  EXPECT_EQ(code("--no-such-flag"), kExitConfig);
  const std::string conf = (root_ / "tiny.conf").string();
  EXPECT_EQ(code("sweep --axis depth --config " + conf + " --out " + (root_ / "x").string()),
            kExitConfig);
  EXPECT_EQ(code("tokenize --config " + conf + " --out " + (root_ / "t").string()), 0);
}
