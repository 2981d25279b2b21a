#include "hsrl/cli/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string_view>
#include <vector>

#include "hsrl/numerics/errors.hpp"

namespace hsrl::cli {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_value(const std::string& key, const std::string& text) {
  T value{};
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (text.empty() || ec != std::errc() || p != text.data() + text.size()) {
    throw ConfigError("invalid value '" + text + "' for " + key);
  }
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError("invalid boolean '" + text + "' for " + key);
}

std::string render_double(double x) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, end);
}

struct Field {
  std::string name;  // section.key
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

Field size_field(std::string name, std::size_t& ref) {
  return {name, [&ref, name](const std::string& v) { ref = parse_value<std::size_t>(name, v); },
          [&ref] { return std::to_string(ref); }};
}

Field u64_field(std::string name, std::uint64_t& ref) {
  return {name,
          [&ref, name](const std::string& v) { ref = parse_value<std::uint64_t>(name, v); },
          [&ref] { return std::to_string(ref); }};
}

Field double_field(std::string name, double& ref) {
  return {name, [&ref, name](const std::string& v) { ref = parse_value<double>(name, v); },
          [&ref] { return render_double(ref); }};
}

Field bool_field(std::string name, bool& ref) {
  return {name, [&ref, name](const std::string& v) { ref = parse_bool(name, v); },
          [&ref] { return std::string(ref ? "true" : "false"); }};
}

Field path_field(std::string name, std::filesystem::path& ref) {
  return {name, [&ref](const std::string& v) { ref = v; },
          [&ref] { return ref.string(); }};
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) out.push_back(parse_value<std::size_t>(key, trim(part)));
  if (out.empty()) throw ConfigError("empty list for " + key);
  return out;
}

std::vector<Field> fields_of(RunConfig& c) {
  auto& syn = c.synthetic;
  auto& sim = c.simulator;
  auto& ag = c.agent;
  auto& tr = c.agent.train;
  std::vector<Field> f;
  f.push_back({"data.source",
               [&c](const std::string& v) {
                 if (v == "synthetic") c.source = DataSource::kSynthetic;
                 else if (v == "records") c.source = DataSource::kRecords;
                 else if (v == "ratings") c.source = DataSource::kRatings;
                 else throw ConfigError("data.source must be synthetic, records or ratings");
               },
               [&c] { return source_name(c.source); }});
  f.push_back(path_field("data.embeddings", c.embeddings_path));
  f.push_back(path_field("data.records", c.records_path));
  f.push_back(path_field("data.ratings", c.ratings_path));
  f.push_back(size_field("data.num_items", syn.num_items));
  f.push_back(size_field("data.clusters", syn.clusters));
  f.push_back(size_field("data.dim", syn.dim));
  f.push_back(size_field("data.users", syn.users));
  f.push_back(size_field("data.records_per_user", syn.records_per_user));
  f.push_back(double_field("data.separation", syn.separation));
  f.push_back(double_field("data.spread", syn.spread));
  f.push_back(double_field("data.p_preferred", syn.p_preferred));
  f.push_back(double_field("data.p_other", syn.p_other));
  f.push_back(double_field("data.popularity_skew", syn.popularity_skew));

  f.push_back({"tokenizer.vocab_sizes",
               [&c](const std::string& v) {
                 c.tokenizer.vocab_sizes = parse_list("tokenizer.vocab_sizes", v);
               },
               [&c] {
                 std::string s;
                 for (std::size_t i = 0; i < c.tokenizer.vocab_sizes.size(); ++i) {
                   if (i) s += ',';
                   s += std::to_string(c.tokenizer.vocab_sizes[i]);
                 }
                 return s;
               }});
  f.push_back(size_field("tokenizer.kmeans_iterations", c.tokenizer.kmeans.max_iterations));
  f.push_back(double_field("tokenizer.kmeans_tolerance", c.tokenizer.kmeans.tolerance));

  f.push_back(size_field("simulator.width", sim.model.width));
  f.push_back(size_field("simulator.window", sim.model.window));
  f.push_back(size_field("simulator.epochs", sim.model.epochs));
  f.push_back(size_field("simulator.batch_size", sim.model.batch_size));
  f.push_back(double_field("simulator.learning_rate", sim.model.learning_rate));
  f.push_back(double_field("simulator.train_fraction", sim.train_fraction));
  f.push_back(bool_field("simulator.content_init", sim.content_init));
  f.push_back(size_field("simulator.slate_size", sim.env.slate_size));
  f.push_back(size_field("simulator.patience", sim.env.patience));
  f.push_back(size_field("simulator.horizon", sim.env.horizon));
  f.push_back(size_field("simulator.history_window", sim.env.history_window));

  f.push_back(size_field("agent.d_model", ag.d_model));
  f.push_back(size_field("agent.history_window", ag.history_window));
  f.push_back(size_field("agent.critic_hidden", ag.critic_hidden));
  f.push_back(bool_field("agent.per_level_heads", ag.per_level_heads));
  f.push_back(bool_field("agent.init_from_codebook", ag.init_from_codebook));
  f.push_back(double_field("agent.gamma", tr.gamma));
  f.push_back(double_field("agent.lambda_entropy", tr.lambda_entropy));
  f.push_back(double_field("agent.lambda_bc", tr.lambda_bc));
  f.push_back(size_field("agent.bc_logged_per_step", tr.bc_logged_per_step));
  f.push_back(double_field("agent.advantage_clip", tr.advantage_clip));
  f.push_back(size_field("agent.horizon", tr.horizon));
  f.push_back(size_field("agent.batch_size", tr.batch_size));
  f.push_back(size_field("agent.iterations", tr.iterations));
  f.push_back(double_field("agent.learning_rate", tr.optimizer.learning_rate));
  f.push_back({"agent.target_mode",
               [&tr](const std::string& v) {
                 if (v == "soft") tr.target.mode = mlc::TargetSyncMode::kSoft;
                 else if (v == "hard") tr.target.mode = mlc::TargetSyncMode::kHard;
                 else throw ConfigError("agent.target_mode must be soft or hard");
               },
               [&tr] {
                 return std::string(tr.target.mode == mlc::TargetSyncMode::kSoft ? "soft"
                                                                                 : "hard");
               }});
  f.push_back(double_field("agent.target_tau", tr.target.tau));
  f.push_back(size_field("agent.target_period", tr.target.period));
  f.push_back(bool_field("agent.detach_critic_encoder", tr.detach_critic_encoder));
  f.push_back(size_field("agent.eval_every", tr.eval_every));
  f.push_back(size_field("agent.eval_episodes", tr.eval_episodes));
  f.push_back({"agent.variant", [&c](const std::string& v) { c.variant = v; },
               [&c] { return c.variant; }});
  f.push_back(size_field("agent.seeds", c.agent_seeds));
  f.push_back(size_field("agent.cloner_epochs", ag.cloner.epochs));
  f.push_back(size_field("agent.cloner_batch_size", ag.cloner.batch_size));
  f.push_back(double_field("agent.cloner_learning_rate", ag.cloner.learning_rate));

  f.push_back(u64_field("seeds.tokenizer", c.seeds.tokenizer));
  f.push_back(u64_field("seeds.simulator", c.seeds.simulator));
  f.push_back(u64_field("seeds.agent", c.seeds.agent));

  f.push_back(path_field("output.dir", c.out));
  return f;
}

}  // namespace

std::string source_name(DataSource source) {
  switch (source) {
    case DataSource::kSynthetic: return "synthetic";
    case DataSource::kRecords: return "records";
    case DataSource::kRatings: return "ratings";
  }
  return "synthetic";
}

RunConfig default_config() {
  RunConfig c;
  c.synthetic.users = 800;
  c.synthetic.records_per_user = 15;
  c.synthetic.slate_size = 5;
  c.simulator.model.epochs = 3;
  c.simulator.env.slate_size = 5;
  c.agent.init_from_codebook = true;
  c.agent.train.iterations = 20000;
  c.agent.train.eval_every = 2000;
  c.agent.train.eval_episodes = 100;
  return c;
}

void RunConfig::validate() const {
  agent.train.validate();
  if (tokenizer.vocab_sizes.empty()) throw ConfigError("tokenizer.vocab_sizes is empty");
  for (std::size_t t : tokenizer.vocab_sizes) {
    if (t == 0) throw ConfigError("vocabulary sizes must be positive");
  }
  if (!(simulator.train_fraction > 0.0 && simulator.train_fraction <= 1.0)) {
    throw ConfigError("simulator.train_fraction must lie in (0, 1]");
  }
  if (simulator.env.horizon == 0 || simulator.env.patience == 0 ||
      simulator.env.slate_size == 0) {
    throw ConfigError("horizon, patience and slate size must be positive");
  }
  if (agent.d_model < 2) throw ConfigError("agent.d_model must be >= 2");
  if (agent.critic_hidden == 0) throw ConfigError("agent.critic_hidden must be >= 1");
  if (agent_seeds == 0) throw ConfigError("agent.seeds must be >= 1");
  if (source != DataSource::kSynthetic && embeddings_path.empty()) {
    throw ConfigError("data.embeddings is required for " + source_name(source) + " data");
  }
  if (source == DataSource::kRecords && records_path.empty()) {
    throw ConfigError("data.records is required for records data");
  }
  if (source == DataSource::kRatings && ratings_path.empty()) {
    throw ConfigError("data.ratings is required for ratings data");
  }
  trainer::parse_variant(variant);
}

RunConfig parse_config(const std::string& text, RunConfig base) {
  RunConfig c = std::move(base);
  auto fields = fields_of(c);
  std::map<std::string, Field*> by_name;
  std::set<std::string> sections;
  for (auto& f : fields) {
    by_name[f.name] = &f;
    sections.insert(f.name.substr(0, f.name.find('.')));
  }
  std::istringstream in(text);
  std::string line;
  std::string section;
  std::size_t line_no = 0;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const std::string where = "config line " + std::to_string(line_no) + ": ";
    if (t.front() == '[') {
      if (t.back() != ']') throw ConfigError(where + "malformed section header");
      section = trim(std::string_view(t).substr(1, t.size() - 2));
      if (!sections.count(section)) throw ConfigError(where + "unknown section [" + section + "]");
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    if (section.empty()) throw ConfigError(where + "key outside of a section");
    const std::string key = section + "." + trim(std::string_view(t).substr(0, eq));
    const std::string value = trim(std::string_view(t).substr(eq + 1));
    auto it = by_name.find(key);
    if (it == by_name.end()) throw ConfigError(where + "unknown key " + key);
    if (!seen.insert(key).second) throw ConfigError(where + "duplicate key " + key);
    try {
      it->second->set(value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  return c;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

std::string render_config(const RunConfig& config) {
  RunConfig copy = config;
  auto fields = fields_of(copy);
  std::string out;
  std::string section;
  for (const auto& f : fields) {
    const auto dot = f.name.find('.');
    const std::string s = f.name.substr(0, dot);
    if (s != section) {
      if (!section.empty()) out += '\n';
      out += "[" + s + "]\n";
      section = s;
    }
    out += f.name.substr(dot + 1) + " = " + f.get() + "\n";
  }
  return out;
}

}  // namespace hsrl::cli
