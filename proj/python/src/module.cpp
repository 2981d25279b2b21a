#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "hsrl/cli/commands.hpp"
#include "hsrl/env/simulator.hpp"
#include "hsrl/env/synthetic.hpp"
#include "hsrl/numerics/errors.hpp"
#include "hsrl/tokenizer/codebook.hpp"
#include "hsrl/trainer/losses.hpp"

namespace py = pybind11;
using namespace hsrl;

namespace {

py::dict record_dict(const env::LogRecord& r) {
  py::dict d;
  d["user_id"] = r.user_id;
  d["history"] = r.history;
  d["slate"] = r.slate;
  d["labels"] = std::vector<int>(r.labels.begin(), r.labels.end());
  return d;
}

std::vector<tokenizer::ItemEmbedding> embeddings_from(
    const std::vector<tokenizer::ItemId>& ids, const std::vector<std::vector<double>>& vectors) {
  if (ids.size() != vectors.size()) throw DimensionError("item ids and vectors differ in count");
  std::vector<tokenizer::ItemEmbedding> out;
  for (std::size_t i = 0; i < ids.size(); ++i) out.push_back({ids[i], vectors[i]});
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Hierarchical semantic RL recommendation lab";
  m.attr("__version__") = "0.1.0";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<ContractError>(m, "ContractError", base.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<TrainingError>(m, "TrainingError", base.ptr());
  py::register_exception<LookupError>(m, "LookupError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());

  m.def("default_config", [] { return cli::render_config(cli::default_config()); },
        "Fully resolved default configuration document.");
  m.def("resolve_config",
        [](const std::string& text) {
          auto c = cli::parse_config(text);
          c.validate();
          return cli::render_config(c);
        },
        py::arg("text"), "Parses a configuration document over the defaults and renders it.");

  m.def("generate_synthetic",
        [](std::size_t num_items, std::size_t clusters, std::size_t dim, std::size_t users,
           std::size_t records_per_user, std::size_t slate_size, std::uint64_t seed) {
          env::SyntheticConfig c;
          c.num_items = num_items;
          c.clusters = clusters;
          c.dim = dim;
          c.users = users;
          c.records_per_user = records_per_user;
          c.slate_size = slate_size;
          auto data = env::generate_synthetic(c, seed);
          std::vector<tokenizer::ItemId> ids;
          std::vector<std::vector<double>> vectors;
          for (auto& e : data.embeddings) {
            ids.push_back(e.item_id);
            vectors.push_back(e.vector);
          }
          py::list records;
          for (const auto& r : data.records) records.append(record_dict(r));
          py::dict out;
          out["item_ids"] = ids;
          out["vectors"] = vectors;
          out["records"] = records;
          out["item_cluster"] = data.item_cluster;
          return out;
        },
        py::arg("num_items") = 300, py::arg("clusters") = 8, py::arg("dim") = 16,
        py::arg("users") = 400, py::arg("records_per_user") = 12, py::arg("slate_size") = 5,
        py::arg("seed") = 0);

  m.def("fit_codebook",
        [](const std::vector<tokenizer::ItemId>& ids,
           const std::vector<std::vector<double>>& vectors,
           const std::vector<std::size_t>& vocab_sizes, std::uint64_t seed) {
          tokenizer::FitOptions opt;
          opt.vocab_sizes = vocab_sizes;
          opt.seed = seed;
          auto r = tokenizer::fit_codebook(embeddings_from(ids, vectors), opt);
          std::vector<std::vector<std::size_t>> sids;
          for (const auto& s : r.index.sids()) {
            sids.emplace_back(s.tokens.begin(), s.tokens.end());
          }
          std::vector<std::vector<std::vector<double>>> centroids;
          for (std::size_t l = 0; l < r.codebook.levels(); ++l) {
            const auto& rows = r.codebook.centroids(l);
            auto& level = centroids.emplace_back();
            for (std::size_t i = 0; i < rows.rows; ++i) {
              auto row = rows.row(i);
              level.emplace_back(row.begin(), row.end());
            }
          }
          py::dict out;
          out["item_ids"] = r.index.items();
          out["sids"] = sids;
          out["centroids"] = centroids;
          out["level_errors"] = r.level_errors;
          return out;
        },
        py::arg("item_ids"), py::arg("vectors"), py::arg("vocab_sizes"), py::arg("seed") = 0,
        "RQ-k-means codebook; SIDs are aligned with the ascending item ids.");

  m.def("reward_from_feedback",
        [](const std::vector<int>& feedback) {
          std::vector<std::uint8_t> f;
          for (int y : feedback) f.push_back(y ? 1 : 0);
          return env::reward_from_feedback(f);
        },
        py::arg("feedback"));
  m.def("td_target", &trainer::td_target, py::arg("reward"), py::arg("done"),
        py::arg("next_value"), py::arg("gamma"));
  m.def("clip_advantage", &trainer::clip_advantage, py::arg("q"), py::arg("value"),
        py::arg("bound") = 1.0);

  m.def("run",
        [](const std::string& command, std::optional<std::filesystem::path> config,
           std::optional<std::filesystem::path> out, std::optional<std::uint64_t> seed_agent,
           std::optional<std::uint64_t> seed_sim, std::optional<std::uint64_t> seed_tok,
           const std::string& axis, std::optional<std::filesystem::path> checkpoint,
           std::optional<std::size_t> episodes) {
          cli::CommandLine line;
          line.command = command;
          line.config = std::move(config);
          line.out = std::move(out);
          line.seed_agent = seed_agent;
          line.seed_sim = seed_sim;
          line.seed_tok = seed_tok;
          line.axis = axis;
          line.checkpoint = std::move(checkpoint);
          line.episodes = episodes;
          std::ostringstream log, err;
          int code;
          {
            py::gil_scoped_release release;
            code = cli::run_command(line, log, err);
          }
          return py::make_tuple(code, log.str(), err.str());
        },
        py::arg("command"), py::arg("config") = py::none(), py::arg("out") = py::none(),
        py::arg("seed_agent") = py::none(), py::arg("seed_sim") = py::none(),
        py::arg("seed_tok") = py::none(), py::arg("axis") = "",
        py::arg("checkpoint") = py::none(), py::arg("episodes") = py::none(),
        "Runs one pipeline command; returns (exit_code, log, errors).");
}
