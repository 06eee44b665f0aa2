// rsdbpf: generate datasets, train the learned filters, evaluate all filters.
//
//   rsdbpf generate  --config run.json
//   rsdbpf train     --config run.json [--filters dbpf,rs-dbpf] [--eta 0.05|grid]
//   rsdbpf evaluate  --config run.json [--filters ...] [--particles N]
//   rsdbpf reproduce --config run.json --dynamics polya
//
// Flags override the config file, which overrides the built-in defaults.
// Failures print one JSON object on stderr and exit nonzero.

#include <algorithm>
#include <cstdint>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "rsdbpf/experiment.hpp"

namespace {

struct Flags {
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
  std::string filters;
  int particles = 0;
  std::string eta;
  std::string dynamics;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "JSON run configuration")->required();
  cmd->add_option("--seed", f.seed, "master seed");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--filters", f.filters, "comma-separated subset of mm-pf,dbpf,rs-dbpf,rs-pf");
  cmd->add_option("--particles", f.particles, "evaluation particle count")->check(CLI::PositiveNumber);
  cmd->add_option("--eta", f.eta, "learning rate, or 'grid' for the configured grid");
  cmd->add_option("--dynamics", f.dynamics, "markov or polya");
}

rsdbpf::RunConfig resolve(const CLI::App* cmd, const Flags& f) {
  rsdbpf::RunConfig cfg = rsdbpf::load_run_config(f.config);
  rsdbpf::Overrides o;
  if (cmd->count("--seed")) o.seed = f.seed;
  if (cmd->count("--out")) o.out_dir = f.out;
  if (cmd->count("--filters")) o.filters = f.filters;
  if (cmd->count("--particles")) o.particles = f.particles;
  if (cmd->count("--eta")) o.eta = f.eta;
  if (cmd->count("--dynamics")) o.dynamics = f.dynamics;
  rsdbpf::apply_overrides(cfg, o);
  return cfg;
}

int fail(const char* kind, const std::string& message, const std::string& field = "") {
  nlohmann::ordered_json err;
  err["error"] = kind;
  if (!field.empty()) err["field"] = field;
  err["message"] = message;
  std::cerr << err.dump() << std::endl;
  return kind == std::string("usage") || kind == std::string("config") ? 2 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Regime-switching differentiable particle filters"};
  app.require_subcommand(1);
  Flags flags;
  auto* generate = app.add_subcommand("generate", "simulate the dataset");
  auto* train = app.add_subcommand("train", "train dbpf and/or rs-dbpf over the learning-rate grid");
  auto* evaluate = app.add_subcommand("evaluate", "run the filters on the test split and write the tables");
  auto* reproduce = app.add_subcommand("reproduce", "generate, train and evaluate in one go");
  for (auto* cmd : {generate, train, evaluate, reproduce}) add_common(cmd, flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what());
  }

  try {
    if (generate->parsed()) {
      rsdbpf::cmd_generate(resolve(generate, flags), std::cout);
    } else if (train->parsed()) {
      const auto cfg = resolve(train, flags);
      bool any = false;
      for (auto kind : {rsdbpf::FilterKind::kDbpf, rsdbpf::FilterKind::kRsDbpf}) {
        if (std::find(cfg.filters.begin(), cfg.filters.end(), kind) == cfg.filters.end()) continue;
        rsdbpf::cmd_train(cfg, rsdbpf::parse_learned_filter(rsdbpf::to_string(kind)), std::cout);
        any = true;
      }
      if (!any) return fail("usage", "train needs dbpf or rs-dbpf among the filters", "--filters");
    } else if (evaluate->parsed()) {
      std::cout << rsdbpf::cmd_evaluate(resolve(evaluate, flags), std::cout).to_markdown();
    } else if (reproduce->parsed()) {
      std::cout << rsdbpf::cmd_reproduce(resolve(reproduce, flags), std::cout).to_markdown();
    }
  } catch (const rsdbpf::ConfigError& e) {
    return fail("config", e.what(), e.field());
  } catch (const rsdbpf::DatasetError& e) {
    return fail("dataset", e.what());
  } catch (const std::exception& e) {
    return fail("runtime", e.what());
  }
  return 0;
}
