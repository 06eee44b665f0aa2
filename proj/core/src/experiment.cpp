#include "rsdbpf/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "rsdbpf/random.hpp"

namespace rsdbpf {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

constexpr FilterKind kAllFilters[] = {FilterKind::kMmPf, FilterKind::kDbpf, FilterKind::kRsDbpf, FilterKind::kRsPf};

std::string join_path(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

void reject_unknown(const json& obj, const std::string& prefix, std::initializer_list<const char*> known) {
  if (!obj.is_object()) throw ConfigError(prefix.empty() ? "<root>" : prefix, "expected an object");
  for (const auto& item : obj.items()) {
    const bool ok = std::any_of(known.begin(), known.end(), [&](const char* k) { return item.key() == k; });
    if (!ok) throw ConfigError(join_path(prefix, item.key()), "unknown key");
  }
}

const json* find(const json& obj, const char* key) {
  auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

void read_int(const json& obj, const std::string& prefix, const char* key, int& out) {
  const json* v = find(obj, key);
  if (v == nullptr) return;
  if (!v->is_number_integer()) throw ConfigError(join_path(prefix, key), "expected an integer");
  const auto x = v->get<long long>();
  if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
    throw ConfigError(join_path(prefix, key), "integer out of range");
  }
  out = static_cast<int>(x);
}

void read_real(const json& obj, const std::string& prefix, const char* key, double& out) {
  const json* v = find(obj, key);
  if (v == nullptr) return;
  if (!v->is_number()) throw ConfigError(join_path(prefix, key), "expected a number");
  out = v->get<double>();
}

void read_string(const json& obj, const std::string& prefix, const char* key, std::string& out) {
  const json* v = find(obj, key);
  if (v == nullptr) return;
  if (!v->is_string()) throw ConfigError(join_path(prefix, key), "expected a string");
  out = v->get<std::string>();
}

template <class F>
auto parse_field(const std::string& field, const std::string& text, F&& parse) {
  try {
    return parse(text);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(field, e.what());
  }
}

std::string eta_tag(double eta) { return "eta_" + format_double(eta); }

void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::string epoch_name(int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%03d.json", epoch);
  return buf;
}

Dataset load_matching_dataset(const RunConfig& cfg) {
  const auto path = cfg.resolved_dataset_path();
  if (!std::filesystem::exists(path)) throw std::runtime_error("dataset not found: " + path.string());
  Dataset dataset = load_dataset(path);
  if (dataset.suite.dynamics.kind() != cfg.dynamics) {
    throw std::runtime_error("dataset " + path.string() + " uses " + std::string(to_string(dataset.suite.dynamics.kind())) +
                             " dynamics but the config asks for " + std::string(to_string(cfg.dynamics)));
  }
  return dataset;
}

LearnedFilter as_learned(FilterKind kind) {
  return kind == FilterKind::kDbpf ? LearnedFilter::kDbpf : LearnedFilter::kRsDbpf;
}

bool is_learned(FilterKind kind) { return kind == FilterKind::kDbpf || kind == FilterKind::kRsDbpf; }

}  // namespace

std::string_view to_string(FilterKind kind) {
  switch (kind) {
    case FilterKind::kMmPf:
      return "mm-pf";
    case FilterKind::kDbpf:
      return "dbpf";
    case FilterKind::kRsDbpf:
      return "rs-dbpf";
    case FilterKind::kRsPf:
      return "rs-pf";
  }
  return "?";
}

FilterKind parse_filter_kind(std::string_view name) {
  for (FilterKind k : kAllFilters) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unknown filter '" + std::string(name) + "' (expected mm-pf, dbpf, rs-dbpf or rs-pf)");
}

std::string_view table_label(FilterKind kind) {
  switch (kind) {
    case FilterKind::kMmPf:
      return "MM-PF (baseline)";
    case FilterKind::kDbpf:
      return "DBPF (baseline)";
    case FilterKind::kRsDbpf:
      return "RS-DBPF (proposed)";
    case FilterKind::kRsPf:
      return "RS-PF (oracle)";
  }
  return "?";
}

std::vector<FilterKind> parse_filter_list(std::string_view list) {
  std::vector<FilterKind> out;
  std::size_t start = 0;
  while (start <= list.size()) {
    const std::size_t comma = std::min(list.find(',', start), list.size());
    std::string_view item = list.substr(start, comma - start);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    const FilterKind kind = parse_filter_kind(item);
    if (std::find(out.begin(), out.end(), kind) != out.end()) {
      throw std::invalid_argument("filter '" + std::string(item) + "' listed twice");
    }
    out.push_back(kind);
    start = comma + 1;
  }
  return out;
}

ConfigError::ConfigError(std::string field, const std::string& message)
    : std::runtime_error(field + ": " + message), field_(std::move(field)) {}

// ---- RunConfig ----------------------------------------------------------------

std::filesystem::path RunConfig::resolved_dataset_path() const {
  return dataset_path.empty() ? out_dir / "dataset.jsonl" : dataset_path;
}

std::filesystem::path RunConfig::checkpoint_path(LearnedFilter kind) const {
  return out_dir / "checkpoints" / (std::string(to_string(kind)) + ".json");
}

TrainConfig RunConfig::train_config(double eta) const {
  TrainConfig t = train;
  t.learning_rate = eta;
  t.seed = seed;
  t.ess_fraction = ess_fraction;
  t.regime_proposal = regime_proposal;
  return t;
}

FilterConfig RunConfig::eval_filter_config() const {
  return FilterConfig::with_particles(eval_particles, ess_fraction, regime_proposal);
}

void RunConfig::validate() const {
  try {
    counts.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("dataset", e.what());
  }
  if (out_dir.empty()) throw ConfigError("out_dir", "must not be empty");
  if (eval_particles < 1) throw ConfigError("filter.eval_particles", "must be >= 1");
  if (!(ess_fraction > 0.0 && ess_fraction <= 1.0)) throw ConfigError("filter.ess_fraction", "must be in (0, 1]");
  if (regime_proposal == RegimeProposal::kDeterministic && eval_particles % 8 != 0) {
    throw ConfigError("filter.eval_particles", "deterministic proposal needs a multiple of the regime count");
  }
  if (eta_grid.empty()) throw ConfigError("train.eta_grid", "must not be empty");
  for (double eta : eta_grid) {
    if (!(eta >= 0.0) || !std::isfinite(eta)) throw ConfigError("train.eta_grid", "entries must be finite and >= 0");
  }
  if (!(train.momentum >= 0.0 && train.momentum < 1.0)) throw ConfigError("train.momentum", "must be in [0, 1)");
  if (train.lr_halving_period < 1) throw ConfigError("train.lr_halving_period", "must be >= 1");
  if (train.epochs < 1) throw ConfigError("train.epochs", "must be >= 1");
  if (train.batch_size < 1) throw ConfigError("train.batch_size", "must be >= 1");
  if (train.batch_size > counts.train) throw ConfigError("train.batch_size", "exceeds the training split size");
  if (train.train_particles < 1) throw ConfigError("train.train_particles", "must be >= 1");
  if (!(train.clip_norm >= 0.0)) throw ConfigError("train.clip_norm", "must be >= 0");
  if (filters.empty()) throw ConfigError("filters", "must not be empty");
}

RunConfig parse_run_config(std::string_view json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError("<root>", std::string("invalid JSON: ") + e.what());
  }
  reject_unknown(root, "", {"dynamics", "seed", "out_dir", "dataset", "filter", "train", "filters"});
  RunConfig cfg;

  std::string text;
  read_string(root, "", "dynamics", text);
  if (!text.empty()) cfg.dynamics = parse_field("dynamics", text, parse_dynamics);

  if (const json* v = find(root, "seed")) {
    if (!v->is_number_unsigned()) throw ConfigError("seed", "expected a non-negative integer");
    cfg.seed = v->get<std::uint64_t>();
  }
  std::string out = cfg.out_dir.string();
  read_string(root, "", "out_dir", out);
  cfg.out_dir = out;

  if (const json* d = find(root, "dataset")) {
    reject_unknown(*d, "dataset", {"path", "train", "val", "test"});
    std::string path;
    read_string(*d, "dataset", "path", path);
    cfg.dataset_path = path;
    read_int(*d, "dataset", "train", cfg.counts.train);
    read_int(*d, "dataset", "val", cfg.counts.val);
    read_int(*d, "dataset", "test", cfg.counts.test);
    if (cfg.counts.train < 1) throw ConfigError("dataset.train", "must be positive");
    if (cfg.counts.val < 1) throw ConfigError("dataset.val", "must be positive");
    if (cfg.counts.test < 1) throw ConfigError("dataset.test", "must be positive");
  }

  if (const json* f = find(root, "filter")) {
    reject_unknown(*f, "filter", {"eval_particles", "ess_fraction", "regime_proposal"});
    read_int(*f, "filter", "eval_particles", cfg.eval_particles);
    read_real(*f, "filter", "ess_fraction", cfg.ess_fraction);
    std::string proposal;
    read_string(*f, "filter", "regime_proposal", proposal);
    if (!proposal.empty()) cfg.regime_proposal = parse_field("filter.regime_proposal", proposal, parse_regime_proposal);
  }

  if (const json* t = find(root, "train")) {
    reject_unknown(*t, "train",
                   {"eta_grid", "momentum", "lr_halving_period", "epochs", "batch_size", "train_particles", "clip_norm"});
    if (const json* g = find(*t, "eta_grid")) {
      if (!g->is_array()) throw ConfigError("train.eta_grid", "expected an array of numbers");
      cfg.eta_grid.clear();
      for (std::size_t i = 0; i < g->size(); ++i) {
        if (!(*g)[i].is_number()) throw ConfigError("train.eta_grid[" + std::to_string(i) + "]", "expected a number");
        cfg.eta_grid.push_back((*g)[i].get<double>());
      }
    }
    read_real(*t, "train", "momentum", cfg.train.momentum);
    read_int(*t, "train", "lr_halving_period", cfg.train.lr_halving_period);
    read_int(*t, "train", "epochs", cfg.train.epochs);
    read_int(*t, "train", "batch_size", cfg.train.batch_size);
    read_int(*t, "train", "train_particles", cfg.train.train_particles);
    read_real(*t, "train", "clip_norm", cfg.train.clip_norm);
  }

  if (const json* fl = find(root, "filters")) {
    if (!fl->is_array()) throw ConfigError("filters", "expected an array of filter names");
    std::string joined;
    for (std::size_t i = 0; i < fl->size(); ++i) {
      if (!(*fl)[i].is_string()) throw ConfigError("filters[" + std::to_string(i) + "]", "expected a string");
      joined += (i ? "," : "") + (*fl)[i].get<std::string>();
    }
    cfg.filters = parse_field("filters", joined, parse_filter_list);
  }

  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("--config", "cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_run_config(buffer.str());
}

std::string run_config_to_json(const RunConfig& cfg) {
  ordered_json doc;
  doc["dynamics"] = to_string(cfg.dynamics);
  doc["seed"] = cfg.seed;
  doc["out_dir"] = cfg.out_dir.string();
  doc["dataset"] = {{"path", cfg.dataset_path.string()},
                    {"train", cfg.counts.train},
                    {"val", cfg.counts.val},
                    {"test", cfg.counts.test}};
  doc["filter"] = {{"eval_particles", cfg.eval_particles},
                   {"ess_fraction", cfg.ess_fraction},
                   {"regime_proposal", to_string(cfg.regime_proposal)}};
  doc["train"] = {{"eta_grid", cfg.eta_grid},
                  {"momentum", cfg.train.momentum},
                  {"lr_halving_period", cfg.train.lr_halving_period},
                  {"epochs", cfg.train.epochs},
                  {"batch_size", cfg.train.batch_size},
                  {"train_particles", cfg.train.train_particles},
                  {"clip_norm", cfg.train.clip_norm}};
  auto& filters = doc["filters"] = ordered_json::array();
  for (FilterKind k : cfg.filters) filters.push_back(to_string(k));
  return doc.dump(2) + "\n";
}

void apply_overrides(RunConfig& cfg, const Overrides& o) {
  if (o.seed) cfg.seed = *o.seed;
  if (o.out_dir) cfg.out_dir = *o.out_dir;
  if (o.filters) cfg.filters = parse_field("--filters", *o.filters, parse_filter_list);
  if (o.particles) cfg.eval_particles = *o.particles;
  if (o.dynamics) cfg.dynamics = parse_field("--dynamics", *o.dynamics, parse_dynamics);
  if (o.eta && *o.eta != "grid") {
    std::size_t used = 0;
    double eta = 0.0;
    try {
      eta = std::stod(*o.eta, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != o.eta->size()) throw ConfigError("--eta", "expected a number or 'grid', got '" + *o.eta + "'");
    cfg.eta_grid = {eta};
  }
  cfg.validate();
}

// ---- Commands -------------------------------------------------------------------

GenerateReport cmd_generate(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const ModelSuite suite = benchmark_suite(cfg.dynamics);
  const Dataset dataset = generate_dataset(suite, cfg.counts, cfg.seed);
  GenerateReport report{cfg.resolved_dataset_path(), dataset.trajectories.size()};
  if (report.path.has_parent_path()) std::filesystem::create_directories(report.path.parent_path());
  save_dataset(dataset, report.path);
  log << "generated " << report.trajectories << " trajectories (train " << cfg.counts.train << ", val "
      << cfg.counts.val << ", test " << cfg.counts.test << "), T = " << suite.horizon << ", "
      << to_string(cfg.dynamics) << " dynamics -> " << report.path.string() << "\n";
  return report;
}

TrainReport cmd_train(const RunConfig& cfg, LearnedFilter kind, std::ostream& log) {
  cfg.validate();
  const Dataset dataset = load_matching_dataset(cfg);
  const auto train_set = dataset.subset(Split::kTrain);
  const auto val_set = dataset.subset(Split::kVal);
  const std::string name(to_string(kind));

  TrainReport report;
  report.kind = kind;
  std::vector<NeuralRegimeSet> bests;
  for (double eta : cfg.eta_grid) {
    const TrainConfig tcfg = cfg.train_config(eta);
    const auto ckpt_dir = cfg.out_dir / "checkpoints" / name / eta_tag(eta);
    std::filesystem::create_directories(ckpt_dir);
    std::ostringstream csv;
    csv << "epoch,train_loss,val_rmse,lr\n";
    log << name << " eta=" << format_double(eta) << "\n";
    EtaRun run;
    run.eta = eta;
    run.log_path = cfg.out_dir / "logs" / (name + "_" + eta_tag(eta) + ".csv");
    TrainResult result;
    try {
      result = train(kind, train_set, val_set, tcfg, dataset.suite.dynamics,
                     [&](const EpochLog& e, const NeuralRegimeSet& params, bool improved) {
                       csv << e.epoch << ',' << format_double(e.train_loss) << ',' << format_double(e.val_rmse) << ','
                           << format_double(e.lr) << '\n';
                       if (improved) save_checkpoint(params, ckpt_dir / epoch_name(e.epoch));
                       log << "  epoch " << e.epoch << " loss " << e.train_loss << " val_rmse " << e.val_rmse
                           << (improved ? " *" : "") << "\n";
                       log.flush();
                     });
    } catch (const std::runtime_error& e) {
      run.failure = e.what();
      run.best_val_rmse = std::numeric_limits<double>::infinity();
      log << "  diverged: " << run.failure << "\n";
    }
    write_file(run.log_path, csv.str());
    if (run.failure.empty()) {
      save_checkpoint(result.final_params, ckpt_dir / "final.json");
      run.best_epoch = result.best_epoch;
      run.best_val_rmse = result.log.at(static_cast<std::size_t>(result.best_epoch)).val_rmse;
    }
    report.runs.push_back(run);
    bests.push_back(std::move(result.best));
  }

  for (std::size_t i = 1; i < report.runs.size(); ++i) {
    if (report.runs[i].best_val_rmse < report.runs[report.selected].best_val_rmse) report.selected = i;
  }
  if (!report.runs[report.selected].failure.empty()) {
    throw std::runtime_error(name + ": training diverged for every learning rate");
  }
  report.checkpoint = cfg.checkpoint_path(kind);
  std::filesystem::create_directories(report.checkpoint.parent_path());
  save_checkpoint(bests[report.selected], report.checkpoint);

  ordered_json sel;
  sel["filter"] = name;
  sel["selected_eta"] = report.runs[report.selected].eta;
  sel["checkpoint"] = report.checkpoint.string();
  auto& runs = sel["runs"] = ordered_json::array();
  for (const auto& r : report.runs) {
    ordered_json entry = {{"eta", r.eta}, {"best_epoch", r.best_epoch}};
    entry["best_val_rmse"] = r.failure.empty() ? ordered_json(r.best_val_rmse) : ordered_json(nullptr);
    entry["log"] = r.log_path.string();
    if (!r.failure.empty()) entry["failure"] = r.failure;
    runs.push_back(entry);
  }
  write_file(cfg.out_dir / "logs" / (name + "_selection.json"), sel.dump(2) + "\n");
  log << name << ": selected eta=" << format_double(report.runs[report.selected].eta) << " (val_rmse "
      << report.runs[report.selected].best_val_rmse << ")\n";
  return report;
}

std::uint64_t evaluation_seed(std::uint64_t master, FilterKind kind, std::uint64_t traj_id) {
  return derive_seed(master, {stream_tag("eval"), stream_tag(std::string(to_string(kind)).c_str()), traj_id});
}

ResultsRow evaluate_filter(FilterKind kind, const ModelSuite& suite, const NeuralRegimeSet* params,
                           std::span<const Trajectory> trajectories, const FilterConfig& cfg, std::uint64_t seed,
                           std::vector<FilterOutput>* outputs) {
  if (is_learned(kind) && params == nullptr) {
    throw std::invalid_argument(std::string(to_string(kind)) + " needs trained parameters");
  }
  std::vector<std::vector<double>> estimates;
  std::vector<std::vector<double>> truths;
  estimates.reserve(trajectories.size());
  truths.reserve(trajectories.size());
  for (const auto& traj : trajectories) {
    Rng rng(evaluation_seed(seed, kind, traj.traj_id));
    FilterOutput out;
    switch (kind) {
      case FilterKind::kMmPf:
        out = run_mm_pf(suite, traj.observations, cfg, rng);
        break;
      case FilterKind::kRsPf:
        out = run_rs_pf(suite, traj.observations, cfg, rng);
        break;
      case FilterKind::kDbpf:
      case FilterKind::kRsDbpf:
        out = run_learned(as_learned(kind), *params, suite.dynamics, traj.observations, cfg, rng);
        break;
    }
    estimates.push_back(out.estimates);
    truths.emplace_back(traj.states.begin() + 1, traj.states.end());
    if (outputs != nullptr) outputs->push_back(std::move(out));
  }
  return make_results_row(std::string(to_string(kind)), std::string(table_label(kind)), estimates, truths);
}

std::string estimates_csv(std::span<const Trajectory> trajectories, std::span<const FilterOutput> outputs) {
  if (trajectories.size() != outputs.size()) throw std::invalid_argument("estimates_csv: size mismatch");
  std::string csv = "traj_id,t,estimate,truth,abs_error,ess\n";
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const auto& traj = trajectories[i];
    const auto& out = outputs[i];
    for (std::size_t t = 0; t < out.estimates.size(); ++t) {
      const double truth = traj.states[t + 1];
      csv += std::to_string(traj.traj_id) + ',' + std::to_string(t + 1) + ',' + format_double(out.estimates[t]) + ',' +
             format_double(truth) + ',' + format_double(std::abs(out.estimates[t] - truth)) + ',' +
             format_double(out.ess_trace[t]) + '\n';
    }
  }
  return csv;
}

ResultsTable cmd_evaluate(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const Dataset dataset = load_matching_dataset(cfg);
  const auto test_set = dataset.subset(Split::kTest);
  if (test_set.empty()) throw std::runtime_error("dataset has no test split");
  const FilterConfig fcfg = cfg.eval_filter_config();

  // Load checkpoints before any filter runs so a missing file fails fast.
  std::vector<std::pair<FilterKind, std::optional<NeuralRegimeSet>>> plan;
  for (FilterKind kind : kAllFilters) {
    if (std::find(cfg.filters.begin(), cfg.filters.end(), kind) == cfg.filters.end()) continue;
    std::optional<NeuralRegimeSet> params;
    if (is_learned(kind)) {
      const auto path = cfg.checkpoint_path(as_learned(kind));
      if (!std::filesystem::exists(path)) throw std::runtime_error("missing checkpoint " + path.string());
      params = load_checkpoint(path);
      const int expected = learned_regime_count(as_learned(kind), dataset.suite.dynamics);
      if (params->n_regimes() != expected) {
        throw std::runtime_error("checkpoint " + path.string() + " has " + std::to_string(params->n_regimes()) +
                                 " regimes, expected " + std::to_string(expected));
      }
    }
    plan.emplace_back(kind, std::move(params));
  }

  ResultsTable table;
  table.title = std::string("Average, best and worst RMSE over ") + std::to_string(test_set.size()) +
                " test trajectories, " + std::string(to_string(cfg.dynamics)) + " dynamics";
  table.notes.push_back("dataset " + cfg.resolved_dataset_path().string() + ", master seed " +
                        std::to_string(dataset.master_seed));
  table.notes.push_back(std::to_string(cfg.eval_particles) + " particles, " + std::string(to_string(cfg.regime_proposal)) +
                        " regime proposal, resampling when ESS < " + format_double(fcfg.ess_threshold));
  table.notes.push_back("filter seed per trajectory: derive_seed(" + std::to_string(cfg.seed) +
                        ", {stream_tag(\"eval\"), stream_tag(<filter>), traj_id})");

  std::vector<unsigned long long> ids;
  for (const auto& t : test_set) ids.push_back(t.traj_id);
  const auto results_dir = cfg.out_dir / "results";
  std::filesystem::create_directories(results_dir);
  for (const auto& [kind, params] : plan) {
    std::vector<FilterOutput> outputs;
    table.rows.push_back(evaluate_filter(kind, dataset.suite, params ? &*params : nullptr, test_set, fcfg, cfg.seed,
                                         &outputs));
    const auto& row = table.rows.back();
    log << row.label << ": average " << row.rmse.average << ", best " << row.rmse.best << ", worst "
        << row.rmse.worst << "\n";
    log.flush();
    write_file(results_dir / ("estimates_" + std::string(to_string(kind)) + ".csv"), estimates_csv(test_set, outputs));
  }
  write_file(results_dir / "table.md", table.to_markdown());
  write_file(results_dir / "table.csv", table.to_csv());
  write_file(results_dir / "per_step_mae.csv", table.per_step_mae_csv());
  write_file(results_dir / "per_traj_rmse.csv", table.per_trajectory_csv(ids));
  return table;
}

ResultsTable cmd_reproduce(const RunConfig& cfg, std::ostream& log) {
  cmd_generate(cfg, log);
  for (FilterKind kind : {FilterKind::kDbpf, FilterKind::kRsDbpf}) {
    if (std::find(cfg.filters.begin(), cfg.filters.end(), kind) != cfg.filters.end()) {
      cmd_train(cfg, as_learned(kind), log);
    }
  }
  return cmd_evaluate(cfg, log);
}

}  // namespace rsdbpf
