#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "rsdbpf/experiment.hpp"
#include "rsdbpf/metrics.hpp"

using namespace rsdbpf;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("rsdbpf_test_" + name);
  fs::remove_all(dir);
  return dir;
}

RunConfig tiny_config(const fs::path& out) {
  RunConfig cfg;
  cfg.out_dir = out;
  cfg.seed = 11;
  cfg.counts = {4, 2, 3};
  cfg.eval_particles = 40;
  cfg.eta_grid = {0.01, 0.05};
  cfg.train.epochs = 2;
  cfg.train.batch_size = 2;
  cfg.train.train_particles = 8;
  return cfg;
}

std::string field_of(const std::string& json_text) {
  try {
    parse_run_config(json_text);
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "<none>";
}

}  // namespace

TEST(Metrics, RmseExamples) {
  const std::vector<double> truth{1.0, -2.0, 3.5};
  EXPECT_EQ(rmse(truth, truth), 0.0);
  const std::vector<double> shifted{2.0, -1.0, 4.5};
  EXPECT_DOUBLE_EQ(rmse(shifted, truth), 1.0);
  const std::vector<double> a{0.0, 0.0}, b{3.0, 4.0};
  EXPECT_DOUBLE_EQ(rmse(a, b), std::sqrt(12.5));
  EXPECT_THROW(rmse(a, truth), std::invalid_argument);
}

TEST(Metrics, SummaryOrdering) {
  const std::vector<double> v{0.7, 0.2, 1.9, 0.4};
  const RmseSummary s = summarize_rmse(v);
  EXPECT_DOUBLE_EQ(s.best, 0.2);
  EXPECT_DOUBLE_EQ(s.worst, 1.9);
  EXPECT_DOUBLE_EQ(s.average, 0.8);
  EXPECT_LE(s.best, s.average);
  EXPECT_LE(s.average, s.worst);
}

TEST(Metrics, RowFromEstimates) {
  const std::vector<std::vector<double>> est{{1.0, 1.0}, {0.0, 3.0}};
  const std::vector<std::vector<double>> truth{{1.0, 1.0}, {1.0, 1.0}};
  const ResultsRow row = make_results_row("x", "X", est, truth);
  ASSERT_EQ(row.per_trajectory_rmse.size(), 2u);
  EXPECT_DOUBLE_EQ(row.per_trajectory_rmse[0], 0.0);
  EXPECT_DOUBLE_EQ(row.per_trajectory_rmse[1], std::sqrt(2.5));
  ASSERT_EQ(row.per_step_mae.size(), 2u);
  EXPECT_DOUBLE_EQ(row.per_step_mae[0], 0.5);
  EXPECT_DOUBLE_EQ(row.per_step_mae[1], 1.0);
}

TEST(Metrics, FormatDoubleRoundTrips) {
  for (double x : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0}) EXPECT_EQ(std::stod(format_double(x)), x);
  EXPECT_EQ(format_double(0.5), "0.5");
}

TEST(FilterNames, ParseAndLabels) {
  EXPECT_EQ(parse_filter_kind("rs-dbpf"), FilterKind::kRsDbpf);
  EXPECT_EQ(table_label(FilterKind::kRsPf), "RS-PF (oracle)");
  EXPECT_THROW(parse_filter_kind("pf"), std::invalid_argument);
  EXPECT_EQ(parse_filter_list("mm-pf, rs-pf").size(), 2u);
  EXPECT_THROW(parse_filter_list("dbpf,dbpf"), std::invalid_argument);
  EXPECT_THROW(parse_filter_list(""), std::invalid_argument);
}

TEST(RunConfigParse, DefaultsMatchReferenceSetup) {
  const RunConfig cfg = parse_run_config("{}");
  EXPECT_EQ(cfg.dynamics, DynamicsKind::kMarkov);
  EXPECT_EQ(cfg.counts, (SplitCounts{1000, 500, 500}));
  EXPECT_EQ(cfg.eval_particles, 2000);
  EXPECT_EQ(cfg.train.train_particles, 200);
  EXPECT_EQ(cfg.train.epochs, 60);
  EXPECT_EQ(cfg.train.batch_size, 100);
  EXPECT_DOUBLE_EQ(cfg.train.momentum, 0.9);
  EXPECT_EQ(cfg.train.lr_halving_period, 10);
  EXPECT_EQ(cfg.eta_grid, (std::vector<double>{0.01, 0.02, 0.05, 0.1}));
  EXPECT_DOUBLE_EQ(cfg.ess_fraction, 0.5);
  EXPECT_EQ(cfg.filters.size(), 4u);
}

TEST(RunConfigParse, ShippedConfigsLoad) {
  for (const char* name : {"markov.json", "polya.json", "desk.json"}) {
    EXPECT_NO_THROW(load_run_config(fs::path(RSDBPF_CONFIG_DIR) / name)) << name;
  }
  EXPECT_EQ(load_run_config(fs::path(RSDBPF_CONFIG_DIR) / "polya.json").dynamics, DynamicsKind::kPolya);
}

TEST(RunConfigParse, FieldPreciseErrors) {
  EXPECT_EQ(field_of(R"({"bogus": 1})"), "bogus");
  EXPECT_EQ(field_of(R"({"train": {"epoch": 3}})"), "train.epoch");
  EXPECT_EQ(field_of(R"({"train": {"epochs": "3"}})"), "train.epochs");
  EXPECT_EQ(field_of(R"({"train": {"epochs": 0}})"), "train.epochs");
  EXPECT_EQ(field_of(R"({"train": {"eta_grid": [0.1, "x"]}})"), "train.eta_grid[1]");
  EXPECT_EQ(field_of(R"({"dataset": {"train": -5}})"), "dataset.train");
  EXPECT_EQ(field_of(R"({"filter": {"ess_fraction": 1.5}})"), "filter.ess_fraction");
  EXPECT_EQ(field_of(R"({"filter": {"regime_proposal": "best"}})"), "filter.regime_proposal");
  EXPECT_EQ(field_of(R"({"dynamics": "hmm"})"), "dynamics");
  EXPECT_EQ(field_of(R"({"seed": -1})"), "seed");
  EXPECT_EQ(field_of(R"({"filters": ["mm-pf", "kf"]})"), "filters");
  EXPECT_EQ(field_of("{not json"), "<root>");
  EXPECT_EQ(field_of(R"({"dataset": {"train": 10}})"), "train.batch_size");
}

TEST(RunConfigParse, NegativeCountTouchesNoFiles) {
  const fs::path out = scratch("negcount");
  EXPECT_THROW(parse_run_config(R"({"out_dir": ")" + out.string() + R"(", "dataset": {"test": -1}})"), ConfigError);
  EXPECT_FALSE(fs::exists(out));
}

TEST(RunConfigParse, JsonRoundTrip) {
  RunConfig cfg = tiny_config("somewhere");
  cfg.dynamics = DynamicsKind::kPolya;
  cfg.filters = {FilterKind::kRsPf, FilterKind::kMmPf};
  const RunConfig back = parse_run_config(run_config_to_json(cfg));
  EXPECT_EQ(run_config_to_json(back), run_config_to_json(cfg));
}

TEST(Overrides, TakePrecedence) {
  RunConfig cfg = parse_run_config(R"({"seed": 5, "filters": ["dbpf"], "train": {"eta_grid": [0.1, 0.2]}})");
  Overrides o;
  o.seed = 99;
  o.out_dir = "elsewhere";
  o.filters = "rs-pf,mm-pf";
  o.particles = 64;
  o.eta = "0.03";
  o.dynamics = "polya";
  apply_overrides(cfg, o);
  EXPECT_EQ(cfg.seed, 99u);
  EXPECT_EQ(cfg.out_dir, fs::path("elsewhere"));
  EXPECT_EQ(cfg.filters, (std::vector<FilterKind>{FilterKind::kRsPf, FilterKind::kMmPf}));
  EXPECT_EQ(cfg.eval_particles, 64);
  EXPECT_EQ(cfg.eta_grid, std::vector<double>{0.03});
  EXPECT_EQ(cfg.dynamics, DynamicsKind::kPolya);
}

TEST(Overrides, GridKeepsConfiguredGridAndBadValuesFail) {
  RunConfig cfg = parse_run_config("{}");
  Overrides o;
  o.eta = "grid";
  apply_overrides(cfg, o);
  EXPECT_EQ(cfg.eta_grid.size(), 4u);
  o.eta = "0.1x";
  EXPECT_THROW(apply_overrides(cfg, o), ConfigError);
  Overrides p;
  p.particles = 0;
  try {
    apply_overrides(cfg, p);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "filter.eval_particles");
  }
}

TEST(Commands, GenerateIsByteIdentical) {
  const fs::path a = scratch("gen_a"), b = scratch("gen_b");
  std::ostringstream log;
  const auto ra = cmd_generate(tiny_config(a), log);
  const auto rb = cmd_generate(tiny_config(b), log);
  EXPECT_EQ(ra.trajectories, 9u);
  EXPECT_EQ(read_file(ra.path), read_file(rb.path));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Commands, EvaluateWithoutCheckpointFails) {
  const fs::path out = scratch("nockpt");
  RunConfig cfg = tiny_config(out);
  std::ostringstream log;
  cmd_generate(cfg, log);
  try {
    cmd_evaluate(cfg, log);
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("missing checkpoint"), std::string::npos);
  }
  EXPECT_FALSE(fs::exists(out / "results" / "table.md"));
  fs::remove_all(out);
}

TEST(Commands, EvaluateRejectsDynamicsMismatch) {
  const fs::path out = scratch("mismatch");
  RunConfig cfg = tiny_config(out);
  cfg.filters = {FilterKind::kRsPf};
  std::ostringstream log;
  cmd_generate(cfg, log);
  cfg.dynamics = DynamicsKind::kPolya;
  EXPECT_THROW(cmd_evaluate(cfg, log), std::runtime_error);
  fs::remove_all(out);
}

TEST(Commands, MissingDatasetFails) {
  RunConfig cfg = tiny_config(scratch("nodata"));
  std::ostringstream log;
  EXPECT_THROW(cmd_evaluate(cfg, log), std::runtime_error);
  EXPECT_THROW(cmd_train(cfg, LearnedFilter::kDbpf, log), std::runtime_error);
}

TEST(Commands, TrainSelectsBestEta) {
  const fs::path out = scratch("train");
  RunConfig cfg = tiny_config(out);
  std::ostringstream log;
  cmd_generate(cfg, log);
  const TrainReport report = cmd_train(cfg, LearnedFilter::kRsDbpf, log);
  ASSERT_EQ(report.runs.size(), 2u);
  for (const auto& r : report.runs) {
    EXPECT_TRUE(fs::exists(r.log_path));
    EXPECT_LE(report.runs[report.selected].best_val_rmse, r.best_val_rmse);
  }
  EXPECT_TRUE(fs::exists(report.checkpoint));
  const auto sel = nlohmann::json::parse(read_file(out / "logs" / "rs-dbpf_selection.json"));
  EXPECT_EQ(sel["selected_eta"].get<double>(), report.runs[report.selected].eta);
  EXPECT_EQ(sel["runs"].size(), 2u);

  Overrides pin;
  pin.eta = "0.02";
  apply_overrides(cfg, pin);
  const TrainReport single = cmd_train(cfg, LearnedFilter::kRsDbpf, log);
  ASSERT_EQ(single.runs.size(), 1u);
  EXPECT_EQ(single.runs[0].eta, 0.02);
  fs::remove_all(out);
}

TEST(Commands, ReproduceIsDeterministicAndTablesRecomputable) {
  const fs::path a = scratch("repro_a"), b = scratch("repro_b");
  std::ostringstream log;
  const ResultsTable ta = cmd_reproduce(tiny_config(a), log);
  cmd_reproduce(tiny_config(b), log);
  for (const char* f : {"table.csv", "per_step_mae.csv", "per_traj_rmse.csv", "estimates_rs-dbpf.csv"}) {
    EXPECT_EQ(read_file(a / "results" / f), read_file(b / "results" / f)) << f;
  }
  ASSERT_EQ(ta.rows.size(), 4u);
  EXPECT_EQ(ta.rows[0].label, "MM-PF (baseline)");
  EXPECT_EQ(ta.rows[3].label, "RS-PF (oracle)");

  // Recompute the summary from the per-trajectory CSV.
  std::map<std::string, std::vector<double>> per;
  std::istringstream csv(read_file(a / "results" / "per_traj_rmse.csv"));
  std::string line;
  std::getline(csv, line);
  while (std::getline(csv, line)) {
    const auto c1 = line.find(','), c2 = line.rfind(',');
    per[line.substr(0, c1)].push_back(std::stod(line.substr(c2 + 1)));
  }
  for (const auto& row : ta.rows) {
    const auto& v = per.at(row.filter);
    ASSERT_EQ(v.size(), 3u);
    double sum = 0.0, lo = v[0], hi = v[0];
    for (double x : v) {
      sum += x;
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
    EXPECT_NEAR(sum / 3.0, row.rmse.average, 1e-12);
    EXPECT_NEAR(lo, row.rmse.best, 1e-12);
    EXPECT_NEAR(hi, row.rmse.worst, 1e-12);
  }
  // And from the per-step estimates.
  std::map<unsigned long long, std::pair<double, int>> sq;
  std::istringstream est(read_file(a / "results" / "estimates_mm-pf.csv"));
  std::getline(est, line);
  while (std::getline(est, line)) {
    std::istringstream fields(line);
    std::string id, t, e, truth;
    std::getline(fields, id, ',');
    std::getline(fields, t, ',');
    std::getline(fields, e, ',');
    std::getline(fields, truth, ',');
    const double d = std::stod(e) - std::stod(truth);
    auto& acc = sq[std::stoull(id)];
    acc.first += d * d;
    acc.second += 1;
  }
  std::size_t k = 0;
  for (const auto& [id, acc] : sq) {
    EXPECT_EQ(acc.second, 50);
    EXPECT_NEAR(std::sqrt(acc.first / acc.second), ta.rows[0].per_trajectory_rmse[k++], 1e-12);
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Commands, DivergedEtaIsRecordedAndSkipped) {
  const fs::path out = scratch("diverge");
  RunConfig cfg = tiny_config(out);
  cfg.eta_grid = {1e300, 0.01};
  std::ostringstream log;
  cmd_generate(cfg, log);
  const TrainReport report = cmd_train(cfg, LearnedFilter::kDbpf, log);
  ASSERT_EQ(report.runs.size(), 2u);
  EXPECT_FALSE(report.runs[0].failure.empty());
  EXPECT_TRUE(report.runs[1].failure.empty());
  EXPECT_EQ(report.selected, 1u);
  const auto sel = nlohmann::json::parse(read_file(out / "logs" / "dbpf_selection.json"));
  EXPECT_TRUE(sel["runs"][0]["best_val_rmse"].is_null());
  EXPECT_EQ(sel["selected_eta"].get<double>(), 0.01);

  cfg.eta_grid = {1e300};
  EXPECT_THROW(cmd_train(cfg, LearnedFilter::kDbpf, log), std::runtime_error);
  fs::remove_all(out);
}
