#include "rsdbpf/dataset.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "rsdbpf/random.hpp"

namespace rsdbpf {

using nlohmann::json;
using ordered = nlohmann::ordered_json;

std::string_view to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw std::invalid_argument("unknown split '" + std::string(name) + "'");
}

void SplitCounts::validate() const {
  if (train < 1 || val < 1 || test < 1) {
    throw std::invalid_argument("split counts must be positive (train=" + std::to_string(train) +
                                ", val=" + std::to_string(val) + ", test=" + std::to_string(test) + ")");
  }
}

std::vector<Trajectory> Dataset::subset(Split split) const {
  std::vector<Trajectory> out;
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    if (splits[i] == split) out.push_back(trajectories[i]);
  }
  return out;
}

void Dataset::validate() const {
  suite.validate();
  counts.validate();
  if (splits.size() != trajectories.size()) throw std::invalid_argument("split labels do not cover trajectories");
  if (static_cast<int>(trajectories.size()) != counts.total()) {
    throw std::invalid_argument("dataset holds " + std::to_string(trajectories.size()) + " trajectories, header says " +
                                std::to_string(counts.total()));
  }
  int seen[3] = {0, 0, 0};
  std::set<std::uint64_t> ids;
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    trajectories[i].validate(suite.n_regimes(), suite.horizon);
    if (!ids.insert(trajectories[i].traj_id).second) {
      throw std::invalid_argument("duplicate traj_id " + std::to_string(trajectories[i].traj_id));
    }
    ++seen[static_cast<int>(splits[i])];
  }
  if (seen[0] != counts.train || seen[1] != counts.val || seen[2] != counts.test) {
    throw std::invalid_argument("split sizes do not match declared counts");
  }
}

std::uint64_t trajectory_seed(std::uint64_t master_seed, std::uint64_t traj_id) {
  return derive_seed(master_seed, {stream_tag("trajectory"), traj_id});
}

Dataset generate_dataset(const ModelSuite& suite, SplitCounts counts, std::uint64_t master_seed) {
  suite.validate();
  counts.validate();
  Dataset d;
  d.suite = suite;
  d.counts = counts;
  d.master_seed = master_seed;
  const auto total = static_cast<std::uint64_t>(counts.total());
  d.trajectories.reserve(total);
  d.splits.reserve(total);
  for (std::uint64_t id = 0; id < total; ++id) {
    d.trajectories.push_back(simulate(suite, trajectory_seed(master_seed, id), id));
    const auto k = static_cast<int>(id);
    d.splits.push_back(k < counts.train ? Split::kTrain : (k < counts.train + counts.val ? Split::kVal : Split::kTest));
  }
  return d;
}

namespace {

ordered suite_json(const ModelSuite& suite) {
  ordered s;
  auto& cands = s["candidates"] = ordered::array();
  for (const auto& m : suite.candidates) {
    cands.push_back(ordered{{"a", m.a},
                            {"b", m.b},
                            {"c", m.c},
                            {"d", m.d},
                            {"dyn_noise_var", m.dyn_noise_var},
                            {"obs_noise_var", m.obs_noise_var}});
  }
  ordered dyn;
  dyn["kind"] = std::string(to_string(suite.dynamics.kind()));
  if (suite.dynamics.kind() == DynamicsKind::kMarkov) {
    const int n = suite.dynamics.n_regimes();
    auto& rows = dyn["transition"] = ordered::array();
    for (int j = 0; j < n; ++j) {
      ordered row = ordered::array();
      for (int k = 0; k < n; ++k) row.push_back(suite.dynamics.transition(j, k));
      rows.push_back(std::move(row));
    }
  } else {
    dyn["beta"] = std::vector<double>(suite.dynamics.beta().begin(), suite.dynamics.beta().end());
  }
  s["dynamics"] = std::move(dyn);
  s["init_low"] = suite.init_low;
  s["init_high"] = suite.init_high;
  s["horizon"] = suite.horizon;
  return s;
}

ModelSuite parse_suite(const json& s) {
  ModelSuite suite{.candidates = {}, .dynamics = benchmark_polya_dynamics(1)};
  for (const auto& c : s.at("candidates")) {
    suite.candidates.push_back(CandidateModel{.a = c.at("a").get<double>(),
                                              .b = c.at("b").get<double>(),
                                              .c = c.at("c").get<double>(),
                                              .d = c.at("d").get<double>(),
                                              .dyn_noise_var = c.at("dyn_noise_var").get<double>(),
                                              .obs_noise_var = c.at("obs_noise_var").get<double>()});
  }
  const auto& dyn = s.at("dynamics");
  const DynamicsKind kind = parse_dynamics(dyn.at("kind").get<std::string>());
  if (kind == DynamicsKind::kMarkov) {
    const auto rows = dyn.at("transition").get<std::vector<std::vector<double>>>();
    std::vector<double> flat;
    for (const auto& r : rows) {
      if (r.size() != rows.size()) throw std::invalid_argument("transition matrix must be square");
      flat.insert(flat.end(), r.begin(), r.end());
    }
    suite.dynamics = RegimeDynamics::markov(rows.size(), std::move(flat));
  } else {
    suite.dynamics = RegimeDynamics::polya(dyn.at("beta").get<std::vector<double>>());
  }
  suite.init_low = s.at("init_low").get<double>();
  suite.init_high = s.at("init_high").get<double>();
  suite.horizon = s.at("horizon").get<int>();
  suite.validate();
  return suite;
}

}  // namespace

std::string suite_to_json(const ModelSuite& suite) { return suite_json(suite).dump(); }

ModelSuite suite_from_json(std::string_view text) { return parse_suite(json::parse(text)); }

std::string dataset_to_jsonl(const Dataset& dataset) {
  std::string out;
  ordered header;
  header["format"] = kDatasetFormat;
  header["suite"] = suite_json(dataset.suite);
  header["counts"] = ordered{{"train", dataset.counts.train}, {"val", dataset.counts.val}, {"test", dataset.counts.test}};
  header["master_seed"] = dataset.master_seed;
  out += header.dump();
  out += '\n';
  for (std::size_t i = 0; i < dataset.trajectories.size(); ++i) {
    const auto& t = dataset.trajectories[i];
    std::vector<int> regimes(t.regimes.begin(), t.regimes.end());
    for (int& m : regimes) ++m;
    ordered line;
    line["traj_id"] = t.traj_id;
    line["split"] = std::string(to_string(dataset.splits[i]));
    line["regimes"] = regimes;
    line["states"] = t.states;
    line["observations"] = t.observations;
    out += line.dump();
    out += '\n';
  }
  return out;
}

Dataset dataset_from_jsonl(std::string_view text) {
  Dataset d;
  int line_no = 0;
  std::size_t pos = 0;
  bool have_header = false;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    json doc;
    try {
      doc = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DatasetError("line " + std::to_string(line_no) + ": parse error: " + e.what(), line_no);
    }
    try {
      if (!have_header) {
        const std::string format = doc.value("format", "");
        if (format != kDatasetFormat) {
          throw DatasetError("line 1: unsupported dataset version '" + format + "' (expected '" + kDatasetFormat + "')",
                             line_no);
        }
        d.suite = parse_suite(doc.at("suite"));
        const auto& c = doc.at("counts");
        d.counts = SplitCounts{c.at("train").get<int>(), c.at("val").get<int>(), c.at("test").get<int>()};
        d.master_seed = doc.at("master_seed").get<std::uint64_t>();
        have_header = true;
        continue;
      }
      Trajectory t;
      t.traj_id = doc.at("traj_id").get<std::uint64_t>();
      t.regimes = doc.at("regimes").get<std::vector<int>>();
      for (int& m : t.regimes) --m;
      t.states = doc.at("states").get<std::vector<double>>();
      t.observations = doc.at("observations").get<std::vector<double>>();
      t.validate(d.suite.n_regimes(), d.suite.horizon);
      d.splits.push_back(parse_split(doc.at("split").get<std::string>()));
      d.trajectories.push_back(std::move(t));
    } catch (const DatasetError&) {
      throw;
    } catch (const std::exception& e) {
      throw DatasetError("line " + std::to_string(line_no) + ": " + e.what(), line_no);
    }
  }
  if (!have_header) throw DatasetError("empty dataset file", 0);
  try {
    d.validate();
  } catch (const std::exception& e) {
    throw DatasetError(std::string("invalid dataset: ") + e.what(), 0);
  }
  return d;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write dataset " + path.string());
  out << dataset_to_jsonl(dataset);
  if (!out) throw std::runtime_error("failed writing dataset " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return dataset_from_jsonl(buffer.str());
}

}  // namespace rsdbpf
