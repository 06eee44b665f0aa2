#include "rsdbpf/neural.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "rsdbpf/random.hpp"

namespace rsdbpf {

namespace {

constexpr const char* kCheckpointFormat = "rsdbpf-checkpoint/1";

void append(std::vector<double>& out, std::span<const double> xs) { out.insert(out.end(), xs.begin(), xs.end()); }

void fill_weights(std::vector<double>& params, const MlpShape& shape, Rng& rng) {
  params.assign(shape.param_count(), 0.0);
  const auto in = static_cast<std::size_t>(shape.in);
  const auto hidden = static_cast<std::size_t>(shape.hidden);
  const double bound1 = std::sqrt(1.0 / static_cast<double>(in));
  const double bound2 = std::sqrt(1.0 / static_cast<double>(hidden));
  std::uniform_real_distribution<double> first(-bound1, bound1);
  std::uniform_real_distribution<double> second(-bound2, bound2);
  for (std::size_t k = 0; k < hidden * in; ++k) params[k] = first(rng);
  const std::size_t w2 = hidden * in + hidden;
  for (std::size_t k = 0; k < hidden * static_cast<std::size_t>(shape.out); ++k) params[w2 + k] = second(rng);
}

// (suffix, shape, offset, length) of each block inside one MLP.
struct Block {
  const char* suffix;
  std::vector<int> shape;
  std::size_t offset;
  std::size_t length;
};

std::vector<Block> mlp_blocks(const MlpShape& s) {
  const auto in = static_cast<std::size_t>(s.in);
  const auto hidden = static_cast<std::size_t>(s.hidden);
  const auto out = static_cast<std::size_t>(s.out);
  return {
      {"w1", {s.hidden, s.in}, 0, hidden * in},
      {"b1", {s.hidden}, hidden * in, hidden},
      {"w2", {s.out, s.hidden}, hidden * in + hidden, out * hidden},
      {"b2", {s.out}, hidden * in + hidden + out * hidden, out},
  };
}

}  // namespace

std::vector<double> NeuralRegimeSet::flatten() const {
  std::vector<double> flat;
  flat.reserve(param_count());
  for (const auto& net : nets) {
    append(flat, net.proposer);
    append(flat, net.embedder);
    flat.push_back(net.log_bandwidth);
  }
  return flat;
}

void NeuralRegimeSet::assign(std::span<const double> flat) {
  if (flat.size() != param_count()) throw std::invalid_argument("parameter vector has wrong length");
  std::size_t pos = 0;
  for (auto& net : nets) {
    net.proposer.assign(flat.begin() + pos, flat.begin() + pos + kProposerShape.param_count());
    pos += kProposerShape.param_count();
    net.embedder.assign(flat.begin() + pos, flat.begin() + pos + kEmbedderShape.param_count());
    pos += kEmbedderShape.param_count();
    net.log_bandwidth = flat[pos++];
  }
}

NeuralRegimeSet init_params(std::uint64_t seed, int n_regimes) {
  if (n_regimes < 1) throw std::invalid_argument("n_regimes must be >= 1");
  Rng rng(derive_seed(seed, {stream_tag("init_params")}));
  NeuralRegimeSet set;
  set.nets.resize(static_cast<std::size_t>(n_regimes));
  for (auto& net : set.nets) {
    fill_weights(net.proposer, kProposerShape, rng);
    fill_weights(net.embedder, kEmbedderShape, rng);
    net.log_bandwidth = 0.0;
  }
  return set;
}

NeuralRegimeSet zero_params(int n_regimes) {
  if (n_regimes < 1) throw std::invalid_argument("n_regimes must be >= 1");
  NeuralRegimeSet set;
  set.nets.assign(static_cast<std::size_t>(n_regimes),
                  RegimeNet{std::vector<double>(kProposerShape.param_count(), 0.0),
                            std::vector<double>(kEmbedderShape.param_count(), 0.0), 0.0});
  return set;
}

BoundRegimeSet bind(ad::Tape& tape, const NeuralRegimeSet& set) {
  BoundRegimeSet bound;
  bound.nets.reserve(set.nets.size());
  bound.leaves.reserve(set.param_count());
  for (const auto& net : set.nets) {
    RegimeNetT<ad::Var> v;
    v.proposer.reserve(net.proposer.size());
    for (double p : net.proposer) {
      v.proposer.push_back(tape.leaf(p));
      bound.leaves.push_back(v.proposer.back());
    }
    v.embedder.reserve(net.embedder.size());
    for (double p : net.embedder) {
      v.embedder.push_back(tape.leaf(p));
      bound.leaves.push_back(v.embedder.back());
    }
    v.log_bandwidth = tape.leaf(net.log_bandwidth);
    bound.leaves.push_back(v.log_bandwidth);
    bound.nets.push_back(std::move(v));
  }
  return bound;
}

std::vector<NamedArray> named_arrays(const NeuralRegimeSet& set) {
  std::vector<NamedArray> arrays;
  for (std::size_t j = 0; j < set.nets.size(); ++j) {
    const auto& net = set.nets[j];
    const std::string prefix = "regime" + std::to_string(j + 1) + ".";
    for (const auto& [label, params, shape] :
         {std::tuple<const char*, const std::vector<double>*, MlpShape>{"proposer", &net.proposer, kProposerShape},
          {"embedder", &net.embedder, kEmbedderShape}}) {
      for (const auto& block : mlp_blocks(shape)) {
        arrays.push_back({prefix + label + "." + block.suffix, block.shape,
                          std::vector<double>(params->begin() + static_cast<std::ptrdiff_t>(block.offset),
                                              params->begin() + static_cast<std::ptrdiff_t>(block.offset + block.length))});
      }
    }
    arrays.push_back({prefix + "log_bandwidth", {1}, {net.log_bandwidth}});
  }
  return arrays;
}

NeuralRegimeSet from_named_arrays(std::span<const NamedArray> arrays) {
  constexpr std::size_t per_regime = 9;
  if (arrays.empty() || arrays.size() % per_regime != 0) {
    throw std::invalid_argument("checkpoint must hold 9 arrays per regime, got " + std::to_string(arrays.size()));
  }
  NeuralRegimeSet set = zero_params(static_cast<int>(arrays.size() / per_regime));
  const auto expected = named_arrays(set);
  std::vector<double> flat;
  flat.reserve(set.param_count());
  for (std::size_t i = 0; i < arrays.size(); ++i) {
    if (arrays[i].name != expected[i].name) {
      throw std::invalid_argument("checkpoint array " + std::to_string(i) + " is '" + arrays[i].name +
                                  "', expected '" + expected[i].name + "'");
    }
    if (arrays[i].shape != expected[i].shape || arrays[i].values.size() != expected[i].values.size()) {
      throw std::invalid_argument("checkpoint array '" + arrays[i].name + "' has the wrong shape");
    }
    append(flat, arrays[i].values);
  }
  set.assign(flat);
  return set;
}

std::string checkpoint_to_json(const NeuralRegimeSet& set) {
  nlohmann::ordered_json doc;
  doc["format"] = kCheckpointFormat;
  doc["n_regimes"] = set.n_regimes();
  doc["hidden"] = kProposerShape.hidden;
  auto& params = doc["params"] = nlohmann::ordered_json::array();
  for (const auto& a : named_arrays(set)) {
    nlohmann::ordered_json entry;
    entry["name"] = a.name;
    entry["shape"] = a.shape;
    entry["values"] = a.values;
    params.push_back(std::move(entry));
  }
  return doc.dump(1) + "\n";
}

NeuralRegimeSet checkpoint_from_json(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error(std::string("checkpoint parse error: ") + e.what());
  }
  if (!doc.is_object() || doc.value("format", "") != kCheckpointFormat) {
    throw std::runtime_error(std::string("checkpoint format must be '") + kCheckpointFormat + "'");
  }
  std::vector<NamedArray> arrays;
  try {
    for (const auto& entry : doc.at("params")) {
      arrays.push_back({entry.at("name").get<std::string>(), entry.at("shape").get<std::vector<int>>(),
                        entry.at("values").get<std::vector<double>>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("malformed checkpoint: ") + e.what());
  }
  NeuralRegimeSet set = from_named_arrays(arrays);
  if (doc.value("n_regimes", -1) != set.n_regimes()) throw std::runtime_error("checkpoint n_regimes mismatch");
  return set;
}

void save_checkpoint(const NeuralRegimeSet& set, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << checkpoint_to_json(set);
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

NeuralRegimeSet load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return checkpoint_from_json(buffer.str());
}

}  // namespace rsdbpf
