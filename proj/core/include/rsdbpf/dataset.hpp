#pragma once

// Simulated datasets and their JSON Lines file format.
//
// Line 1 is a header object
//   {"format":"rsdbpf-dataset/1","suite":{...},"counts":{...},"master_seed":N}
// followed by one object per trajectory
//   {"traj_id":k,"split":"train|val|test","regimes":[...],"states":[...],"observations":[...]}
// Regimes are 1-based in the file. Reals use the shortest decimal that
// round-trips, so save/load is bit-exact.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "rsdbpf/ssm.hpp"

namespace rsdbpf {

inline constexpr const char* kDatasetFormat = "rsdbpf-dataset/1";

enum class Split { kTrain, kVal, kTest };

std::string_view to_string(Split split);
Split parse_split(std::string_view name);

struct SplitCounts {
  int train = 1000;
  int val = 500;
  int test = 500;

  int total() const { return train + val + test; }
  void validate() const;
  bool operator==(const SplitCounts&) const = default;
};

struct Dataset {
  ModelSuite suite;
  SplitCounts counts;
  std::uint64_t master_seed = 0;
  std::vector<Trajectory> trajectories;
  std::vector<Split> splits;  // parallel to trajectories

  std::vector<Trajectory> subset(Split split) const;
  void validate() const;
  bool operator==(const Dataset&) const = default;
};

/// Seed of trajectory `traj_id`; each trajectory can be regenerated alone.
std::uint64_t trajectory_seed(std::uint64_t master_seed, std::uint64_t traj_id);

/// Ids 0..train-1 are train, then val, then test.
Dataset generate_dataset(const ModelSuite& suite, SplitCounts counts, std::uint64_t master_seed);

std::string dataset_to_jsonl(const Dataset& dataset);
/// Throws DatasetError (with the 1-based line number where relevant).
Dataset dataset_from_jsonl(std::string_view text);
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

class DatasetError : public std::runtime_error {
 public:
  DatasetError(const std::string& what, int line) : std::runtime_error(what), line_(line) {}
  /// 1-based line number, 0 when the error is not tied to a line.
  int line() const { return line_; }

 private:
  int line_;
};

// Suite descriptor (shared by the dataset header and the run config).
std::string suite_to_json(const ModelSuite& suite);
ModelSuite suite_from_json(std::string_view text);

}  // namespace rsdbpf
