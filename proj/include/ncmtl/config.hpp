#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ncmtl/datasets.hpp"
#include "ncmtl/trainer.hpp"

namespace ncmtl {

/// Where a run's data comes from: the synthetic multi-group generator or a
/// directory of <label>\t<text> files, one file per task.
struct DataConfig {
  enum class Kind { synthetic, text };
  Kind kind = Kind::synthetic;
  std::string data_dir;
  int vocab_size = 2000;
  int fold = 0;
  int synthetic_num_groups = 3;
  int synthetic_examples_per_task = 500;
  double synthetic_group_separation = 10.0;
  double synthetic_within_group_noise = 1.0;
  double synthetic_label_noise = 0.05;
  std::optional<std::uint64_t> synthetic_seed;  // defaults to the run seed
};

struct RunConfig {
  TrainConfig train;
  DataConfig data;
};

/// Parses the flat key = value format. Collects every problem and throws a
/// single ConfigError naming all offending keys.
RunConfig parse_run_config(const std::string& text, const std::string& origin);

RunConfig load_run_config(const std::string& path);

/// Serialises every field (defaults resolved) in a fixed order; the result
/// re-parses to an identical RunConfig.
std::string serialize_run_config(const RunConfig& config);

/// For text data, derives num_tasks and input_dim from the data directory.
void finalize_config(RunConfig& config);

/// The per-task train/test splits a run trains on, plus naming and (for
/// synthetic data) ground-truth group labels.
struct DataBundle {
  std::vector<TaskDataset> train;
  std::vector<TaskDataset> test;
  std::vector<std::string> task_names;
  std::vector<int> group_labels;  // empty for text data
};

DataBundle materialize_data(const RunConfig& config);

}  // namespace ncmtl
