#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ncmtl/errors.hpp"
#include "ncmtl/types.hpp"

namespace ncmtl {

struct TaskDataset {
  int task_id = 0;
  std::string name;
  Matrix features;  // rows are examples
  std::vector<int> labels;
  int num_classes = 2;

  int size() const { return static_cast<int>(features.rows()); }
};

/// Generator parameters for multi-group synthetic tasks. Tasks in one group
/// share a latent linear classifier up to Gaussian perturbation of scale
/// `within_group_noise`; groups are separated by at least
/// `group_separation * within_group_noise` in classifier space.
struct SyntheticSpec {
  int num_tasks = 12;
  int num_groups = 3;
  int input_dim = 16;
  int examples_per_task = 500;
  double group_separation = 10.0;
  double within_group_noise = 1.0;
  double label_noise_rate = 0.05;
  std::uint64_t seed = 1;
};

struct SyntheticTasks {
  std::vector<TaskDataset> tasks;
  std::vector<int> group_labels;  // ground-truth group per task
  Matrix task_classifiers;        // row j: task j's true linear classifier
};

SyntheticTasks generate_synthetic_tasks(const SyntheticSpec& spec);

/// Seeded shuffle, then ten near-equal contiguous parts; part `fold` is the
/// test set. Sizes differ by at most one example.
std::pair<std::vector<int>, std::vector<int>> ten_fold_indices(int n, int fold,
                                                               std::uint64_t seed);

std::pair<TaskDataset, TaskDataset> split_ten_fold(const TaskDataset& dataset, int fold,
                                                   std::uint64_t seed);

// --- text ingestion (one document per line: "<label>\t<text>") ---

struct RawDocument {
  int label = 0;  // 0 = negative, 1 = positive
  std::string text;
};

std::vector<RawDocument> load_raw_documents(const std::string& path);

/// Token -> feature index over the `vocab_size` most frequent lowercased
/// whitespace tokens; frequency ties break lexicographically.
struct Vocabulary {
  std::unordered_map<std::string, int> index;
};

Vocabulary build_vocabulary(const std::vector<RawDocument>& docs, int vocab_size);

/// Raw bag-of-words counts over the vocabulary, fixed dimension `dim`.
Vector bow_counts(const std::string& text, const Vocabulary& vocab, int dim);

/// L2-normalised counts; an all-zero count vector stays zero.
Vector featurize(const std::string& text, const Vocabulary& vocab, int dim);

TaskDataset load_text_dataset(const std::string& path, int vocab_size, int task_id = 0);

/// Loads every regular file in `dir` (sorted by filename) as one task.
std::vector<TaskDataset> load_text_directory(const std::string& dir, int vocab_size);

/// Fold split for text data with the vocabulary built from the training
/// documents only.
struct TextTaskSplit {
  TaskDataset train;
  TaskDataset test;
};

TextTaskSplit load_text_task_split(const std::string& path, int vocab_size, int fold,
                                   std::uint64_t seed, int task_id = 0);

}  // namespace ncmtl
