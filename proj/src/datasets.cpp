#include "ncmtl/datasets.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace ncmtl {

SyntheticTasks generate_synthetic_tasks(const SyntheticSpec& spec) {
  if (spec.num_groups < 1 || spec.num_groups > spec.num_tasks) {
    throw ArgumentError("generate_synthetic_tasks: num_groups outside [1, num_tasks]");
  }
  if (spec.group_separation <= 0.0 || spec.input_dim < 1 || spec.examples_per_task < 1) {
    throw ArgumentError("generate_synthetic_tasks: non-positive spec field");
  }

  Rng rng = make_rng(spec.seed, /*stream=*/0xDA7A);
  std::normal_distribution<double> unit_normal(0.0, 1.0);
  auto gaussian_vector = [&](double scale) {
    Vector v(spec.input_dim);
    for (int d = 0; d < spec.input_dim; ++d) v[d] = scale * unit_normal(rng);
    return v;
  };

  const double sigma = spec.within_group_noise;
  const double required = spec.group_separation * sigma;
  const double draw_scale = std::max(1.0, required);

  std::vector<Vector> groups;
  bool separated = false;
  for (int attempt = 0; attempt < 100 && !separated; ++attempt) {
    groups.clear();
    for (int g = 0; g < spec.num_groups; ++g) groups.push_back(gaussian_vector(draw_scale));
    separated = true;
    for (std::size_t a = 0; a < groups.size() && separated; ++a) {
      for (std::size_t b = a + 1; b < groups.size(); ++b) {
        if ((groups[a] - groups[b]).norm() < required) {
          separated = false;
          break;
        }
      }
    }
  }
  if (!separated) {
    throw ArgumentError("generate_synthetic_tasks: could not draw groups with separation " +
                        std::to_string(spec.group_separation) + " in dimension " +
                        std::to_string(spec.input_dim));
  }

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SyntheticTasks out;
  out.task_classifiers = Matrix(spec.num_tasks, spec.input_dim);
  for (int j = 0; j < spec.num_tasks; ++j) {
    const int group = j % spec.num_groups;
    out.group_labels.push_back(group);
    const Vector classifier = groups[static_cast<std::size_t>(group)] + gaussian_vector(sigma);
    out.task_classifiers.row(j) = classifier.transpose();

    TaskDataset task;
    task.task_id = j;
    task.name = "task" + std::to_string(j);
    task.num_classes = 2;
    task.features = Matrix(spec.examples_per_task, spec.input_dim);
    task.labels.resize(static_cast<std::size_t>(spec.examples_per_task));
    for (int e = 0; e < spec.examples_per_task; ++e) {
      const Vector x = gaussian_vector(1.0);
      task.features.row(e) = x.transpose();
      int label = classifier.dot(x) > 0.0 ? 1 : 0;
      if (spec.label_noise_rate > 0.0 && unit(rng) < spec.label_noise_rate) label = 1 - label;
      task.labels[static_cast<std::size_t>(e)] = label;
    }
    out.tasks.push_back(std::move(task));
  }
  return out;
}

std::pair<std::vector<int>, std::vector<int>> ten_fold_indices(int n, int fold,
                                                               std::uint64_t seed) {
  if (fold < 0 || fold >= 10) {
    throw ArgumentError("ten_fold_indices: fold " + std::to_string(fold) + " outside [0, 10)");
  }
  if (n < 10) {
    throw ArgumentError("ten_fold_indices: dataset of " + std::to_string(n) +
                        " examples cannot be split ten ways");
  }
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng = make_rng(seed, /*stream=*/0xF01D);
  std::shuffle(perm.begin(), perm.end(), rng);

  const int base = n / 10;
  const int extra = n % 10;
  std::vector<int> train;
  std::vector<int> test;
  int cursor = 0;
  for (int part = 0; part < 10; ++part) {
    const int size = base + (part < extra ? 1 : 0);
    for (int i = 0; i < size; ++i) {
      (part == fold ? test : train).push_back(perm[static_cast<std::size_t>(cursor + i)]);
    }
    cursor += size;
  }
  return {train, test};
}

namespace {

TaskDataset take_rows(const TaskDataset& src, const std::vector<int>& rows) {
  TaskDataset out;
  out.task_id = src.task_id;
  out.name = src.name;
  out.num_classes = src.num_classes;
  out.features = Matrix(static_cast<Eigen::Index>(rows.size()), src.features.cols());
  out.labels.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) = src.features.row(rows[i]);
    out.labels[i] = src.labels[static_cast<std::size_t>(rows[i])];
  }
  return out;
}

}  // namespace

std::pair<TaskDataset, TaskDataset> split_ten_fold(const TaskDataset& dataset, int fold,
                                                   std::uint64_t seed) {
  auto [train_idx, test_idx] = ten_fold_indices(dataset.size(), fold, seed);
  return {take_rows(dataset, train_idx), take_rows(dataset, test_idx)};
}

std::vector<RawDocument> load_raw_documents(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset file: " + path);

  std::vector<RawDocument> docs;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected <label>\\t<text>");
    }
    const std::string label = line.substr(0, tab);
    RawDocument doc;
    if (label == "positive") {
      doc.label = 1;
    } else if (label == "negative") {
      doc.label = 0;
    } else {
      throw ParseError(path + ":" + std::to_string(line_no) + ": unknown label '" + label + "'");
    }
    doc.text = line.substr(tab + 1);
    docs.push_back(std::move(doc));
  }
  return docs;
}

namespace {

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::istringstream stream(text);
  std::string token;
  while (stream >> token) {
    std::transform(token.begin(), token.end(), token.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    tokens.push_back(std::move(token));
  }
  return tokens;
}

}  // namespace

Vocabulary build_vocabulary(const std::vector<RawDocument>& docs, int vocab_size) {
  if (vocab_size < 1) throw ArgumentError("build_vocabulary: vocab_size must be positive");
  std::map<std::string, long> counts;
  for (const RawDocument& doc : docs) {
    for (const std::string& token : tokenize(doc.text)) ++counts[token];
  }
  std::vector<std::pair<std::string, long>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (static_cast<int>(ranked.size()) > vocab_size) {
    ranked.resize(static_cast<std::size_t>(vocab_size));
  }
  Vocabulary vocab;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    vocab.index.emplace(ranked[i].first, static_cast<int>(i));
  }
  return vocab;
}

Vector bow_counts(const std::string& text, const Vocabulary& vocab, int dim) {
  Vector counts = Vector::Zero(dim);
  for (const std::string& token : tokenize(text)) {
    auto it = vocab.index.find(token);
    if (it != vocab.index.end()) counts[it->second] += 1.0;
  }
  return counts;
}

Vector featurize(const std::string& text, const Vocabulary& vocab, int dim) {
  Vector counts = bow_counts(text, vocab, dim);
  const double norm = counts.norm();
  if (norm > 0.0) counts /= norm;
  return counts;
}

namespace {

TaskDataset featurize_documents(const std::vector<RawDocument>& docs, const Vocabulary& vocab,
                                int vocab_size, int task_id, const std::string& name) {
  TaskDataset task;
  task.task_id = task_id;
  task.name = name;
  task.num_classes = 2;
  task.features = Matrix(static_cast<Eigen::Index>(docs.size()), vocab_size);
  task.labels.resize(docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i) {
    task.features.row(static_cast<Eigen::Index>(i)) =
        featurize(docs[i].text, vocab, vocab_size).transpose();
    task.labels[i] = docs[i].label;
  }
  return task;
}

std::string stem_of(const std::string& path) {
  return std::filesystem::path(path).stem().string();
}

}  // namespace

TaskDataset load_text_dataset(const std::string& path, int vocab_size, int task_id) {
  const std::vector<RawDocument> docs = load_raw_documents(path);
  const Vocabulary vocab = build_vocabulary(docs, vocab_size);
  return featurize_documents(docs, vocab, vocab_size, task_id, stem_of(path));
}

std::vector<TaskDataset> load_text_directory(const std::string& dir, int vocab_size) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file()) files.push_back(entry.path().string());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no dataset files in directory: " + dir);
  std::vector<TaskDataset> tasks;
  for (std::size_t i = 0; i < files.size(); ++i) {
    tasks.push_back(load_text_dataset(files[i], vocab_size, static_cast<int>(i)));
  }
  return tasks;
}

TextTaskSplit load_text_task_split(const std::string& path, int vocab_size, int fold,
                                   std::uint64_t seed, int task_id) {
  const std::vector<RawDocument> docs = load_raw_documents(path);
  auto [train_idx, test_idx] = ten_fold_indices(static_cast<int>(docs.size()), fold, seed);

  std::vector<RawDocument> train_docs;
  for (int i : train_idx) train_docs.push_back(docs[static_cast<std::size_t>(i)]);
  std::vector<RawDocument> test_docs;
  for (int i : test_idx) test_docs.push_back(docs[static_cast<std::size_t>(i)]);

  // No test leakage: the vocabulary comes from the training documents only.
  const Vocabulary vocab = build_vocabulary(train_docs, vocab_size);
  TextTaskSplit split;
  split.train = featurize_documents(train_docs, vocab, vocab_size, task_id, stem_of(path));
  split.test = featurize_documents(test_docs, vocab, vocab_size, task_id, stem_of(path));
  return split;
}

}  // namespace ncmtl
