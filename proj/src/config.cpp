#include "ncmtl/config.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace ncmtl {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

struct Parser {
  std::string origin;
  std::vector<std::string> problems;

  void problem(const std::string& key, const std::string& what) {
    problems.push_back(key + ": " + what);
  }

  bool parse_int(const std::string& key, const std::string& value, int& out) {
    try {
      std::size_t used = 0;
      const int v = std::stoi(value, &used);
      if (used != value.size()) throw std::invalid_argument(value);
      out = v;
      return true;
    } catch (const std::exception&) {
      problem(key, "expected an integer, got '" + value + "'");
      return false;
    }
  }

  bool parse_u64(const std::string& key, const std::string& value, std::uint64_t& out) {
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(value, &used);
      if (used != value.size()) throw std::invalid_argument(value);
      out = static_cast<std::uint64_t>(v);
      return true;
    } catch (const std::exception&) {
      problem(key, "expected a non-negative integer, got '" + value + "'");
      return false;
    }
  }

  bool parse_real(const std::string& key, const std::string& value, double& out) {
    try {
      std::size_t used = 0;
      const double v = std::stod(value, &used);
      if (used != value.size()) throw std::invalid_argument(value);
      out = v;
      return true;
    } catch (const std::exception&) {
      problem(key, "expected a number, got '" + value + "'");
      return false;
    }
  }

  bool parse_int_list(const std::string& key, const std::string& value, std::vector<int>& out) {
    std::vector<int> items;
    std::stringstream stream(value);
    std::string piece;
    while (std::getline(stream, piece, ',')) {
      piece = trim(piece);
      if (piece.empty()) {
        problem(key, "empty list entry");
        return false;
      }
      int v = 0;
      if (!parse_int(key, piece, v)) return false;
      items.push_back(v);
    }
    out = std::move(items);
    return true;
  }
};

}  // namespace

RunConfig parse_run_config(const std::string& text, const std::string& origin) {
  RunConfig config;
  Parser p;
  p.origin = origin;

  std::istringstream stream(text);
  std::string line;
  int line_no = 0;
  while (std::getline(stream, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      p.problems.push_back(origin + ":" + std::to_string(line_no) +
                           ": expected 'key = value'");
      continue;
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));

    TrainConfig& t = config.train;
    DataConfig& d = config.data;
    if (key == "input_dim") {
      p.parse_int(key, value, t.input_dim);
    } else if (key == "trunk_dims") {
      p.parse_int_list(key, value, t.trunk_dims);
    } else if (key == "cluster_hidden_dims") {
      p.parse_int_list(key, value, t.cluster_hidden_dims);
    } else if (key == "cluster_counts") {
      p.parse_int_list(key, value, t.cluster_counts);
    } else if (key == "num_tasks") {
      p.parse_int(key, value, t.num_tasks);
    } else if (key == "num_classes") {
      p.parse_int(key, value, t.num_classes);
    } else if (key == "alpha") {
      p.parse_real(key, value, t.alpha);
    } else if (key == "learning_rate") {
      p.parse_real(key, value, t.learning_rate);
    } else if (key == "optimizer") {
      try {
        t.optimizer = optimizer_from_string(value);
      } catch (const ArgumentError& e) {
        p.problem(key, e.what());
      }
    } else if (key == "batch_size") {
      p.parse_int(key, value, t.batch_size);
    } else if (key == "freeze_after_epochs") {
      if (value == "never") {
        t.freeze_after_epochs = -1;
      } else {
        p.parse_int(key, value, t.freeze_after_epochs);
      }
    } else if (key == "epochs") {
      p.parse_int(key, value, t.epochs);
    } else if (key == "seed") {
      p.parse_u64(key, value, t.seed);
    } else if (key == "regime") {
      try {
        t.regime = regime_from_string(value);
      } catch (const ArgumentError& e) {
        p.problem(key, e.what());
      }
    } else if (key == "cluster_grad") {
      try {
        t.cluster_grad = cluster_grad_from_string(value);
      } catch (const ArgumentError& e) {
        p.problem(key, e.what());
      }
    } else if (key == "batching") {
      try {
        t.batching = batching_from_string(value);
      } catch (const ArgumentError& e) {
        p.problem(key, e.what());
      }
    } else if (key == "data") {
      if (value == "synthetic") {
        d.kind = DataConfig::Kind::synthetic;
      } else if (value == "text") {
        d.kind = DataConfig::Kind::text;
      } else {
        p.problem(key, "expected 'synthetic' or 'text', got '" + value + "'");
      }
    } else if (key == "data_dir") {
      d.data_dir = value;
    } else if (key == "vocab_size") {
      p.parse_int(key, value, d.vocab_size);
    } else if (key == "fold") {
      p.parse_int(key, value, d.fold);
    } else if (key == "synthetic_num_groups") {
      p.parse_int(key, value, d.synthetic_num_groups);
    } else if (key == "synthetic_examples_per_task") {
      p.parse_int(key, value, d.synthetic_examples_per_task);
    } else if (key == "synthetic_group_separation") {
      p.parse_real(key, value, d.synthetic_group_separation);
    } else if (key == "synthetic_within_group_noise") {
      p.parse_real(key, value, d.synthetic_within_group_noise);
    } else if (key == "synthetic_label_noise") {
      p.parse_real(key, value, d.synthetic_label_noise);
    } else if (key == "synthetic_seed") {
      std::uint64_t v = 0;
      if (p.parse_u64(key, value, v)) d.synthetic_seed = v;
    } else {
      p.problem(key, "unknown key");
    }
  }

  if (config.data.kind == DataConfig::Kind::text && config.data.data_dir.empty()) {
    p.problem("data_dir", "required when data = text");
  }
  if (config.data.fold < 0 || config.data.fold >= 10) {
    p.problem("fold", "must lie in [0, 10)");
  }
  if (config.data.vocab_size < 1) {
    p.problem("vocab_size", "must be >= 1");
  }

  if (!p.problems.empty()) {
    std::ostringstream msg;
    msg << origin << ": invalid config:";
    for (const std::string& s : p.problems) msg << "\n  - " << s;
    throw ConfigError(msg.str());
  }
  return config;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_run_config(buffer.str(), path);
}

std::string serialize_run_config(const RunConfig& config) {
  const TrainConfig& t = config.train;
  const DataConfig& d = config.data;
  std::ostringstream out;
  auto list = [](const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) s += ", ";
      s += std::to_string(v[i]);
    }
    return s;
  };
  out << "# ncmtl run configuration\n";
  out << "input_dim = " << t.input_dim << "\n";
  out << "trunk_dims = " << list(t.trunk_dims) << "\n";
  out << "cluster_hidden_dims = " << list(t.cluster_hidden_dims) << "\n";
  out << "cluster_counts = " << list(t.cluster_counts) << "\n";
  out << "num_tasks = " << t.num_tasks << "\n";
  out << "num_classes = " << t.num_classes << "\n";
  out << "alpha = " << format_double(t.alpha) << "\n";
  out << "learning_rate = " << format_double(t.learning_rate) << "\n";
  out << "optimizer = " << to_string(t.optimizer) << "\n";
  out << "batch_size = " << t.batch_size << "\n";
  if (t.freeze_after_epochs < 0) {
    out << "freeze_after_epochs = never\n";
  } else {
    out << "freeze_after_epochs = " << t.freeze_after_epochs << "\n";
  }
  out << "epochs = " << t.epochs << "\n";
  out << "seed = " << t.seed << "\n";
  out << "regime = " << to_string(t.regime) << "\n";
  out << "cluster_grad = " << to_string(t.cluster_grad) << "\n";
  out << "batching = " << to_string(t.batching) << "\n";
  out << "data = " << (d.kind == DataConfig::Kind::synthetic ? "synthetic" : "text") << "\n";
  if (!d.data_dir.empty()) out << "data_dir = " << d.data_dir << "\n";
  out << "vocab_size = " << d.vocab_size << "\n";
  out << "fold = " << d.fold << "\n";
  out << "synthetic_num_groups = " << d.synthetic_num_groups << "\n";
  out << "synthetic_examples_per_task = " << d.synthetic_examples_per_task << "\n";
  out << "synthetic_group_separation = " << format_double(d.synthetic_group_separation) << "\n";
  out << "synthetic_within_group_noise = " << format_double(d.synthetic_within_group_noise)
      << "\n";
  out << "synthetic_label_noise = " << format_double(d.synthetic_label_noise) << "\n";
  out << "synthetic_seed = " << (d.synthetic_seed ? *d.synthetic_seed : t.seed) << "\n";
  return out.str();
}

void finalize_config(RunConfig& config) {
  if (config.data.kind != DataConfig::Kind::text) return;
  namespace fs = std::filesystem;
  if (!fs::is_directory(config.data.data_dir)) {
    throw IoError("data_dir is not a directory: " + config.data.data_dir);
  }
  int files = 0;
  for (const auto& entry : fs::directory_iterator(config.data.data_dir)) {
    if (entry.is_regular_file()) ++files;
  }
  if (files == 0) throw IoError("no dataset files in " + config.data.data_dir);
  if (config.train.num_tasks == 0) config.train.num_tasks = files;
  if (config.train.input_dim == 0) config.train.input_dim = config.data.vocab_size;
}

DataBundle materialize_data(const RunConfig& config) {
  DataBundle bundle;
  const std::uint64_t data_seed =
      config.data.synthetic_seed ? *config.data.synthetic_seed : config.train.seed;

  if (config.data.kind == DataConfig::Kind::synthetic) {
    SyntheticSpec spec;
    spec.num_tasks = config.train.num_tasks;
    spec.num_groups = config.data.synthetic_num_groups;
    spec.input_dim = config.train.input_dim;
    spec.examples_per_task = config.data.synthetic_examples_per_task;
    spec.group_separation = config.data.synthetic_group_separation;
    spec.within_group_noise = config.data.synthetic_within_group_noise;
    spec.label_noise_rate = config.data.synthetic_label_noise;
    spec.seed = data_seed;
    SyntheticTasks generated = generate_synthetic_tasks(spec);
    bundle.group_labels = std::move(generated.group_labels);
    for (TaskDataset& task : generated.tasks) {
      auto [train, test] = split_ten_fold(task, config.data.fold, data_seed);
      bundle.task_names.push_back(task.name);
      bundle.train.push_back(std::move(train));
      bundle.test.push_back(std::move(test));
    }
    return bundle;
  }

  namespace fs = std::filesystem;
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(config.data.data_dir)) {
    if (entry.is_regular_file()) files.push_back(entry.path().string());
  }
  std::sort(files.begin(), files.end());
  if (static_cast<int>(files.size()) != config.train.num_tasks) {
    throw ConfigError("num_tasks = " + std::to_string(config.train.num_tasks) +
                      " but data_dir holds " + std::to_string(files.size()) + " files");
  }
  for (std::size_t i = 0; i < files.size(); ++i) {
    TextTaskSplit split = load_text_task_split(files[i], config.data.vocab_size,
                                               config.data.fold, data_seed,
                                               static_cast<int>(i));
    bundle.task_names.push_back(split.train.name);
    bundle.train.push_back(std::move(split.train));
    bundle.test.push_back(std::move(split.test));
  }
  return bundle;
}

}  // namespace ncmtl
