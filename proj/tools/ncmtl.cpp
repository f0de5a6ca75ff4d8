#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ncmtl/checkpoint.hpp"
#include "ncmtl/config.hpp"
#include "ncmtl/io.hpp"
#include "ncmtl/trainer.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitDiverged = 2;

int cmd_train(const std::string& config_path, const std::string& out_dir,
              std::optional<std::uint64_t> seed_override) {
  ncmtl::RunConfig config = ncmtl::load_run_config(config_path);
  if (seed_override) config.train.seed = *seed_override;
  ncmtl::finalize_config(config);
  ncmtl::validate_config(config.train);

  const ncmtl::DataBundle data = ncmtl::materialize_data(config);
  const ncmtl::TrainResult result = ncmtl::run_training(config.train, data.train, data.test);

  fs::create_directories(out_dir);
  const fs::path out(out_dir);
  ncmtl::atomic_write_file((out / "config.txt").string(), ncmtl::serialize_run_config(config));
  ncmtl::atomic_write_file((out / "metrics.csv").string(), ncmtl::metrics_csv(result.history));
  ncmtl::atomic_write_file((out / "clusters.json").string(), ncmtl::clusters_json(result.dumps));
  ncmtl::Checkpoint ckpt;
  ckpt.params = result.params;
  ckpt.cluster_states = result.cluster_states;
  ckpt.task_names = data.task_names;
  ckpt.regime = config.train.regime;
  ncmtl::save_checkpoint((out / "model.ckpt").string(), ckpt);

  if (result.diverged) {
    std::cerr << "run diverged: " << result.divergence_reason
              << " (partial artifacts written to " << out_dir << ")\n";
    return kExitDiverged;
  }
  std::cout << "artifacts written to " << out_dir << "\n";
  return kExitOk;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& data_path,
             const std::string& out_csv) {
  const ncmtl::Checkpoint ckpt = ncmtl::load_checkpoint(checkpoint_path);

  std::vector<ncmtl::TaskDataset> test_sets;
  if (fs::is_directory(data_path)) {
    test_sets = ncmtl::load_text_directory(
        data_path, static_cast<int>(ckpt.params.input_dim()));
  } else {
    ncmtl::RunConfig config = ncmtl::load_run_config(data_path);
    ncmtl::finalize_config(config);
    test_sets = ncmtl::materialize_data(config).test;
  }

  if (static_cast<int>(test_sets.size()) != ckpt.params.num_tasks()) {
    throw ncmtl::IoError("checkpoint was trained on " +
                         std::to_string(ckpt.params.num_tasks()) + " tasks but data has " +
                         std::to_string(test_sets.size()));
  }
  for (const ncmtl::TaskDataset& task : test_sets) {
    if (task.features.cols() != ckpt.params.input_dim()) {
      throw ncmtl::IoError("dataset '" + task.name + "' feature dim " +
                           std::to_string(task.features.cols()) +
                           " does not match checkpoint input dim " +
                           std::to_string(ckpt.params.input_dim()));
    }
  }

  const ncmtl::AccuracyTable table =
      ncmtl::evaluate(ckpt.params, ckpt.cluster_states, test_sets);
  std::cout << ncmtl::accuracy_table_text(table, ckpt.task_names);
  ncmtl::atomic_write_file(out_csv, ncmtl::accuracy_csv(table, ckpt.task_names));
  return kExitOk;
}

int cmd_dump_clusters(const std::string& checkpoint_path) {
  const ncmtl::Checkpoint ckpt = ncmtl::load_checkpoint(checkpoint_path);
  const std::vector<ncmtl::LayerDump> dumps =
      ncmtl::dump_cluster_layers(ckpt.params, ckpt.cluster_states);

  auto task_name = [&ckpt](int j) {
    if (j >= 0 && j < static_cast<int>(ckpt.task_names.size())) return ckpt.task_names[j];
    return "task" + std::to_string(j);
  };

  for (const ncmtl::LayerDump& layer : dumps) {
    std::cout << "layer " << layer.layer << " (K=" << layer.cluster_count
              << (layer.frozen ? ", frozen" : ", active") << ")\n";
    for (int k = 0; k < layer.cluster_count; ++k) {
      std::string members;
      for (std::size_t j = 0; j < layer.assignments.size(); ++j) {
        if (layer.assignments[j] != k) continue;
        if (!members.empty()) members += ", ";
        members += task_name(static_cast<int>(j));
      }
      if (members.empty()) continue;
      std::cout << "  cluster " << k << ": {" << members << "}\n";
    }
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Network-clustering multi-task trainer"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "run";
  std::optional<std::uint64_t> seed_override;
  CLI::App* train = app.add_subcommand("train", "train a model from a config file");
  train->add_option("--config", config_path, "path to the run configuration")->required();
  train->add_option("--out", out_dir, "output directory for run artifacts");
  train->add_option("--seed", seed_override, "override the config seed");

  std::string checkpoint_path;
  std::string data_path;
  std::string eval_out = "accuracy.csv";
  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on test data");
  eval->add_option("--checkpoint", checkpoint_path, "path to model.ckpt")->required();
  eval->add_option("--data", data_path,
                   "run config (test folds are rebuilt) or a directory of task files")
      ->required();
  eval->add_option("--out", eval_out, "where to write the accuracy CSV");

  std::string dump_checkpoint;
  CLI::App* dump = app.add_subcommand("dump-clusters", "print cluster membership per layer");
  dump->add_option("--checkpoint", dump_checkpoint, "path to model.ckpt")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(config_path, out_dir, seed_override);
    if (eval->parsed()) return cmd_eval(checkpoint_path, data_path, eval_out);
    if (dump->parsed()) return cmd_dump_clusters(dump_checkpoint);
  } catch (const ncmtl::DivergedError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitDiverged;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitValidation;
  }
  return kExitOk;
}
