#include <doctest.h>

#include <cmath>
#include <limits>

#include "ncmtl/config.hpp"
#include "ncmtl/trainer.hpp"
#include "support/test_helpers.hpp"

using namespace ncmtl;

namespace {

// Two scalar slots {1.0, 3.0}, zeroed heads so no classification gradient
// reaches the slots.
TrainState scalar_slot_state(const TrainConfig& config) {
  TrainState state;
  ModelSpec spec = model_spec_from_config(config);
  Rng rng = make_rng(config.seed, 1);
  state.params = build_model(spec, rng);
  state.params.cluster_layers[0].slots[0].weights(0, 0) = 1.0;
  state.params.cluster_layers[0].slots[0].bias.setZero();
  state.params.cluster_layers[0].slots[1].weights(0, 0) = 3.0;
  state.params.cluster_layers[0].slots[1].bias.setZero();
  for (DenseLayer& head : state.params.heads) {
    head.weights.setZero();
    head.bias.setZero();
  }
  ClusterState cs;
  cs.assignments = {0, 0};
  cs.centroids = {Vector{{2.0, 0.0}}};
  state.cluster_states.push_back(std::move(cs));
  state.optimizer = make_optimizer_state(state.params, config.optimizer);
  state.data_rng = make_rng(config.seed, 2);
  state.cluster_rng = make_rng(config.seed, 3);
  return state;
}

TrainConfig toy_config() {
  TrainConfig config;
  config.input_dim = 1;
  config.trunk_dims = {};
  config.cluster_hidden_dims = {1};
  config.cluster_counts = {1};
  config.num_tasks = 2;
  config.num_classes = 2;
  config.alpha = 0.0;
  config.learning_rate = 0.1;
  config.optimizer = OptimizerKind::sgd;
  config.batch_size = 4;
  config.freeze_after_epochs = -1;
  config.epochs = 1;
  config.seed = 5;
  config.regime = Regime::cluster;
  return config;
}

TaskBatch two_task_batch() {
  TaskBatch batch;
  batch.examples.push_back({Vector::Constant(1, 0.5), 0, 0});
  batch.examples.push_back({Vector::Constant(1, -0.5), 1, 0});
  batch.examples.push_back({Vector::Constant(1, 0.25), 0, 1});
  batch.examples.push_back({Vector::Constant(1, -0.25), 1, 1});
  return batch;
}

TrainConfig synthetic_config(Regime regime, std::vector<int> cluster_counts) {
  TrainConfig config;
  config.input_dim = 6;
  config.trunk_dims = {6};
  config.cluster_hidden_dims = {5, 4};
  config.cluster_counts = std::move(cluster_counts);
  config.num_tasks = 3;
  config.num_classes = 2;
  config.alpha = 0.1;
  config.learning_rate = 1e-3;
  config.optimizer = OptimizerKind::adam;
  config.batch_size = 8;
  config.freeze_after_epochs = -1;
  config.epochs = 3;
  config.seed = 11;
  config.regime = regime;
  return config;
}

DataBundle small_synthetic_bundle(int num_tasks, int input_dim, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.num_tasks = num_tasks;
  spec.num_groups = std::min(3, num_tasks);
  spec.input_dim = input_dim;
  spec.examples_per_task = 60;
  spec.group_separation = 8.0;
  spec.within_group_noise = 1.0;
  spec.label_noise_rate = 0.0;
  spec.seed = seed;
  SyntheticTasks tasks = generate_synthetic_tasks(spec);
  DataBundle bundle;
  bundle.group_labels = tasks.group_labels;
  for (TaskDataset& task : tasks.tasks) {
    auto [train, test] = split_ten_fold(task, 0, seed);
    bundle.task_names.push_back(task.name);
    bundle.train.push_back(std::move(train));
    bundle.test.push_back(std::move(test));
  }
  return bundle;
}

}  // namespace

TEST_CASE("total_loss composes the two terms") {
  CHECK(total_loss(1.7, 42.0, 0.0) == 1.7);
  CHECK(total_loss(1.0, 2.0, 0.5) == 2.0);
}

TEST_CASE("freeze_check fires at the configured epoch") {
  TrainConfig config;
  config.freeze_after_epochs = 4;
  CHECK_FALSE(freeze_check(3, config));
  CHECK(freeze_check(4, config));
  CHECK(freeze_check(9, config));

  config.freeze_after_epochs = 0;
  CHECK(freeze_check(0, config));  // frozen from the first batch

  config.freeze_after_epochs = -1;
  CHECK_FALSE(freeze_check(1000, config));
}

TEST_CASE("clustering alone averages slots into their centroid") {
  const TrainConfig config = toy_config();
  TrainState state = scalar_slot_state(config);

  const BatchMetrics metrics = train_batch(two_task_batch(), state, config);

  // Zeroed heads block any classification gradient into the slots, and
  // alpha = 0 removes the clustering gradient, so only the K=1 clustering
  // step acts: both slots become the mean 2.0.
  CHECK(state.params.cluster_layers[0].slots[0].weights(0, 0) == 2.0);
  CHECK(state.params.cluster_layers[0].slots[1].weights(0, 0) == 2.0);
  CHECK(clustering_loss_layer(state.params.cluster_layers[0], state.cluster_states[0]) ==
        0.0);
  CHECK(metrics.loss_total == metrics.loss_lp);
}

TEST_CASE("specific regime slots move by their gradients only") {
  TrainConfig config = synthetic_config(Regime::specific, {1, 1});
  config.optimizer = OptimizerKind::sgd;
  TrainState state = init_train_state(config);

  TaskBatch batch;
  Rng rng = make_rng(77);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int e = 0; e < 6; ++e) {
    Example ex;
    ex.features = Vector(6);
    for (int d = 0; d < 6; ++d) ex.features[d] = noise(rng);
    ex.task_id = e % 3;
    ex.label = e % 2;
    batch.examples.push_back(std::move(ex));
  }

  // Expected slots: one plain SGD step on the classification gradient.
  const ModelParams before = state.params;
  const ForwardCache cache = forward_batch(batch, before);
  const GradientSet grads =
      backward(batch, cache, before, LossTerms::lp_only, state.cluster_states, config.alpha);

  train_batch(batch, state, config);

  for (std::size_t i = 0; i < before.cluster_layers.size(); ++i) {
    for (std::size_t j = 0; j < before.cluster_layers[i].slots.size(); ++j) {
      const Matrix expected = before.cluster_layers[i].slots[j].weights -
                              config.learning_rate * grads.slots[i][j].weights;
      CHECK(state.params.cluster_layers[i].slots[j].weights == expected);
    }
  }
  // Different tasks received different gradients, so slots are no longer
  // equal: nothing re-equalised them.
  CHECK_FALSE(state.params.cluster_layers[0].slots[0].weights ==
              state.params.cluster_layers[0].slots[1].weights);
}

TEST_CASE("train_batch is bitwise deterministic") {
  const TrainConfig config = synthetic_config(Regime::cluster, {2, 3});

  auto run_once = [&config]() {
    TrainState state = init_train_state(config);
    TaskBatch batch;
    Rng rng = make_rng(88);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (int e = 0; e < 8; ++e) {
      Example ex;
      ex.features = Vector(6);
      for (int d = 0; d < 6; ++d) ex.features[d] = noise(rng);
      ex.task_id = e % 3;
      ex.label = e % 2;
      batch.examples.push_back(std::move(ex));
    }
    train_batch(batch, state, config);
    return state;
  };

  const TrainState a = run_once();
  const TrainState b = run_once();
  for (std::size_t i = 0; i < a.params.cluster_layers.size(); ++i) {
    for (std::size_t j = 0; j < a.params.cluster_layers[i].slots.size(); ++j) {
      CHECK(a.params.cluster_layers[i].slots[j].weights ==
            b.params.cluster_layers[i].slots[j].weights);
    }
    CHECK(a.cluster_states[i].assignments == b.cluster_states[i].assignments);
  }
  for (std::size_t i = 0; i < a.params.trunk.size(); ++i) {
    CHECK(a.params.trunk[i].weights == b.params.trunk[i].weights);
  }
}

TEST_CASE("unfrozen batches restore the post-clustering invariant") {
  const TrainConfig config = synthetic_config(Regime::cluster, {2, 2});
  TrainState state = init_train_state(config);

  Rng rng = make_rng(99);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int b = 0; b < 10; ++b) {
    TaskBatch batch;
    for (int e = 0; e < 6; ++e) {
      Example ex;
      ex.features = Vector(6);
      for (int d = 0; d < 6; ++d) ex.features[d] = noise(rng);
      ex.task_id = e % 3;
      ex.label = (e + b) % 2;
      batch.examples.push_back(std::move(ex));
    }
    train_batch(batch, state, config);

    for (std::size_t i = 0; i < state.params.cluster_layers.size(); ++i) {
      const ClusterLayerBank& bank = state.params.cluster_layers[i];
      const ClusterState& cs = state.cluster_states[i];
      CHECK(clustering_loss_layer(bank, cs) <= 1e-12);
      for (int ja = 0; ja < bank.num_tasks(); ++ja) {
        for (int jb = ja + 1; jb < bank.num_tasks(); ++jb) {
          if (cs.assignments[static_cast<std::size_t>(ja)] !=
              cs.assignments[static_cast<std::size_t>(jb)]) {
            continue;
          }
          CHECK(bank.slots[static_cast<std::size_t>(ja)].weights ==
                bank.slots[static_cast<std::size_t>(jb)].weights);
          CHECK(bank.slots[static_cast<std::size_t>(ja)].bias ==
                bank.slots[static_cast<std::size_t>(jb)].bias);
        }
      }
    }
  }
}

TEST_CASE("train_batch rejects an empty batch") {
  const TrainConfig config = synthetic_config(Regime::cluster, {2, 2});
  TrainState state = init_train_state(config);
  TaskBatch empty;
  CHECK_THROWS_AS(train_batch(empty, state, config), ArgumentError);
}

TEST_CASE("logged losses decompose exactly") {
  TrainConfig config = synthetic_config(Regime::cluster, {2, 3});
  config.epochs = 2;
  const DataBundle data = small_synthetic_bundle(3, 6, 21);
  const TrainResult result = run_training(config, data.train, data.test);
  REQUIRE_FALSE(result.diverged);
  REQUIRE_FALSE(result.batch_losses.empty());
  for (const BatchLossLog& log : result.batch_losses) {
    CHECK(std::abs(log.total - (log.lp + config.alpha * log.lc)) <= 1e-12);
  }
}

TEST_CASE("K=N cluster regime reproduces the specific regime exactly") {
  const DataBundle data = small_synthetic_bundle(3, 6, 31);

  TrainConfig cluster_config = synthetic_config(Regime::cluster, {3, 3});  // K = N
  TrainConfig specific_config = synthetic_config(Regime::specific, {3, 3});

  const TrainResult a = run_training(cluster_config, data.train, data.test);
  const TrainResult b = run_training(specific_config, data.train, data.test);
  REQUIRE_FALSE(a.diverged);
  REQUIRE_FALSE(b.diverged);

  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    const MetricsRecord& ra = a.history[i];
    const MetricsRecord& rb = b.history[i];
    CHECK(ra.split == rb.split);
    REQUIRE(ra.accuracy.has_value() == rb.accuracy.has_value());
    if (ra.accuracy) CHECK(std::abs(*ra.accuracy - *rb.accuracy) <= 1e-12);
    CHECK(std::abs(ra.loss_lp - rb.loss_lp) <= 1e-12);
    CHECK(std::abs(ra.loss_lc - rb.loss_lc) <= 1e-12);
  }
}

TEST_CASE("K=1 with sgd matches the mean-gradient shared reference") {
  TrainConfig config;
  config.input_dim = 4;
  config.trunk_dims = {4};
  config.cluster_hidden_dims = {4};
  config.cluster_counts = {1};
  config.num_tasks = 3;
  config.num_classes = 2;
  config.alpha = 0.1;
  config.learning_rate = 0.05;
  config.optimizer = OptimizerKind::sgd;
  config.freeze_after_epochs = -1;
  config.epochs = 1;
  config.seed = 41;
  config.regime = Regime::cluster;
  config.cluster_grad = ClusterGrad::lp_only;

  TrainState state = init_train_state(config);
  ModelParams reference = state.params;  // starts equal after init clustering

  Rng rng = make_rng(404);
  std::normal_distribution<double> noise(0.0, 1.0);
  double worst = 0.0;
  for (int b = 0; b < 20; ++b) {
    TaskBatch batch;
    for (int e = 0; e < 6; ++e) {  // two examples per task: full coverage
      Example ex;
      ex.features = Vector(4);
      for (int d = 0; d < 4; ++d) ex.features[d] = noise(rng);
      ex.task_id = e % 3;
      ex.label = (e + b) % 2;
      batch.examples.push_back(std::move(ex));
    }

    // Reference: shared slot updated with the arithmetic mean of the
    // per-task slot gradients; trunk and heads follow plain SGD.
    const ForwardCache cache = forward_batch(batch, reference);
    const GradientSet grads =
        backward(batch, cache, reference, LossTerms::lp_only, {}, 0.0);
    for (std::size_t i = 0; i < reference.trunk.size(); ++i) {
      reference.trunk[i].weights -= config.learning_rate * grads.trunk[i].weights;
      reference.trunk[i].bias -= config.learning_rate * grads.trunk[i].bias;
    }
    for (std::size_t j = 0; j < reference.heads.size(); ++j) {
      reference.heads[j].weights -= config.learning_rate * grads.heads[j].weights;
      reference.heads[j].bias -= config.learning_rate * grads.heads[j].bias;
    }
    for (std::size_t i = 0; i < reference.cluster_layers.size(); ++i) {
      TensorGrad mean = grads.slots[i][0];
      for (std::size_t j = 1; j < grads.slots[i].size(); ++j) {
        mean.weights += grads.slots[i][j].weights;
        mean.bias += grads.slots[i][j].bias;
      }
      const double scale = 1.0 / static_cast<double>(grads.slots[i].size());
      mean.weights *= scale;
      mean.bias *= scale;
      for (TaskSlot& slot : reference.cluster_layers[i].slots) {
        slot.weights -= config.learning_rate * mean.weights;
        slot.bias -= config.learning_rate * mean.bias;
      }
    }

    train_batch(batch, state, config);

    for (std::size_t i = 0; i < reference.cluster_layers.size(); ++i) {
      for (std::size_t j = 0; j < reference.cluster_layers[i].slots.size(); ++j) {
        const double diff =
            (state.params.cluster_layers[i].slots[j].weights -
             reference.cluster_layers[i].slots[j].weights)
                .cwiseAbs()
                .maxCoeff();
        worst = std::max(worst, diff);
      }
    }
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("assignments stay fixed once frozen") {
  TrainConfig config = synthetic_config(Regime::cluster, {2, 2});
  config.freeze_after_epochs = 1;
  config.epochs = 4;
  const DataBundle data = small_synthetic_bundle(3, 6, 51);
  const TrainResult result = run_training(config, data.train, data.test);
  REQUIRE_FALSE(result.diverged);
  REQUIRE(result.dumps.size() == 4);

  for (std::size_t epoch = 1; epoch < result.dumps.size(); ++epoch) {
    for (std::size_t layer = 0; layer < result.dumps[epoch].layers.size(); ++layer) {
      CHECK(result.dumps[epoch].layers[layer].assignments ==
            result.dumps[1].layers[layer].assignments);
      CHECK(result.dumps[epoch].layers[layer].frozen == true);
    }
  }
  CHECK(result.dumps[0].layers[0].frozen == false);
}

TEST_CASE("run_training is reproducible for a fixed seed") {
  TrainConfig config = synthetic_config(Regime::cluster, {2, 3});
  config.epochs = 2;
  const DataBundle data = small_synthetic_bundle(3, 6, 61);
  const TrainResult a = run_training(config, data.train, data.test);
  const TrainResult b = run_training(config, data.train, data.test);

  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    REQUIRE(a.history[i].accuracy.has_value() == b.history[i].accuracy.has_value());
    if (a.history[i].accuracy) CHECK(*a.history[i].accuracy == *b.history[i].accuracy);
    CHECK(a.history[i].loss_lp == b.history[i].loss_lp);
    CHECK(a.history[i].loss_lc == b.history[i].loss_lc);
  }
  for (std::size_t i = 0; i < a.params.cluster_layers.size(); ++i) {
    for (std::size_t j = 0; j < a.params.cluster_layers[i].slots.size(); ++j) {
      CHECK(a.params.cluster_layers[i].slots[j].weights ==
            b.params.cluster_layers[i].slots[j].weights);
    }
  }
}

TEST_CASE("a diverging run flags itself and keeps partial history") {
  TrainConfig config = synthetic_config(Regime::cluster, {2, 2});
  config.optimizer = OptimizerKind::sgd;
  // An unbounded step turns the very first update non-finite.
  config.learning_rate = std::numeric_limits<double>::infinity();
  config.epochs = 2;
  const DataBundle data = small_synthetic_bundle(3, 6, 71);
  const TrainResult result = run_training(config, data.train, data.test);
  CHECK(result.diverged);
  CHECK_FALSE(result.divergence_reason.empty());
  CHECK_FALSE(result.history.empty());  // epoch-0 train rows survive
}

TEST_CASE("evaluate reports per-task accuracy and the macro average") {
  // Heads biased toward class 0: the model predicts 0 everywhere.
  ModelSpec spec;
  spec.input_dim = 2;
  spec.trunk_dims = {};
  spec.cluster_hidden_dims = {};
  spec.cluster_counts = {};
  spec.num_tasks = 2;
  spec.num_classes = 2;
  Rng rng = make_rng(81);
  ModelParams params = build_model(spec, rng);
  for (DenseLayer& head : params.heads) {
    head.weights.setZero();
    head.bias = Vector{{5.0, -5.0}};
  }

  TaskDataset all_zero;
  all_zero.task_id = 0;
  all_zero.features = Matrix::Random(10, 2);
  all_zero.labels.assign(10, 0);

  TaskDataset all_one = all_zero;
  all_one.task_id = 1;
  all_one.labels.assign(10, 1);

  const AccuracyTable table = evaluate(params, {}, {all_zero, all_one});
  REQUIRE(table.per_task.size() == 2);
  CHECK(*table.per_task[0] == 1.0);   // every prediction correct
  CHECK(*table.per_task[1] == 0.0);   // inverted labels on a binary task
  CHECK(*table.average == doctest::Approx(0.5));

  TaskDataset empty;
  empty.task_id = 1;
  empty.features = Matrix(0, 2);
  const AccuracyTable with_empty = evaluate(params, {}, {all_zero, empty});
  CHECK(with_empty.per_task[0].has_value());
  CHECK_FALSE(with_empty.per_task[1].has_value());
  CHECK(*with_empty.average == 1.0);  // average over present rows only
}

TEST_CASE("config validation names every bad field") {
  TrainConfig config;
  config.input_dim = 0;
  config.num_tasks = 2;
  config.cluster_hidden_dims = {4};
  config.cluster_counts = {5};  // K > N
  config.epochs = 0;
  try {
    validate_config(config);
    FAIL("expected ConfigError");
  } catch (const ConfigError& err) {
    const std::string msg = err.what();
    CHECK(msg.find("input_dim") != std::string::npos);
    CHECK(msg.find("cluster_counts") != std::string::npos);
    CHECK(msg.find("epochs") != std::string::npos);
  }
}
