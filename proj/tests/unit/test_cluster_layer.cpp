#include <doctest.h>

#include <vector>

#include "ncmtl/cluster_bank.hpp"
#include "support/test_helpers.hpp"

using namespace ncmtl;

namespace {

// Bank of N scalar slots (1x1 weight plus one bias entry).
ClusterLayerBank scalar_bank(const std::vector<double>& weight_values, int cluster_count) {
  ClusterLayerBank bank;
  bank.cluster_count = cluster_count;
  for (double v : weight_values) {
    TaskSlot slot;
    slot.weights = Matrix::Constant(1, 1, v);
    slot.bias = Vector::Zero(1);
    bank.slots.push_back(std::move(slot));
  }
  return bank;
}

ClusterState identity_state(const ClusterLayerBank& bank) {
  ClusterState state;
  for (int j = 0; j < bank.num_tasks(); ++j) {
    state.assignments.push_back(j);
    state.centroids.push_back(flatten_slot(bank, j));
  }
  return state;
}

}  // namespace

TEST_CASE("flatten orders weight rows then bias") {
  TaskSlot slot;
  slot.weights = Matrix(2, 2);
  slot.weights << 1, 2, 3, 4;
  slot.bias = Vector{{5.0, 6.0}};
  const Vector flat = flatten_slot(slot.weights, slot.bias);
  const Vector expected{{1.0, 2.0, 3.0, 4.0, 5.0, 6.0}};
  CHECK(flat == expected);
}

TEST_CASE("flatten and unflatten are exact inverses") {
  Rng rng = make_rng(12);
  std::normal_distribution<double> noise(0.0, 1.0);
  Matrix w(3, 4);
  for (Eigen::Index r = 0; r < 3; ++r) {
    for (Eigen::Index c = 0; c < 4; ++c) w(r, c) = noise(rng);
  }
  Vector b(3);
  for (Eigen::Index i = 0; i < 3; ++i) b[i] = noise(rng);

  const Vector flat = flatten_slot(w, b);
  Matrix w2(3, 4);
  Vector b2(3);
  unflatten_slot(flat, w2, b2);
  CHECK(w2 == w);
  CHECK(b2 == b);
}

TEST_CASE("identical slots flatten identically") {
  const ClusterLayerBank bank = scalar_bank({1.5, 1.5}, 1);
  CHECK(flatten_slot(bank, 0) == flatten_slot(bank, 1));
}

TEST_CASE("replacement with a single centroid averages the slots") {
  ClusterLayerBank bank = scalar_bank({1.0, 3.0}, 1);
  ClusterState state;
  state.assignments = {0, 0};
  state.centroids = {Vector{{2.0, 0.0}}};  // hand mean of (1,0) and (3,0)
  replace_with_centroids(bank, state);
  CHECK(bank.slots[0].weights(0, 0) == 2.0);
  CHECK(bank.slots[1].weights(0, 0) == 2.0);
  CHECK(bank.slots[0].bias[0] == 0.0);
}

TEST_CASE("replacement with singleton clusters is the identity") {
  ClusterLayerBank bank = scalar_bank({1.0, 2.0, -0.5}, 3);
  const ClusterState state = identity_state(bank);
  const ClusterLayerBank before = bank;
  replace_with_centroids(bank, state);
  for (int j = 0; j < bank.num_tasks(); ++j) {
    CHECK(bank.slots[static_cast<std::size_t>(j)].weights ==
          before.slots[static_cast<std::size_t>(j)].weights);
    CHECK(bank.slots[static_cast<std::size_t>(j)].bias ==
          before.slots[static_cast<std::size_t>(j)].bias);
  }
}

TEST_CASE("replacement leaves already-equal slots unchanged for any K") {
  for (int k : {1, 2, 3}) {
    ClusterLayerBank bank = scalar_bank({0.7, 0.7, 0.7}, k);
    ClusterState state;
    state.assignments = {0 % k, 1 % k, 2 % k};
    state.centroids.assign(static_cast<std::size_t>(k), flatten_slot(bank, 0));
    replace_with_centroids(bank, state);
    for (const TaskSlot& slot : bank.slots) {
      CHECK(slot.weights(0, 0) == 0.7);
    }
  }
}

TEST_CASE("replacement is idempotent") {
  const auto scenario = testing::make_random_scenario(17);
  for (std::size_t i = 0; i < scenario.params.cluster_layers.size(); ++i) {
    ClusterLayerBank bank = scenario.params.cluster_layers[i];
    const ClusterState& state = scenario.states[i];
    replace_with_centroids(bank, state);
    ClusterLayerBank once = bank;
    replace_with_centroids(bank, state);
    for (int j = 0; j < bank.num_tasks(); ++j) {
      CHECK(bank.slots[static_cast<std::size_t>(j)].weights ==
            once.slots[static_cast<std::size_t>(j)].weights);
      CHECK(bank.slots[static_cast<std::size_t>(j)].bias ==
            once.slots[static_cast<std::size_t>(j)].bias);
    }
    CHECK(clustering_loss_layer(bank, state) <= 1e-12);
  }
}

TEST_CASE("replacement rejects mismatched centroid lengths") {
  ClusterLayerBank bank = scalar_bank({1.0, 2.0}, 1);
  ClusterState state;
  state.assignments = {0, 0};
  state.centroids = {Vector{{1.0, 2.0, 3.0}}};
  CHECK_THROWS_AS(replace_with_centroids(bank, state), ShapeError);
}

TEST_CASE("clustering loss is zero when slots equal their centroids") {
  ClusterLayerBank bank = scalar_bank({1.0, 2.0, 3.0}, 3);
  const ClusterState state = identity_state(bank);
  CHECK(clustering_loss_layer(bank, state) == 0.0);
}

TEST_CASE("clustering loss matches the hand-computed two-task example") {
  // Slots (0,0) and (2,0) against shared centroid (1,0): residual 1 + 1.
  ClusterLayerBank bank = scalar_bank({0.0, 2.0}, 1);
  ClusterState state;
  state.assignments = {0, 0};
  state.centroids = {Vector{{1.0, 0.0}}};
  CHECK(clustering_loss({bank}, {state}) == 2.0);
}

TEST_CASE("clustering loss agrees with an independent triple-loop summation") {
  for (std::uint64_t seed : {1, 2, 3, 4, 5, 6, 7, 8, 9, 10}) {
    const auto scenario = testing::make_random_scenario(seed);
    const double lib = clustering_loss(scenario.params.cluster_layers, scenario.states);
    const double oracle =
        testing::clustering_loss_triple_loop(scenario.params.cluster_layers, scenario.states);
    CHECK(lib == doctest::Approx(oracle).epsilon(1e-12));
  }
}

TEST_CASE("clustering loss is invariant under cluster relabeling") {
  const auto scenario = testing::make_random_scenario(23);
  const double base = clustering_loss(scenario.params.cluster_layers, scenario.states);

  std::vector<ClusterState> relabeled = scenario.states;
  for (ClusterState& state : relabeled) {
    const int k = static_cast<int>(state.centroids.size());
    // Rotate labels: cluster c becomes (c + 1) mod K.
    std::vector<Vector> centroids(state.centroids.size());
    for (int c = 0; c < k; ++c) {
      centroids[static_cast<std::size_t>((c + 1) % k)] = state.centroids[static_cast<std::size_t>(c)];
    }
    state.centroids = std::move(centroids);
    for (int& a : state.assignments) a = (a + 1) % k;
  }
  const double rotated = clustering_loss(scenario.params.cluster_layers, relabeled);
  CHECK(rotated == doctest::Approx(base).epsilon(1e-15));
}

TEST_CASE("deployed parameter accounting follows K/N exactly") {
  ClusterLayerBank bank;
  bank.cluster_count = 3;
  for (int j = 0; j < 14; ++j) {
    TaskSlot slot;
    slot.weights = Matrix::Zero(10, 9);  // 90 weights
    slot.bias = Vector::Zero(10);        // +10 = slot size 100
    bank.slots.push_back(std::move(slot));
  }

  const ParameterCount deployed = stored_parameter_count(bank, true);
  const ParameterCount training = stored_parameter_count(bank, false);
  CHECK(deployed.floats == 300);
  CHECK(deployed.assignment_entries == 14);
  CHECK(training.floats == 1400);
  CHECK(training.assignment_entries == 0);
  // float ratio is exactly K/N
  CHECK(deployed.floats * 14 == training.floats * 3);

  bank.cluster_count = 14;  // K = N: no compression
  CHECK(stored_parameter_count(bank, true).floats == training.floats);

  bank.cluster_count = 1;  // single centroid: 1/N of the specific layer
  CHECK(stored_parameter_count(bank, true).floats * 14 == training.floats);
}
