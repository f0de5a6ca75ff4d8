#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>

namespace ncmtl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IndexVector = Eigen::VectorXi;

// All stochastic behaviour flows through explicitly seeded generators.
using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  std::seed_seq seq{seed, stream};
  return Rng(seq);
}

}  // namespace ncmtl
