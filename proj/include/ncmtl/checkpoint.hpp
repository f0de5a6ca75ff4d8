#pragma once

#include <string>
#include <vector>

#include "ncmtl/model.hpp"
#include "ncmtl/trainer.hpp"

namespace ncmtl {

/// Everything needed to restore a trained model exactly: all parameter
/// tensors, per-layer cluster states, and task naming.
struct Checkpoint {
  ModelParams params;
  std::vector<ClusterState> cluster_states;
  std::vector<std::string> task_names;
  Regime regime = Regime::cluster;
};

/// Versioned little-endian binary container ("NCMTLCKP" magic, version 1).
/// Written atomically (temp file + rename).
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);

/// Throws IoError on a bad magic, version skew, or truncated file.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace ncmtl
