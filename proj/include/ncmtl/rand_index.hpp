#pragma once

#include <vector>

namespace ncmtl {

/// Adjusted Rand index between two labelings of the same items, in [-1, 1].
/// 1.0 iff the partitions are identical up to relabeling; 0.0 in expectation
/// for independent random partitions.
double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b);

}  // namespace ncmtl
