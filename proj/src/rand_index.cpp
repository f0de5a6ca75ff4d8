#include "ncmtl/rand_index.hpp"

#include <cstdint>
#include <map>
#include <string>

#include "ncmtl/errors.hpp"

namespace ncmtl {

namespace {

double comb2(std::int64_t x) { return 0.5 * static_cast<double>(x) * static_cast<double>(x - 1); }

std::vector<int> compact_labels(const std::vector<int>& labels, int& num_classes) {
  std::map<int, int> remap;
  std::vector<int> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto [it, inserted] = remap.emplace(labels[i], static_cast<int>(remap.size()));
    out[i] = it->second;
  }
  num_classes = static_cast<int>(remap.size());
  return out;
}

}  // namespace

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) {
    throw ArgumentError("adjusted_rand_index: label vectors have lengths " +
                        std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
  const std::int64_t n = static_cast<std::int64_t>(a.size());
  if (n < 2) return 1.0;

  int ra = 0;
  int rb = 0;
  const std::vector<int> ca = compact_labels(a, ra);
  const std::vector<int> cb = compact_labels(b, rb);

  std::vector<std::int64_t> table(static_cast<std::size_t>(ra) * static_cast<std::size_t>(rb), 0);
  std::vector<std::int64_t> row(static_cast<std::size_t>(ra), 0);
  std::vector<std::int64_t> col(static_cast<std::size_t>(rb), 0);
  for (std::size_t i = 0; i < ca.size(); ++i) {
    ++table[static_cast<std::size_t>(ca[i]) * static_cast<std::size_t>(rb) +
            static_cast<std::size_t>(cb[i])];
    ++row[static_cast<std::size_t>(ca[i])];
    ++col[static_cast<std::size_t>(cb[i])];
  }

  double index = 0.0;
  for (std::int64_t cell : table) index += comb2(cell);
  double sum_a = 0.0;
  for (std::int64_t r : row) sum_a += comb2(r);
  double sum_b = 0.0;
  for (std::int64_t c : col) sum_b += comb2(c);

  const double expected = sum_a * sum_b / comb2(n);
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) {
    // Both partitions degenerate in the same way (all singletons or one
    // block); they agree exactly.
    return 1.0;
  }
  return (index - expected) / (max_index - expected);
}

}  // namespace ncmtl
