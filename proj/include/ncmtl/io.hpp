#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ncmtl/trainer.hpp"

namespace ncmtl {

/// Write-temp-then-rename so readers never observe a partial file.
void atomic_write_file(const std::string& path, const std::string& content);

/// Shortest round-trip decimal representation.
std::string format_double(double v);

/// Header: epoch,task_id,split,accuracy,loss_lp,loss_lc. Absent accuracies
/// serialise as empty fields.
std::string metrics_csv(const std::vector<MetricsRecord>& history);

/// One JSON object per epoch with the per-layer cluster records.
std::string clusters_json(const std::vector<EpochDump>& dumps);

/// Per-task accuracy rows plus the macro-average AVG row.
std::string accuracy_csv(const AccuracyTable& table, const std::vector<std::string>& names);

std::string accuracy_table_text(const AccuracyTable& table,
                                const std::vector<std::string>& names);

}  // namespace ncmtl
