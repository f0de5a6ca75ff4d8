#include "ncmtl/io.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

namespace ncmtl {

void atomic_write_file(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + tmp);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string metrics_csv(const std::vector<MetricsRecord>& history) {
  std::ostringstream out;
  out << "epoch,task_id,split,accuracy,loss_lp,loss_lc\n";
  for (const MetricsRecord& rec : history) {
    out << rec.epoch << ',' << rec.task_id << ',' << rec.split << ',';
    if (rec.accuracy) out << format_double(*rec.accuracy);
    out << ',' << format_double(rec.loss_lp) << ',' << format_double(rec.loss_lc) << '\n';
  }
  return out.str();
}

std::string clusters_json(const std::vector<EpochDump>& dumps) {
  nlohmann::ordered_json root = nlohmann::ordered_json::array();
  for (const EpochDump& dump : dumps) {
    nlohmann::ordered_json epoch;
    epoch["epoch"] = dump.epoch;
    epoch["layers"] = nlohmann::ordered_json::array();
    for (const LayerDump& layer : dump.layers) {
      nlohmann::ordered_json rec;
      rec["layer"] = layer.layer;
      rec["K"] = layer.cluster_count;
      rec["assignments"] = layer.assignments;
      rec["centroid_norms"] = layer.centroid_norms;
      rec["frozen"] = layer.frozen;
      epoch["layers"].push_back(std::move(rec));
    }
    root.push_back(std::move(epoch));
  }
  return root.dump(2) + "\n";
}

std::string accuracy_csv(const AccuracyTable& table, const std::vector<std::string>& names) {
  std::ostringstream out;
  out << "task,accuracy\n";
  for (std::size_t t = 0; t < table.per_task.size(); ++t) {
    const std::string name =
        t < names.size() ? names[t] : "task" + std::to_string(t);
    if (!table.per_task[t]) continue;  // empty test set: row absent
    out << name << ',' << format_double(*table.per_task[t]) << '\n';
  }
  if (table.average) out << "AVG," << format_double(*table.average) << '\n';
  return out.str();
}

std::string accuracy_table_text(const AccuracyTable& table,
                                const std::vector<std::string>& names) {
  std::size_t width = 4;  // "task"
  for (const std::string& name : names) width = std::max(width, name.size());
  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(width) + 2) << "task" << "accuracy\n";
  for (std::size_t t = 0; t < table.per_task.size(); ++t) {
    const std::string name =
        t < names.size() ? names[t] : "task" + std::to_string(t);
    if (!table.per_task[t]) continue;
    out << std::left << std::setw(static_cast<int>(width) + 2) << name
        << std::fixed << std::setprecision(4) << *table.per_task[t] << '\n';
    out.unsetf(std::ios::fixed);
  }
  if (table.average) {
    out << std::left << std::setw(static_cast<int>(width) + 2) << "AVG"
        << std::fixed << std::setprecision(4) << *table.average << '\n';
  }
  return out.str();
}

}  // namespace ncmtl
