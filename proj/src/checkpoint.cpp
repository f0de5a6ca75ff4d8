#include "ncmtl/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

namespace ncmtl {

namespace {

constexpr char kMagic[8] = {'N', 'C', 'M', 'T', 'L', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

struct Writer {
  std::ofstream out;

  void raw(const void* data, std::size_t bytes) {
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
  }
  void u8(std::uint8_t v) { raw(&v, 1); }
  void u32(std::uint32_t v) { raw(&v, 4); }
  void i32(std::int32_t v) { raw(&v, 4); }
  void f64(double v) { raw(&v, 8); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  void matrix(const Matrix& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) f64(m(r, c));
    }
  }
  void vector(const Vector& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) f64(v[i]);
  }
};

struct Reader {
  std::ifstream in;
  std::string path;

  void raw(void* data, std::size_t bytes) {
    in.read(static_cast<char*>(data), static_cast<std::streamsize>(bytes));
    if (!in) throw IoError("truncated checkpoint: " + path);
  }
  std::uint8_t u8() {
    std::uint8_t v = 0;
    raw(&v, 1);
    return v;
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    raw(&v, 4);
    return v;
  }
  std::int32_t i32() {
    std::int32_t v = 0;
    raw(&v, 4);
    return v;
  }
  double f64() {
    double v = 0;
    raw(&v, 8);
    return v;
  }
  std::string str() {
    const std::uint32_t len = u32();
    std::string s(len, '\0');
    if (len > 0) raw(s.data(), len);
    return s;
  }
  Matrix matrix(Eigen::Index rows, Eigen::Index cols) {
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = f64();
    }
    return m;
  }
  Vector vector(Eigen::Index size) {
    Vector v(size);
    for (Eigen::Index i = 0; i < size; ++i) v[i] = f64();
    return v;
  }
};

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const ModelParams& p = ckpt.params;
  const std::string tmp = path + ".tmp";
  {
    Writer w;
    w.out.open(tmp, std::ios::binary | std::ios::trunc);
    if (!w.out) throw IoError("cannot open for writing: " + tmp);

    w.raw(kMagic, sizeof(kMagic));
    w.u32(kVersion);
    w.u8(static_cast<std::uint8_t>(ckpt.regime));
    w.u32(static_cast<std::uint32_t>(p.num_tasks()));
    w.u32(static_cast<std::uint32_t>(p.heads.empty() ? 0 : p.heads.front().out_dim()));
    w.u32(static_cast<std::uint32_t>(p.input_dim()));

    w.u32(static_cast<std::uint32_t>(p.trunk.size()));
    for (const DenseLayer& layer : p.trunk) {
      w.u32(static_cast<std::uint32_t>(layer.out_dim()));
      w.u8(static_cast<std::uint8_t>(layer.activation));
    }
    w.u32(static_cast<std::uint32_t>(p.cluster_layers.size()));
    for (const ClusterLayerBank& bank : p.cluster_layers) {
      w.u32(static_cast<std::uint32_t>(bank.out_dim()));
      w.u32(static_cast<std::uint32_t>(bank.cluster_count));
      w.u8(static_cast<std::uint8_t>(bank.activation));
    }
    w.u32(static_cast<std::uint32_t>(ckpt.task_names.size()));
    for (const std::string& name : ckpt.task_names) w.str(name);

    for (const DenseLayer& layer : p.trunk) {
      w.matrix(layer.weights);
      w.vector(layer.bias);
    }
    for (const ClusterLayerBank& bank : p.cluster_layers) {
      for (const TaskSlot& slot : bank.slots) {
        w.matrix(slot.weights);
        w.vector(slot.bias);
      }
    }
    for (const DenseLayer& head : p.heads) {
      w.matrix(head.weights);
      w.vector(head.bias);
    }

    w.u32(static_cast<std::uint32_t>(ckpt.cluster_states.size()));
    for (const ClusterState& state : ckpt.cluster_states) {
      w.u32(static_cast<std::uint32_t>(state.centroids.size()));
      w.u32(static_cast<std::uint32_t>(state.assignments.size()));
      for (int a : state.assignments) w.i32(a);
      for (const Vector& c : state.centroids) {
        w.u32(static_cast<std::uint32_t>(c.size()));
        w.vector(c);
      }
      w.u8(state.frozen ? 1 : 0);
    }
    if (!w.out) throw IoError("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
  Reader r;
  r.path = path;
  r.in.open(path, std::ios::binary);
  if (!r.in) throw IoError("cannot open checkpoint: " + path);

  char magic[8] = {};
  r.raw(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IoError("not a checkpoint file: " + path);
  }
  const std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version) + ": " + path);
  }

  Checkpoint ckpt;
  const std::uint8_t regime_byte = r.u8();
  if (regime_byte > static_cast<std::uint8_t>(Regime::specific)) {
    throw IoError("corrupt checkpoint (bad regime byte): " + path);
  }
  ckpt.regime = static_cast<Regime>(regime_byte);
  const std::uint32_t num_tasks = r.u32();
  const std::uint32_t num_classes = r.u32();
  const std::uint32_t input_dim = r.u32();

  struct LayerMeta {
    std::uint32_t out_dim;
    std::uint32_t cluster_count;
    Activation activation;
  };
  std::vector<LayerMeta> trunk_meta;
  const std::uint32_t trunk_count = r.u32();
  for (std::uint32_t i = 0; i < trunk_count; ++i) {
    LayerMeta meta{};
    meta.out_dim = r.u32();
    meta.activation = static_cast<Activation>(r.u8());
    trunk_meta.push_back(meta);
  }
  std::vector<LayerMeta> bank_meta;
  const std::uint32_t bank_count = r.u32();
  for (std::uint32_t i = 0; i < bank_count; ++i) {
    LayerMeta meta{};
    meta.out_dim = r.u32();
    meta.cluster_count = r.u32();
    meta.activation = static_cast<Activation>(r.u8());
    bank_meta.push_back(meta);
  }
  const std::uint32_t name_count = r.u32();
  for (std::uint32_t i = 0; i < name_count; ++i) ckpt.task_names.push_back(r.str());

  Eigen::Index prev = static_cast<Eigen::Index>(input_dim);
  for (const LayerMeta& meta : trunk_meta) {
    DenseLayer layer;
    layer.weights = r.matrix(static_cast<Eigen::Index>(meta.out_dim), prev);
    layer.bias = r.vector(static_cast<Eigen::Index>(meta.out_dim));
    layer.activation = meta.activation;
    ckpt.params.trunk.push_back(std::move(layer));
    prev = static_cast<Eigen::Index>(meta.out_dim);
  }
  for (const LayerMeta& meta : bank_meta) {
    ClusterLayerBank bank;
    bank.cluster_count = static_cast<int>(meta.cluster_count);
    bank.activation = meta.activation;
    for (std::uint32_t j = 0; j < num_tasks; ++j) {
      TaskSlot slot;
      slot.weights = r.matrix(static_cast<Eigen::Index>(meta.out_dim), prev);
      slot.bias = r.vector(static_cast<Eigen::Index>(meta.out_dim));
      bank.slots.push_back(std::move(slot));
    }
    ckpt.params.cluster_layers.push_back(std::move(bank));
    prev = static_cast<Eigen::Index>(meta.out_dim);
  }
  for (std::uint32_t j = 0; j < num_tasks; ++j) {
    DenseLayer head;
    head.weights = r.matrix(static_cast<Eigen::Index>(num_classes), prev);
    head.bias = r.vector(static_cast<Eigen::Index>(num_classes));
    head.activation = Activation::softmax;
    ckpt.params.heads.push_back(std::move(head));
  }

  const std::uint32_t state_count = r.u32();
  for (std::uint32_t i = 0; i < state_count; ++i) {
    ClusterState state;
    const std::uint32_t centroid_count = r.u32();
    const std::uint32_t assign_count = r.u32();
    for (std::uint32_t a = 0; a < assign_count; ++a) state.assignments.push_back(r.i32());
    for (std::uint32_t c = 0; c < centroid_count; ++c) {
      const std::uint32_t len = r.u32();
      state.centroids.push_back(r.vector(static_cast<Eigen::Index>(len)));
    }
    state.frozen = r.u8() != 0;
    ckpt.cluster_states.push_back(std::move(state));
  }

  validate_model(ckpt.params);
  return ckpt;
}

}  // namespace ncmtl
