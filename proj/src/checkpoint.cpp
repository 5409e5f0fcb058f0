#include "dpnpose/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <zlib.h>

namespace dpnpose {

namespace {

std::uint32_t crc_of(const std::string& bytes, std::size_t n) {
  return static_cast<std::uint32_t>(
      crc32_z(crc32_z(0L, Z_NULL, 0), reinterpret_cast<const Bytef*>(bytes.data()), n));
}

constexpr char kMagic[8] = {'D', 'P', 'N', 'P', 'O', 'S', 'E', '\0'};
constexpr std::uint32_t kMaxRank = 8;

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void tensor(const NamedTensor& t) {
    str(t.name);
    u32(static_cast<std::uint32_t>(t.value.rank()));
    for (int d : t.value.shape()) u32(static_cast<std::uint32_t>(d));
    for (float v : t.value.data()) f32(v);
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& data) : data_(data) {}

  void need(std::size_t n, const std::string& field) {
    if (data_.size() - pos_ < n) {
      throw CheckpointError("checkpoint truncated while reading " + field);
    }
  }
  std::uint32_t u32(const std::string& field) {
    need(4, field);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64(const std::string& field) {
    need(8, field);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  float f32(const std::string& field) { return std::bit_cast<float>(u32(field)); }
  std::string str(const std::string& field) {
    const std::uint32_t n = u32(field + " length");
    need(n, field);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  NamedTensor tensor(const std::string& field) {
    NamedTensor t;
    t.name = str(field + " name");
    const std::string where = field + " '" + t.name + "'";
    const std::uint32_t rank = u32(where + " rank");
    if (rank > kMaxRank) throw CheckpointError("checkpoint " + where + " has implausible rank " + std::to_string(rank));
    Shape shape;
    std::uint64_t numel = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      const std::uint32_t d = u32(where + " dims");
      if (d == 0 || d > (1u << 30)) throw CheckpointError("checkpoint " + where + " has invalid dimension " + std::to_string(d));
      shape.push_back(static_cast<int>(d));
      numel *= d;
      if (numel > (data_.size() - pos_) / 4 + 1) {
        throw CheckpointError("checkpoint truncated while reading " + where + " values");
      }
    }
    need(numel * 4, where + " values");
    std::vector<float> values(numel);
    for (auto& v : values) v = f32(where + " values");
    t.value = Tensor(std::move(shape), std::move(values));
    return t;
  }
  void magic() {
    need(sizeof(kMagic), "magic");
    if (std::memcmp(data_.data(), kMagic, sizeof(kMagic)) != 0) {
      throw CheckpointError("checkpoint has bad magic bytes (not a dpnpose checkpoint)");
    }
    pos_ += sizeof(kMagic);
  }
  bool at_end() const { return pos_ == data_.size(); }

 private:
  const std::string& data_;
  std::size_t pos_ = 0;
};

}  // namespace

Checkpoint make_checkpoint(const ProjectConfig& config, const PoseNetwork& network,
                           const OptimizerState& optimizer, std::uint64_t step) {
  Checkpoint c;
  c.config_text = config.to_text();
  c.step = step;
  c.learning_rate = optimizer.learning_rate;
  c.momentum = optimizer.momentum;
  for (const Parameter* p : network.parameters().all()) c.parameters.push_back({p->name, p->value});
  for (const auto& [name, v] : optimizer.velocity) c.velocity.push_back({name, v});
  return c;
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.bytes(kMagic, sizeof(kMagic));
  w.u32(Checkpoint::kVersion);
  w.str(ckpt.config_text);
  w.u64(ckpt.step);
  w.f32(ckpt.learning_rate);
  w.f32(ckpt.momentum);
  w.u32(static_cast<std::uint32_t>(ckpt.parameters.size()));
  for (const auto& t : ckpt.parameters) w.tensor(t);
  w.u32(static_cast<std::uint32_t>(ckpt.velocity.size()));
  for (const auto& t : ckpt.velocity) w.tensor(t);
  std::string bytes = w.take();
  const std::uint32_t crc = crc_of(bytes, bytes.size());
  for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<char>((crc >> (8 * i)) & 0xff));
  return bytes;
}

Checkpoint deserialize_checkpoint(const std::string& file) {
  Reader head(file);
  head.magic();
  const std::uint32_t version = head.u32("version");
  if (version != Checkpoint::kVersion) {
    throw CheckpointError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(Checkpoint::kVersion) + ")");
  }
  if (file.size() < 16) throw CheckpointError("checkpoint truncated while reading checksum");
  const std::string bytes = file.substr(0, file.size() - 4);
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(static_cast<unsigned char>(file[bytes.size() + i])) << (8 * i);
  if (stored != crc_of(bytes, bytes.size())) {
    throw CheckpointError("checkpoint checksum mismatch (file is truncated or corrupted)");
  }
  Reader r(bytes);
  r.magic();
  r.u32("version");
  Checkpoint c;
  c.config_text = r.str("config");
  c.step = r.u64("step");
  c.learning_rate = r.f32("learning rate");
  c.momentum = r.f32("momentum");
  const std::uint32_t np = r.u32("parameter count");
  for (std::uint32_t i = 0; i < np; ++i) c.parameters.push_back(r.tensor("parameter"));
  const std::uint32_t nv = r.u32("velocity count");
  for (std::uint32_t i = 0; i < nv; ++i) c.velocity.push_back(r.tensor("velocity"));
  if (!r.at_end()) throw CheckpointError("checkpoint has trailing bytes after velocity records");
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::string bytes = serialize_checkpoint(ckpt);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open " + path.string() + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw CheckpointError("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return deserialize_checkpoint(ss.str());
}

void apply_checkpoint(const Checkpoint& ckpt, PoseNetwork& network, OptimizerState* optimizer) {
  std::map<std::string, const NamedTensor*> by_name;
  for (const auto& t : ckpt.parameters) by_name[t.name] = &t;
  auto params = network.parameters().all();
  for (const Parameter* p : params) {
    auto it = by_name.find(p->name);
    if (it == by_name.end()) throw CheckpointError("checkpoint is missing tensor " + p->name);
    if (it->second->value.shape() != p->value.shape()) {
      throw CheckpointError("tensor " + p->name + ": checkpoint shape " +
                            shape_str(it->second->value.shape()) + " does not match network shape " +
                            shape_str(p->value.shape()));
    }
  }
  if (by_name.size() != params.size()) {
    for (const auto& t : ckpt.parameters) {
      if (network.parameters().find(t.name) == nullptr) {
        throw CheckpointError("checkpoint tensor " + t.name + " has no counterpart in the network");
      }
    }
  }
  for (Parameter* p : params) p->value = by_name.at(p->name)->value;
  if (optimizer != nullptr) {
    optimizer->learning_rate = ckpt.learning_rate;
    optimizer->momentum = ckpt.momentum;
    optimizer->velocity.clear();
    for (const auto& v : ckpt.velocity) {
      const Parameter* p = network.parameters().find(v.name);
      if (p == nullptr || p->value.shape() != v.value.shape()) {
        throw CheckpointError("velocity tensor " + v.name + " does not match any network parameter");
      }
      optimizer->velocity[v.name] = v.value;
    }
  }
}

LoadedModel model_from_checkpoint(const Checkpoint& ckpt) {
  LoadedModel m;
  m.config = ProjectConfig::parse(ckpt.config_text, "<checkpoint config>");
  m.network = std::make_unique<PoseNetwork>(m.config.network, m.config.seed);
  apply_checkpoint(ckpt, *m.network);
  return m;
}

}  // namespace dpnpose
