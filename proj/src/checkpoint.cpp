#include "mecc/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

#include "byte_io.hpp"

namespace mecc {
namespace detail {

std::vector<std::byte> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<std::byte> data(size);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(size));
  if (!in) throw std::runtime_error("cannot read " + path);
  return data;
}

void write_file_atomic(const std::string& path, std::span<const std::byte> data) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!out) throw std::runtime_error("cannot write " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace detail

namespace {

constexpr char kMagic[4] = {'M', 'E', 'C', 'C'};
constexpr std::size_t kMaxName = 4096;
constexpr std::uint32_t kMaxRank = 8;

}  // namespace

const CheckpointEntry* Checkpoint::find(const std::string& name) const {
  for (const auto& e : entries) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

Checkpoint capture(const ParamSet& params, const CheckpointMeta& meta,
                   const std::vector<std::string>& prefixes) {
  Checkpoint ckpt{meta, {}};
  for (const Parameter* p : params.all()) {
    bool keep = prefixes.empty();
    for (const auto& prefix : prefixes) keep = keep || p->name().rfind(prefix, 0) == 0;
    if (keep) ckpt.entries.push_back({p->name(), p->value(), p->frozen()});
  }
  return ckpt;
}

std::vector<std::byte> serialize(const Checkpoint& ckpt) {
  detail::ByteWriter w;
  w.put_bytes(std::as_bytes(std::span<const char>(kMagic, 4)));
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put_string(ckpt.meta.stage);
  w.put<std::uint64_t>(ckpt.meta.step);
  w.put<std::uint64_t>(ckpt.meta.seed);
  w.put_bytes(std::as_bytes(std::span<const std::uint8_t>(ckpt.meta.config_hash)));
  w.put<std::uint64_t>(ckpt.entries.size());
  for (const auto& e : ckpt.entries) {
    w.put_string(e.name);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(e.value.dtype()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(e.value.rank()));
    for (auto d : e.value.shape()) w.put<std::uint64_t>(d);
    w.put_bytes(e.value.bytes());
    w.put<std::uint8_t>(e.frozen ? 1 : 0);
  }
  const Digest digest = sha256(w.buffer());
  w.put_bytes(std::as_bytes(std::span<const std::uint8_t>(digest)));
  return std::move(w.buffer());
}

Checkpoint deserialize(std::span<const std::byte> bytes) {
  if (bytes.size() < 8 + 32) throw CheckpointError("checkpoint truncated (" +
                                                   std::to_string(bytes.size()) + " bytes)");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw CheckpointError("not a checkpoint (bad magic)");
  std::uint32_t version;
  std::memcpy(&version, bytes.data() + 4, 4);
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint version " + std::to_string(version) + ", expected " +
                          std::to_string(kCheckpointVersion));
  }
  try {
    detail::ByteReader r(bytes.subspan(8));
    Checkpoint ckpt;
    ckpt.meta.stage = r.get_string(kMaxName);
    ckpt.meta.step = r.get<std::uint64_t>();
    ckpt.meta.seed = r.get<std::uint64_t>();
    std::memcpy(ckpt.meta.config_hash.data(), r.take(32).data(), 32);
    const auto count = r.get<std::uint64_t>();
    for (std::uint64_t i = 0; i < count; ++i) {
      CheckpointEntry e;
      e.name = r.get_string(kMaxName);
      const auto dtype = r.get<std::uint8_t>();
      if (dtype > 1) throw CheckpointError("bad dtype tag for " + e.name);
      const auto rank = r.get<std::uint32_t>();
      if (rank > kMaxRank) throw CheckpointError("bad rank for " + e.name);
      Shape shape(rank);
      std::size_t numel = 1;
      for (auto& d : shape) {
        d = r.get<std::uint64_t>();
        if (d != 0 && numel > (std::size_t{1} << 40) / d) {
          throw CheckpointError("implausible shape for " + e.name);
        }
        numel *= d;
      }
      const std::size_t elem = dtype == 0 ? sizeof(float) : sizeof(double);
      if (numel > r.remaining() / elem) throw detail::TruncatedInput("values of " + e.name);
      e.value = Tensor(shape, static_cast<DType>(dtype));
      auto raw = r.take(e.value.bytes().size());
      dispatch(e.value.dtype(), [&]<class T>() {
        std::memcpy(e.value.data<T>().data(), raw.data(), raw.size());
      });
      const auto frozen = r.get<std::uint8_t>();
      if (frozen > 1) throw CheckpointError("bad frozen flag for " + e.name);
      e.frozen = frozen == 1;
      ckpt.entries.push_back(std::move(e));
    }
    const std::size_t body = 8 + r.position();
    auto stored = r.take(32);
    if (r.remaining() != 0) throw CheckpointError("trailing bytes after checkpoint");
    const Digest digest = sha256(bytes.subspan(0, body));
    if (std::memcmp(digest.data(), stored.data(), 32) != 0) {
      throw CheckpointError("checkpoint checksum mismatch");
    }
    return ckpt;
  } catch (const detail::TruncatedInput& e) {
    throw CheckpointError(std::string("checkpoint truncated: ") + e.what());
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::runtime_error& e) {
    throw CheckpointError(std::string("corrupt checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  detail::write_file_atomic(path, serialize(ckpt));
}

Checkpoint load_checkpoint(const std::string& path) {
  std::vector<std::byte> bytes;
  try {
    bytes = detail::read_file(path);
  } catch (const std::runtime_error& e) {
    throw CheckpointError(e.what());
  }
  try {
    return deserialize(bytes);
  } catch (const CheckpointError& e) {
    throw CheckpointError(path + ": " + e.what());
  }
}

void apply(const Checkpoint& ckpt, ParamSet& params) {
  for (const auto& e : ckpt.entries) {
    Parameter* p = params.find(e.name);
    if (!p) throw CheckpointError("checkpoint parameter " + e.name + " is not in the model");
    if (p->value().shape() != e.value.shape() || p->value().dtype() != e.value.dtype()) {
      throw CheckpointError("checkpoint parameter " + e.name + " is " +
                            std::string(dtype_name(e.value.dtype())) + shape_str(e.value.shape()) +
                            ", model has " + std::string(dtype_name(p->value().dtype())) +
                            shape_str(p->value().shape()));
    }
    p->assign(e.value);
  }
}

}  // namespace mecc
