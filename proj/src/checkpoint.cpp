#include "posesdf/checkpoint.hpp"

#include "posesdf/io.hpp"

namespace posesdf {

namespace {
constexpr char kMagic[4] = {'A', 'S', 'D', 'F'};
constexpr uint32_t kMaxStr = 1u << 20;
constexpr uint32_t kMaxCount = 1u << 24;
}  // namespace

const std::string* Checkpoint::find_meta(const std::string& key) const {
  for (const auto& [k, v] : meta)
    if (k == key) return &v;
  return nullptr;
}

const Tensor* Checkpoint::find_param(const std::string& name) const {
  for (const auto& [k, v] : params)
    if (k == name) return &v;
  return nullptr;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::string out;
  out.append(kMagic, 4);
  put_u32(out, Checkpoint::kVersion);
  put_u32(out, static_cast<uint32_t>(ckpt.meta.size()));
  for (const auto& [k, v] : ckpt.meta) {
    put_u32(out, static_cast<uint32_t>(k.size()));
    out.append(k);
    put_u32(out, static_cast<uint32_t>(v.size()));
    out.append(v);
  }
  put_u32(out, static_cast<uint32_t>(ckpt.params.size()));
  for (const auto& [name, t] : ckpt.params) {
    put_u32(out, static_cast<uint32_t>(name.size()));
    out.append(name);
    put_u32(out, static_cast<uint32_t>(t.shape.size()));
    for (int64_t e : t.shape) put_u32(out, static_cast<uint32_t>(e));
    for (double v : t.data) put_f64(out, v);
  }
  write_file_bytes(path, out);
}

Checkpoint load_checkpoint(const std::string& path) {
  BinReader r(read_file_bytes(path), path);
  char magic[4];
  r.raw(magic, 4);
  if (std::string(magic, 4) != std::string(kMagic, 4))
    throw DataError(path + ": bad magic, not a checkpoint/dataset file");
  uint32_t version = r.u32();
  if (version != Checkpoint::kVersion)
    throw DataError(path + ": unsupported format version " + std::to_string(version));

  Checkpoint ckpt;
  uint32_t nmeta = r.u32();
  if (nmeta > kMaxCount) throw DataError(path + ": corrupt meta count");
  for (uint32_t i = 0; i < nmeta; ++i) {
    uint32_t klen = r.u32();
    if (klen > kMaxStr) throw DataError(path + ": corrupt meta key length");
    std::string k = r.str(klen);
    uint32_t vlen = r.u32();
    if (vlen > kMaxStr) throw DataError(path + ": corrupt meta value length");
    ckpt.meta.emplace_back(std::move(k), r.str(vlen));
  }
  uint32_t nparams = r.u32();
  if (nparams > kMaxCount) throw DataError(path + ": corrupt parameter count");
  for (uint32_t i = 0; i < nparams; ++i) {
    uint32_t nlen = r.u32();
    if (nlen > kMaxStr) throw DataError(path + ": corrupt parameter name length");
    std::string name = r.str(nlen);
    uint32_t ndim = r.u32();
    if (ndim > 8) throw DataError(path + ": corrupt rank for parameter " + name);
    std::vector<int64_t> shape;
    uint64_t numel = 1;
    for (uint32_t d = 0; d < ndim; ++d) {
      uint32_t e = r.u32();
      if (e == 0 || e > kMaxCount) throw DataError(path + ": corrupt extent for parameter " + name);
      shape.push_back(static_cast<int64_t>(e));
      numel *= e;
    }
    if (numel * 8 > r.remaining())
      throw DataError(path + ": truncated data for parameter " + name);
    Tensor t = shape.empty() ? Tensor::scalar(0.0) : Tensor::zeros(shape);
    for (int64_t j = 0; j < t.numel(); ++j) t.at(j) = r.f64();
    ckpt.params.emplace_back(std::move(name), std::move(t));
  }
  if (r.remaining() != 0) throw DataError(path + ": trailing bytes after parameter table");
  return ckpt;
}

}  // namespace posesdf
