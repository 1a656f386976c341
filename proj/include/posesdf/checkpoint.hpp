#pragma once

#include <string>
#include <utility>
#include <vector>

#include "posesdf/tensor.hpp"

namespace posesdf {

// Named-parameter container with a small key=value metadata header.
// Binary layout (all little-endian):
//   "ASDF" | u32 version | u32 meta_count | {u32 klen, key, u32 vlen, value}*
//   | u32 param_count | {u32 nlen, name, u32 ndim, u32 dims[], f64 data[]}*
// Entry order is preserved, so save(load(f)) is byte-identical.
struct Checkpoint {
  static constexpr uint32_t kVersion = 1;

  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<std::pair<std::string, Tensor>> params;

  const std::string* find_meta(const std::string& key) const;
  const Tensor* find_param(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace posesdf
