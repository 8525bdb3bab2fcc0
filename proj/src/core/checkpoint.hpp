// Flat named-tensor container, used for model checkpoints.
//
// Binary layout (all integers little-endian):
//   magic   8 bytes  "AIDCKPT\0"
//   u32     format version (currently 1)
//   u32     entry count
//   entries, each:
//     u32   name length, then that many UTF-8 bytes
//     u8    dtype: 0 = float32, 1 = float64
//     u8    rank
//     u32   dims[rank]
//     raw little-endian payload, prod(dims) values
#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "core/tensor.hpp"

namespace aid {

constexpr uint32_t kCheckpointVersion = 1;

template <typename Real>
void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor<Real>>>& entries);

struct CheckpointEntry {
  Shape shape;
  std::vector<double> data;  // widened on load; narrowed on demand
  int dtype = 0;
};

std::map<std::string, CheckpointEntry> load_checkpoint(const std::string& path);

// Copies checkpoint values into the named tensors; every tensor must be
// present with a matching shape.
template <typename Real>
void restore_params(const std::map<std::string, CheckpointEntry>& ckpt,
                    std::vector<std::pair<std::string, Tensor<Real>>>& params);

}  // namespace aid
