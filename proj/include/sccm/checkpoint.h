// Copyright 2026 The SCCM Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Single-file model archive.
//
//   bytes 0-7   "SCCMCKPT"
//   uint32      format version
//   uint64      header length n
//   n bytes     JSON header; "tensors" lists {name, rows, cols} in blob order
//   ...         float32 blobs, row-major, concatenated
//   uint64      FNV-1a digest of everything after the magic
//
// Integers and floats are little-endian.

#ifndef SCCM_CHECKPOINT_H_
#define SCCM_CHECKPOINT_H_

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "sccm/matrix.h"

namespace sccm {

constexpr uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  nlohmann::json header = nlohmann::json::object();
  std::vector<std::pair<std::string, Matrix<float>>> tensors;

  const Matrix<float>* Find(const std::string& name) const;
  void Put(const std::string& name, Matrix<float> value);
};

// Written to a temporary sibling and renamed into place.
void SaveCheckpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
// Throws DataError on a missing file, wrong magic or version, truncation or
// digest mismatch.
Checkpoint LoadCheckpoint(const std::filesystem::path& path);

}  // namespace sccm

#endif  // SCCM_CHECKPOINT_H_
