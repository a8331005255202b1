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

#include "sccm/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "sccm/error.h"
#include "sccm/random.h"

namespace sccm {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'S', 'C', 'C', 'M', 'C', 'K', 'P', 'T'};

template <typename V>
void Append(std::string* out, const V& v) {
  out->append(reinterpret_cast<const char*>(&v), sizeof(V));
}

class Cursor {
 public:
  Cursor(const std::string& data, size_t pos, const std::string& path) : data_(data), pos_(pos), path_(path) {}
  void Read(void* dst, size_t n) {
    if (pos_ + n > data_.size()) throw DataError("checkpoint " + path_ + " is truncated");
    std::memcpy(dst, data_.data() + pos_, n);
    pos_ += n;
  }
  template <typename V>
  V Get() {
    V v;
    Read(&v, sizeof(V));
    return v;
  }
  size_t pos() const { return pos_; }

 private:
  const std::string& data_;
  size_t pos_;
  const std::string& path_;
};

}  // namespace

const Matrix<float>* Checkpoint::Find(const std::string& name) const {
  for (const auto& [n, m] : tensors) {
    if (n == name) return &m;
  }
  return nullptr;
}

void Checkpoint::Put(const std::string& name, Matrix<float> value) {
  for (auto& [n, m] : tensors) {
    if (n == name) {
      m = std::move(value);
      return;
    }
  }
  tensors.emplace_back(name, std::move(value));
}

void SaveCheckpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  nlohmann::json header = ckpt.header;
  nlohmann::json index = nlohmann::json::array();
  for (const auto& [name, m] : ckpt.tensors) index.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
  header["tensors"] = std::move(index);
  const std::string text = header.dump();

  std::string body;
  Append(&body, kCheckpointVersion);
  Append(&body, static_cast<uint64_t>(text.size()));
  body += text;
  for (const auto& [name, m] : ckpt.tensors) {
    body.append(reinterpret_cast<const char*>(m.data()), m.size() * sizeof(float));
  }
  Fnv1a digest;
  digest.Update(body.data(), body.size());

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint " + tmp.string());
    out.write(kMagic, sizeof(kMagic));
    out.write(body.data(), static_cast<std::streamsize>(body.size()));
    const uint64_t d = digest.digest();
    out.write(reinterpret_cast<const char*>(&d), sizeof(d));
    if (!out) throw DataError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint LoadCheckpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string p = path.string();
  if (data.size() < sizeof(kMagic) + sizeof(uint64_t) || std::memcmp(data.data(), kMagic, sizeof(kMagic)) != 0) {
    throw DataError(p + " is not a checkpoint");
  }
  Fnv1a digest;
  const size_t body_end = data.size() - sizeof(uint64_t);
  digest.Update(data.data() + sizeof(kMagic), body_end - sizeof(kMagic));
  uint64_t stored;
  std::memcpy(&stored, data.data() + body_end, sizeof(stored));
  if (stored != digest.digest()) throw DataError("checkpoint " + p + " is corrupt (digest mismatch)");

  Cursor cur(data, sizeof(kMagic), p);
  const auto version = cur.Get<uint32_t>();
  if (version != kCheckpointVersion) {
    throw DataError("checkpoint " + p + " has format version " + std::to_string(version) + ", expected " +
                    std::to_string(kCheckpointVersion));
  }
  const auto header_len = cur.Get<uint64_t>();
  if (header_len > body_end - cur.pos()) throw DataError("checkpoint " + p + " is truncated");
  std::string text(header_len, '\0');
  cur.Read(text.data(), header_len);
  Checkpoint ckpt;
  try {
    ckpt.header = nlohmann::json::parse(text);
    for (const auto& t : ckpt.header.at("tensors")) {
      const int rows = t.at("rows").get<int>();
      const int cols = t.at("cols").get<int>();
      if (rows < 0 || cols < 0) throw DataError("checkpoint " + p + " has a negative tensor shape");
      Matrix<float> m(rows, cols);
      if (cur.pos() + m.size() * sizeof(float) > body_end) throw DataError("checkpoint " + p + " is truncated");
      cur.Read(m.data(), m.size() * sizeof(float));
      ckpt.tensors.emplace_back(t.at("name").get<std::string>(), std::move(m));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint " + p + " has a malformed header: " + e.what());
  }
  if (cur.pos() != body_end) throw DataError("checkpoint " + p + " has trailing bytes");
  ckpt.header.erase("tensors");
  return ckpt;
}

}  // namespace sccm
