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

#include "sccm/wav.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "sccm/error.h"

namespace sccm {
namespace {

void PutU32(std::ofstream& os, uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}
void PutU16(std::ofstream& os, uint16_t v) {
  const unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
  os.write(reinterpret_cast<const char*>(b), 2);
}
uint32_t GetU32(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<uint32_t>(p[3]) << 24);
}
uint16_t GetU16(const unsigned char* p) { return static_cast<uint16_t>(p[0] | (p[1] << 8)); }

int16_t ToPcm(float s) {
  const float clipped = std::clamp(s, -1.0f, 1.0f);
  return static_cast<int16_t>(std::lround(std::clamp(clipped * 32768.0f, -32768.0f, 32767.0f)));
}

}  // namespace

float QuantizePcm16(float sample) { return ToPcm(sample) / 32768.0f; }

void WriteWav(const std::filesystem::path& path, const Waveform& w) {
  ValidateWaveform(w);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open for writing: " + path.string());
  const uint32_t data_bytes = static_cast<uint32_t>(w.size() * 2);
  os.write("RIFF", 4);
  PutU32(os, 36 + data_bytes);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  PutU32(os, 16);
  PutU16(os, 1);  // PCM
  PutU16(os, 1);  // mono
  PutU32(os, static_cast<uint32_t>(w.sample_rate));
  PutU32(os, static_cast<uint32_t>(w.sample_rate) * 2);
  PutU16(os, 2);
  PutU16(os, 16);
  os.write("data", 4);
  PutU32(os, data_bytes);
  for (float s : w.samples) PutU16(os, static_cast<uint16_t>(ToPcm(s)));
  if (!os) throw DataError("write failed: " + path.string());
}

Waveform ReadWav(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open: " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw DataError("not a RIFF/WAVE file: " + path.string());
  }
  Waveform w;
  bool have_fmt = false;
  size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const uint32_t size = GetU32(chunk + 4);
    if (pos + 8 + size > bytes.size()) throw DataError("truncated chunk in " + path.string());
    const unsigned char* body = chunk + 8;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) throw DataError("bad fmt chunk in " + path.string());
      const uint16_t format = GetU16(body), channels = GetU16(body + 2), bits = GetU16(body + 14);
      if (format != 1 || channels != 1 || bits != 16) {
        throw DataError("only 16-bit PCM mono WAV is supported: " + path.string());
      }
      w.sample_rate = static_cast<int>(GetU32(body + 4));
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) throw DataError("data chunk before fmt in " + path.string());
      w.samples.resize(size / 2);
      for (size_t i = 0; i < w.samples.size(); ++i) {
        w.samples[i] = static_cast<int16_t>(GetU16(body + 2 * i)) / 32768.0f;
      }
      return w;
    }
    pos += 8 + size + (size & 1);
  }
  throw DataError("no data chunk in " + path.string());
}

}  // namespace sccm
