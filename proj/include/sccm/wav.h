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

#ifndef SCCM_WAV_H_
#define SCCM_WAV_H_

#include <filesystem>

#include "sccm/signal.h"

namespace sccm {

// 16-bit PCM mono RIFF/WAVE. Samples are clipped to [-1, 1] on write and
// scaled by 1/32768 on read.
void WriteWav(const std::filesystem::path& path, const Waveform& w);
Waveform ReadWav(const std::filesystem::path& path);

// Value a sample takes after a write/read cycle.
float QuantizePcm16(float sample);

}  // namespace sccm

#endif  // SCCM_WAV_H_
