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

#ifndef SCCM_ERROR_H_
#define SCCM_ERROR_H_

#include <stdexcept>
#include <string>

namespace sccm {

// Error categories map one-to-one onto the tool's exit codes.
enum class ErrorKind {
  kConfig = 2,
  kData = 3,
  kRuntime = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what)
      : Error(ErrorKind::kConfig, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what)
      : Error(ErrorKind::kData, what) {}
};

class RuntimeError : public Error {
 public:
  explicit RuntimeError(const std::string& what)
      : Error(ErrorKind::kRuntime, what) {}
};

// Shape and argument violations inside the numeric core.
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what)
      : Error(ErrorKind::kRuntime, what) {}
};

}  // namespace sccm

#define SCCM_CHECK_SHAPE(cond, msg)                                   \
  do {                                                                \
    if (!(cond)) throw ::sccm::ShapeError(std::string(msg) + " (" #cond ")"); \
  } while (0)

#endif  // SCCM_ERROR_H_
