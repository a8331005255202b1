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

#include <atomic>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "sccm/kernels.h"

namespace sccm::kernels {
namespace {
std::atomic<Backend> g_backend{Backend::kParallel};
}  // namespace

void SetBackend(Backend backend) { g_backend.store(backend); }
Backend GetBackend() { return g_backend.load(); }

void SetNumThreads(int n) {
#ifdef _OPENMP
  if (n < 1) n = omp_get_num_procs();
  omp_set_num_threads(n);
#else
  (void)n;
#endif
}

int NumThreads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace sccm::kernels
