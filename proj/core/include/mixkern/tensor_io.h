// Copyright 2026 The mixkern Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <filesystem>
#include <string>

#include "mixkern/tensor.h"

namespace mixkern {

// Raw little-endian tensor file plus a JSON sidecar:
//   {"shape": [d0, d1, ...], "dtype": "f16" | "f32" | "i8" | "u8" | "u4"}
// u4 data is nibble-packed, low nibble first, last byte zero-padded.

// Sidecar path used when none is given: "<data>.json".
std::filesystem::path default_sidecar(const std::filesystem::path& data);

std::string sidecar_json(const Tensor& t);

// Writes both files. Returns the sidecar path.
std::filesystem::path write_tensor(const Tensor& t,
                                   const std::filesystem::path& data,
                                   std::filesystem::path sidecar = {});

// Throws Error(kFormat) on a missing file, an unknown dtype tag, a malformed
// sidecar, or a data length that disagrees with shape x dtype.
Tensor read_tensor(const std::filesystem::path& data,
                   std::filesystem::path sidecar = {});

}  // namespace mixkern
