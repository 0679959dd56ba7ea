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

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mixkern/half.h"

namespace mixkern {

enum class Dtype : std::uint8_t { kF32, kF16, kI8, kU8, kU4 };

std::string_view dtype_name(Dtype d);
// Parses the sidecar tag ("f32", "f16", "i8", "u8", "u4"); throws kFormat.
Dtype parse_dtype(std::string_view tag);

// Storage bytes for `count` logical elements. u4 stores two codes per byte,
// low nibble first, padded to a whole byte.
std::size_t storage_bytes(Dtype d, std::size_t count);

// Dense row-major tensor over a little-endian byte buffer.
//
// Elements are read and written through typed accessors; the buffer itself is
// exposed for I/O and for code that wants to treat it as raw memory (the
// packer and the shared-memory model do).
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::vector<std::int64_t> shape, Dtype dtype);

  static Tensor from_f16(std::vector<std::int64_t> shape,
                         std::span<const Half> values);
  static Tensor from_float_rounded(std::vector<std::int64_t> shape,
                                   std::span<const float> values);

  const std::vector<std::int64_t>& shape() const { return shape_; }
  std::int64_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t rank() const { return shape_.size(); }
  Dtype dtype() const { return dtype_; }
  std::size_t numel() const { return numel_; }

  std::span<std::uint8_t> bytes() { return data_; }
  std::span<const std::uint8_t> bytes() const { return data_; }

  // Row-major flat index of a multi-index; bounds-checked.
  std::size_t offset(std::span<const std::int64_t> index) const;

  Half f16(std::size_t i) const;
  void set_f16(std::size_t i, Half v);
  float f32(std::size_t i) const;
  void set_f32(std::size_t i, float v);
  // Integer element for i8/u8/u4 tensors (signed for i8).
  int code(std::size_t i) const;
  void set_code(std::size_t i, int v);

  // Element as float regardless of dtype (integers convert exactly).
  float value(std::size_t i) const;

  std::vector<float> to_floats() const;

  bool bit_equal(const Tensor& other) const;

 private:
  std::vector<std::int64_t> shape_;
  Dtype dtype_ = Dtype::kF32;
  std::size_t numel_ = 0;
  std::vector<std::uint8_t> data_;
};

}  // namespace mixkern
