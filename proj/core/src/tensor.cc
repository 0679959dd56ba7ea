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

#include "mixkern/tensor.h"

#include <cstring>

#include "mixkern/error.h"

namespace mixkern {

std::string_view dtype_name(Dtype d) {
  switch (d) {
    case Dtype::kF32: return "f32";
    case Dtype::kF16: return "f16";
    case Dtype::kI8: return "i8";
    case Dtype::kU8: return "u8";
    case Dtype::kU4: return "u4";
  }
  return "?";
}

Dtype parse_dtype(std::string_view tag) {
  if (tag == "f32") return Dtype::kF32;
  if (tag == "f16") return Dtype::kF16;
  if (tag == "i8") return Dtype::kI8;
  if (tag == "u8") return Dtype::kU8;
  if (tag == "u4") return Dtype::kU4;
  fail(ErrorKind::kFormat, "unknown dtype tag '" + std::string(tag) + "'");
}

std::size_t storage_bytes(Dtype d, std::size_t count) {
  switch (d) {
    case Dtype::kF32: return 4 * count;
    case Dtype::kF16: return 2 * count;
    case Dtype::kI8:
    case Dtype::kU8: return count;
    case Dtype::kU4: return (count + 1) / 2;
  }
  return 0;
}

Tensor::Tensor(std::vector<std::int64_t> shape, Dtype dtype)
    : shape_(std::move(shape)), dtype_(dtype), numel_(1) {
  for (std::int64_t e : shape_) {
    check(e >= 0, ErrorKind::kInvalidArgument, "negative tensor extent");
    numel_ *= static_cast<std::size_t>(e);
  }
  data_.assign(storage_bytes(dtype_, numel_), 0);
}

Tensor Tensor::from_f16(std::vector<std::int64_t> shape,
                        std::span<const Half> values) {
  Tensor t(std::move(shape), Dtype::kF16);
  check(values.size() == t.numel(), ErrorKind::kInvalidArgument,
        "value count does not match shape");
  for (std::size_t i = 0; i < values.size(); ++i) t.set_f16(i, values[i]);
  return t;
}

Tensor Tensor::from_float_rounded(std::vector<std::int64_t> shape,
                                  std::span<const float> values) {
  Tensor t(std::move(shape), Dtype::kF16);
  check(values.size() == t.numel(), ErrorKind::kInvalidArgument,
        "value count does not match shape");
  for (std::size_t i = 0; i < values.size(); ++i)
    t.set_f16(i, fp16_round(values[i]));
  return t;
}

std::size_t Tensor::offset(std::span<const std::int64_t> index) const {
  check(index.size() == shape_.size(), ErrorKind::kInvalidArgument,
        "index rank mismatch");
  std::size_t off = 0;
  for (std::size_t d = 0; d < index.size(); ++d) {
    check(index[d] >= 0 && index[d] < shape_[d], ErrorKind::kInvalidArgument,
          "index out of range");
    off = off * static_cast<std::size_t>(shape_[d]) +
          static_cast<std::size_t>(index[d]);
  }
  return off;
}

Half Tensor::f16(std::size_t i) const {
  std::uint16_t b;
  std::memcpy(&b, data_.data() + 2 * i, 2);
  return Half::from_bits(b);
}

void Tensor::set_f16(std::size_t i, Half v) {
  std::memcpy(data_.data() + 2 * i, &v.bits, 2);
}

float Tensor::f32(std::size_t i) const {
  float f;
  std::memcpy(&f, data_.data() + 4 * i, 4);
  return f;
}

void Tensor::set_f32(std::size_t i, float v) {
  std::memcpy(data_.data() + 4 * i, &v, 4);
}

int Tensor::code(std::size_t i) const {
  switch (dtype_) {
    case Dtype::kI8: return static_cast<std::int8_t>(data_[i]);
    case Dtype::kU8: return data_[i];
    case Dtype::kU4: return (data_[i / 2] >> (4 * (i % 2))) & 0xF;
    default: fail(ErrorKind::kInvalidArgument, "code() on a float tensor");
  }
}

void Tensor::set_code(std::size_t i, int v) {
  switch (dtype_) {
    case Dtype::kI8:
      check(v >= -128 && v <= 127, ErrorKind::kInvalidArgument,
            "i8 code out of range");
      data_[i] = static_cast<std::uint8_t>(static_cast<std::int8_t>(v));
      return;
    case Dtype::kU8:
      check(v >= 0 && v <= 255, ErrorKind::kInvalidArgument,
            "u8 code out of range");
      data_[i] = static_cast<std::uint8_t>(v);
      return;
    case Dtype::kU4: {
      check(v >= 0 && v <= 15, ErrorKind::kInvalidArgument,
            "u4 code out of range");
      const int shift = 4 * static_cast<int>(i % 2);
      auto& byte = data_[i / 2];
      byte = static_cast<std::uint8_t>((byte & ~(0xF << shift)) | (v << shift));
      return;
    }
    default: fail(ErrorKind::kInvalidArgument, "set_code() on a float tensor");
  }
}

float Tensor::value(std::size_t i) const {
  switch (dtype_) {
    case Dtype::kF32: return f32(i);
    case Dtype::kF16: return f16(i).to_float();
    default: return static_cast<float>(code(i));
  }
}

std::vector<float> Tensor::to_floats() const {
  std::vector<float> out(numel_);
  for (std::size_t i = 0; i < numel_; ++i) out[i] = value(i);
  return out;
}

bool Tensor::bit_equal(const Tensor& other) const {
  return shape_ == other.shape_ && dtype_ == other.dtype_ &&
         data_ == other.data_;
}

}  // namespace mixkern
