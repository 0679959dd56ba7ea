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

#include "mixkern/quant.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "mixkern/error.h"

namespace mixkern {

namespace {

void check_bits(int bits, bool allow16) {
  const bool ok = bits == 4 || bits == 8 || (allow16 && bits == 16);
  check(ok, ErrorKind::kInvalidArgument,
        "unsupported bit width " + std::to_string(bits));
}

int qmax_unsigned(int bits) { return (1 << bits) - 1; }

}  // namespace

void QuantSpec::validate() const {
  check_bits(weight_bits, true);
  check_bits(kv_bits, true);
  check(act_bits == 16, ErrorKind::kInvalidArgument,
        "only 16-bit activations are supported");
  check(group_size > 0, ErrorKind::kInvalidArgument,
        "group_size must be positive");
}

Dtype code_dtype(int bits, bool zero_point) {
  switch (bits) {
    case 4: return Dtype::kU4;
    case 8: return zero_point ? Dtype::kU8 : Dtype::kI8;
    case 16: return Dtype::kF16;
  }
  fail(ErrorKind::kInvalidArgument, "unsupported bit width " + std::to_string(bits));
}

int implicit_zero_point(int bits) { return bits == 4 ? 8 : 0; }

int zero_code(int bits, bool zero_point, int zp) {
  if (zero_point) return zp;
  return bits == 4 ? 8 : 0;
}

int QuantizedTensor::zero_point_of(std::int64_t r, std::int64_t g) const {
  if (!zero_point || bits == 16) return implicit_zero_point(bits);
  return zero_points.code(static_cast<std::size_t>(r * groups() + g));
}

void QuantizedTensor::validate() const {
  check_bits(bits, true);
  check(group_size > 0, ErrorKind::kInvalidArgument, "group_size must be positive");
  check(codes.numel() == static_cast<std::size_t>(rows * cols),
        ErrorKind::kInvalidArgument, "code count does not match shape");
  check(codes.dtype() == code_dtype(bits, zero_point),
        ErrorKind::kInvalidArgument, "code dtype does not match bit width");
  if (bits == 16) return;
  const auto n_scales = static_cast<std::size_t>(rows * groups());
  check(scales.numel() == n_scales && scales.dtype() == Dtype::kF16,
        ErrorKind::kInvalidArgument, "scale count does not match group count");
  for (std::size_t i = 0; i < n_scales; ++i) {
    const Half s = scales.f16(i);
    check(s.is_finite() && !s.sign() && s.to_float() > 0.0f,
          ErrorKind::kInvalidArgument, "scales must be finite and positive");
  }
  if (zero_point) {
    check(zero_points.numel() == n_scales, ErrorKind::kInvalidArgument,
          "zero point count does not match group count");
    for (std::size_t i = 0; i < n_scales; ++i)
      check(zero_points.code(i) <= qmax_unsigned(bits),
            ErrorKind::kInvalidArgument, "zero point out of range");
  }
}

GroupParams choose_group_params(std::span<const float> values, int bits,
                                bool zero_point) {
  check_bits(bits, false);
  float lo = values.empty() ? 0.0f : values[0];
  float hi = lo;
  for (float v : values) {
    check(std::isfinite(v), ErrorKind::kInvalidArgument,
          "cannot quantize non-finite values");
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }

  GroupParams p;
  const int base_zp = zero_point ? 0 : implicit_zero_point(bits);
  if (lo == hi) {
    if (lo == 0.0f) {
      p.scale = fp16_round(kScaleEpsilon);
      p.zero_point = base_zp;
    } else {
      // One step of |c| reaches c exactly from the zero point.
      p.scale = fp16_round(std::fabs(lo));
      p.zero_point = (zero_point && lo < 0.0f) ? 1 : base_zp;
    }
    return p;
  }

  if (zero_point) {
    lo = std::min(lo, 0.0f);
    hi = std::max(hi, 0.0f);
    const float raw = std::max((hi - lo) / static_cast<float>(qmax_unsigned(bits)),
                               kScaleEpsilon);
    p.scale = fp16_round_up(raw);
    const float zp = std::nearbyint(-lo / p.scale.to_float());
    p.zero_point = static_cast<int>(
        std::clamp(zp, 0.0f, static_cast<float>(qmax_unsigned(bits))));
  } else {
    const float amax = std::max(std::fabs(lo), std::fabs(hi));
    const float raw = std::max(amax / static_cast<float>((1 << (bits - 1)) - 1),
                               kScaleEpsilon);
    p.scale = fp16_round_up(raw);
    p.zero_point = base_zp;
  }
  return p;
}

int encode_value(float v, const GroupParams& p, int bits, bool zero_point) {
  const float q = std::nearbyint(v / p.scale.to_float());
  if (zero_point || bits == 4) {
    // Unsigned storage: asymmetric, or symmetric u4 around implicit zp 8.
    const float c = q + static_cast<float>(p.zero_point);
    return static_cast<int>(
        std::clamp(c, 0.0f, static_cast<float>(qmax_unsigned(bits))));
  }
  return static_cast<int>(std::clamp(q, -128.0f, 127.0f));
}

namespace {

void quantize_row(std::span<const float> row, std::int64_t r, int bits,
                  int group_size, bool zero_point, QuantizedTensor& q) {
  const std::int64_t groups = q.groups();
  for (std::int64_t g = 0; g < groups; ++g) {
    const std::int64_t c0 = g * group_size;
    const std::int64_t c1 = std::min<std::int64_t>(c0 + group_size, q.cols);
    const auto chunk = row.subspan(static_cast<std::size_t>(c0),
                                   static_cast<std::size_t>(c1 - c0));
    const GroupParams p = choose_group_params(chunk, bits, zero_point);
    const auto gi = static_cast<std::size_t>(r * groups + g);
    q.scales.set_f16(gi, p.scale);
    if (zero_point) q.zero_points.set_code(gi, p.zero_point);
    for (std::int64_t c = c0; c < c1; ++c) {
      q.codes.set_code(static_cast<std::size_t>(r * q.cols + c),
                       encode_value(row[static_cast<std::size_t>(c)], p, bits,
                                    zero_point));
    }
  }
}

QuantizedTensor make_empty(std::vector<std::int64_t> logical, std::int64_t rows,
                           std::int64_t cols, int bits, int group_size,
                           bool zero_point) {
  check_bits(bits, true);
  check(group_size > 0, ErrorKind::kInvalidArgument, "group_size must be positive");
  QuantizedTensor q;
  q.bits = bits;
  q.group_size = group_size;
  q.zero_point = zero_point && bits != 16;
  q.logical_shape = std::move(logical);
  q.rows = rows;
  q.cols = cols;
  q.codes = Tensor({rows, cols}, code_dtype(bits, q.zero_point));
  if (bits != 16) {
    q.scales = Tensor({rows, q.groups()}, Dtype::kF16);
    if (q.zero_point) q.zero_points = Tensor({rows, q.groups()}, Dtype::kU8);
  }
  return q;
}

}  // namespace

QuantizedTensor quantize_group(std::span<const Half> values, int bits,
                               int group_size, bool zero_point) {
  check_bits(bits, false);
  const auto n = static_cast<std::int64_t>(values.size());
  QuantizedTensor q = make_empty({n}, 1, n, bits, group_size, zero_point);
  std::vector<float> row(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) row[i] = values[i].to_float();
  quantize_row(row, 0, bits, group_size, zero_point, q);
  return q;
}

QuantizedTensor quantize_rows(const Tensor& values, int bits, int group_size,
                              bool zero_point) {
  check(values.dtype() == Dtype::kF16, ErrorKind::kInvalidArgument,
        "quantize_rows expects an f16 tensor");
  check(values.rank() == 1 || values.rank() == 2, ErrorKind::kInvalidArgument,
        "quantize_rows expects a 1-D or 2-D tensor");
  const std::int64_t rows = values.rank() == 2 ? values.dim(0) : 1;
  const std::int64_t cols = values.rank() == 2 ? values.dim(1) : values.dim(0);
  QuantizedTensor q =
      make_empty(values.shape(), rows, cols, bits, group_size, zero_point);
  if (bits == 16) {
    std::copy(values.bytes().begin(), values.bytes().end(),
              q.codes.bytes().begin());
    return q;
  }
  std::vector<float> row(static_cast<std::size_t>(cols));
  for (std::int64_t r = 0; r < rows; ++r) {
    for (std::int64_t c = 0; c < cols; ++c)
      row[static_cast<std::size_t>(c)] =
          values.f16(static_cast<std::size_t>(r * cols + c)).to_float();
    quantize_row(row, r, bits, group_size, zero_point, q);
  }
  return q;
}

Tensor dequantize(const QuantizedTensor& q) {
  Tensor out(q.logical_shape, Dtype::kF16);
  if (q.passthrough()) {
    std::copy(q.codes.bytes().begin(), q.codes.bytes().end(), out.bytes().begin());
    return out;
  }
  const std::int64_t groups = q.groups();
  for (std::int64_t r = 0; r < q.rows; ++r) {
    for (std::int64_t g = 0; g < groups; ++g) {
      const Half scale = q.scale(r, g);
      const int zp = q.zero_point_of(r, g);
      const std::int64_t c1 = std::min<std::int64_t>((g + 1) * q.group_size, q.cols);
      for (std::int64_t c = g * q.group_size; c < c1; ++c) {
        const auto i = static_cast<std::size_t>(r * q.cols + c);
        out.set_f16(i, dequantize_value(q.codes.code(i), zp, scale));
      }
    }
  }
  return out;
}

}  // namespace mixkern
