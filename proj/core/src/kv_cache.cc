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

#include "mixkern/kv_cache.h"

#include <algorithm>
#include <fstream>
#include <iterator>

#include "byte_io.h"
#include "mixkern/error.h"

namespace mixkern {

namespace detail {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check(in.good(), ErrorKind::kFormat, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  check(out.good(), ErrorKind::kFormat, "cannot open " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  check(out.good(), ErrorKind::kFormat, "write failed: " + path);
}

}  // namespace detail

namespace {

QuantizedTensor empty_head(int capacity, int head_dim, int bits, int group,
                           bool zero_point) {
  QuantizedTensor q;
  q.bits = bits;
  q.group_size = group;
  q.zero_point = zero_point && bits != 16;
  q.rows = capacity;
  q.cols = head_dim;
  q.logical_shape = {capacity, head_dim};
  q.codes = Tensor({capacity, head_dim}, code_dtype(bits, q.zero_point));
  if (bits != 16) {
    q.scales = Tensor({capacity, q.groups()}, Dtype::kF16);
    if (q.zero_point) q.zero_points = Tensor({capacity, q.groups()}, Dtype::kU8);
  }
  return q;
}

void store_row(QuantizedTensor& q, std::int64_t row, std::span<const Half> values) {
  if (q.bits == 16) {
    for (std::int64_t c = 0; c < q.cols; ++c)
      q.codes.set_f16(static_cast<std::size_t>(row * q.cols + c),
                      values[static_cast<std::size_t>(c)]);
    return;
  }
  std::vector<float> f(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) f[i] = values[i].to_float();
  for (std::int64_t g = 0; g < q.groups(); ++g) {
    const std::int64_t c0 = g * q.group_size;
    const std::int64_t c1 = std::min<std::int64_t>(c0 + q.group_size, q.cols);
    const auto chunk = std::span<const float>(f).subspan(
        static_cast<std::size_t>(c0), static_cast<std::size_t>(c1 - c0));
    const GroupParams p = choose_group_params(chunk, q.bits, q.zero_point);
    const auto gi = static_cast<std::size_t>(row * q.groups() + g);
    q.scales.set_f16(gi, p.scale);
    if (q.zero_point) q.zero_points.set_code(gi, p.zero_point);
    for (std::int64_t c = c0; c < c1; ++c)
      q.codes.set_code(static_cast<std::size_t>(row * q.cols + c),
                       encode_value(f[static_cast<std::size_t>(c)], p, q.bits,
                                    q.zero_point));
  }
}

Tensor dequantized_rows(const QuantizedTensor& q, std::int64_t tokens) {
  Tensor out({tokens, q.cols}, Dtype::kF16);
  for (std::int64_t t = 0; t < tokens; ++t) {
    for (std::int64_t c = 0; c < q.cols; ++c) {
      const auto i = static_cast<std::size_t>(t * q.cols + c);
      if (q.passthrough()) {
        out.set_f16(i, q.codes.f16(i));
      } else {
        const std::int64_t g = c / q.group_size;
        out.set_f16(i, dequantize_value(q.codes.code(i), q.zero_point_of(t, g),
                                        q.scale(t, g)));
      }
    }
  }
  return out;
}

}  // namespace

KvCache::KvCache(int layers, int heads, int head_dim, int capacity, int kv_bits,
                 int group_size, bool zero_point)
    : layers_(layers),
      heads_(heads),
      head_dim_(head_dim),
      capacity_(capacity),
      kv_bits_(kv_bits),
      group_size_(std::min(group_size, head_dim)),
      zero_point_(zero_point && kv_bits != 16) {
  check(layers > 0 && heads > 0 && capacity > 0, ErrorKind::kInvalidArgument,
        "KV cache extents must be positive");
  check(head_dim > 0 && head_dim % 8 == 0, ErrorKind::kInvalidArgument,
        "head_dim must be a positive multiple of 8");
  check(kv_bits == 4 || kv_bits == 8 || kv_bits == 16, ErrorKind::kInvalidArgument,
        "kv_bits must be 4, 8 or 16");
  check(group_size > 0, ErrorKind::kInvalidArgument, "group_size must be positive");
  tokens_.assign(static_cast<std::size_t>(layers), 0);
  const auto n = static_cast<std::size_t>(layers * heads);
  k_.reserve(n);
  v_.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    k_.push_back(empty_head(capacity, head_dim, kv_bits, group_size_, zero_point_));
    v_.push_back(empty_head(capacity, head_dim, kv_bits, group_size_, zero_point_));
  }
}

std::size_t KvCache::slot(int layer, int head) const {
  check(layer >= 0 && layer < layers_ && head >= 0 && head < heads_,
        ErrorKind::kInvalidArgument, "layer/head out of range");
  return static_cast<std::size_t>(layer * heads_ + head);
}

void KvCache::append(int layer, const Tensor& k_new, const Tensor& v_new) {
  check(k_new.dtype() == Dtype::kF16 && v_new.dtype() == Dtype::kF16,
        ErrorKind::kInvalidArgument, "KV rows must be f16");
  check(k_new.shape() == v_new.shape(), ErrorKind::kInvalidArgument,
        "K and V rows differ in shape");
  std::int64_t n = 0;
  if (k_new.rank() == 2) {
    n = 1;
  } else {
    check(k_new.rank() == 3, ErrorKind::kInvalidArgument,
          "KV rows must be [heads, head_dim] or [n, heads, head_dim]");
    n = k_new.dim(0);
  }
  const auto& s = k_new.shape();
  check(s[s.size() - 2] == heads_ && s.back() == head_dim_,
        ErrorKind::kInvalidArgument, "KV rows do not match heads x head_dim");
  auto& count = tokens_.at(static_cast<std::size_t>(layer));
  check(count + n <= capacity_, ErrorKind::kCapacity,
        "KV cache capacity " + std::to_string(capacity_) + " exceeded");

  std::vector<Half> row(static_cast<std::size_t>(head_dim_));
  for (std::int64_t t = 0; t < n; ++t) {
    for (int h = 0; h < heads_; ++h) {
      const std::size_t base =
          static_cast<std::size_t>((t * heads_ + h) * head_dim_);
      for (int c = 0; c < head_dim_; ++c) row[static_cast<std::size_t>(c)] = k_new.f16(base + c);
      store_row(k_[slot(layer, h)], count + t, row);
      for (int c = 0; c < head_dim_; ++c) row[static_cast<std::size_t>(c)] = v_new.f16(base + c);
      store_row(v_[slot(layer, h)], count + t, row);
    }
  }
  count += n;
}

const QuantizedTensor& KvCache::keys(int layer, int head) const {
  return k_[slot(layer, head)];
}

const QuantizedTensor& KvCache::values(int layer, int head) const {
  return v_[slot(layer, head)];
}

Tensor KvCache::dequantized_keys(int layer, int head) const {
  return dequantized_rows(keys(layer, head), tokens(layer));
}

Tensor KvCache::dequantized_values(int layer, int head) const {
  return dequantized_rows(values(layer, head), tokens(layer));
}

std::int64_t KvCache::macro_tile_count(int layer) const {
  return (tokens(layer) + kMacroTileTokens - 1) / kMacroTileTokens;
}

TokenRange KvCache::macro_tile(int layer, std::int64_t index) const {
  check(index >= 0 && index < macro_tile_count(layer), ErrorKind::kInvalidArgument,
        "macro-tile index out of range");
  const std::int64_t first = index * kMacroTileTokens;
  return {first, std::min<std::int64_t>(kMacroTileTokens, tokens(layer) - first)};
}

bool KvCache::operator==(const KvCache& o) const {
  if (layers_ != o.layers_ || heads_ != o.heads_ || head_dim_ != o.head_dim_ ||
      capacity_ != o.capacity_ || kv_bits_ != o.kv_bits_ ||
      group_size_ != o.group_size_ || zero_point_ != o.zero_point_ ||
      tokens_ != o.tokens_)
    return false;
  for (int l = 0; l < layers_; ++l)
    for (int h = 0; h < heads_; ++h) {
      if (!dequantized_keys(l, h).bit_equal(o.dequantized_keys(l, h))) return false;
      if (!dequantized_values(l, h).bit_equal(o.dequantized_values(l, h))) return false;
    }
  return true;
}

KvCache quantize_kv(const Tensor& k_new, const Tensor& v_new, const KvCache& cache,
                    int layer) {
  KvCache next = cache;
  next.append(layer, k_new, v_new);
  return next;
}

namespace {

constexpr std::uint32_t kKvVersion = 1;

void write_rows(detail::ByteWriter& w, const QuantizedTensor& q, std::int64_t tokens) {
  const auto code_bytes = storage_bytes(q.codes.dtype(),
                                        static_cast<std::size_t>(tokens * q.cols));
  w.raw(q.codes.bytes().first(code_bytes));
  if (q.bits == 16) return;
  const auto n = static_cast<std::size_t>(tokens * q.groups());
  w.raw(q.scales.bytes().first(2 * n));
  if (q.zero_point) w.raw(q.zero_points.bytes().first(n));
}

void read_rows(detail::ByteReader& r, QuantizedTensor& q, std::int64_t tokens) {
  const auto code_bytes = storage_bytes(q.codes.dtype(),
                                        static_cast<std::size_t>(tokens * q.cols));
  auto src = r.raw(code_bytes);
  std::copy(src.begin(), src.end(), q.codes.bytes().begin());
  if (q.bits == 16) return;
  const auto n = static_cast<std::size_t>(tokens * q.groups());
  src = r.raw(2 * n);
  std::copy(src.begin(), src.end(), q.scales.bytes().begin());
  if (q.zero_point) {
    src = r.raw(n);
    std::copy(src.begin(), src.end(), q.zero_points.bytes().begin());
  }
}

}  // namespace

void write_kv_cache(const KvCache& c, const std::filesystem::path& path) {
  detail::ByteWriter w;
  w.magic("TMKV");
  w.u32(kKvVersion);
  w.u32(static_cast<std::uint32_t>(c.layers_));
  w.u32(static_cast<std::uint32_t>(c.heads_));
  w.u32(static_cast<std::uint32_t>(c.head_dim_));
  w.u32(static_cast<std::uint32_t>(c.capacity_));
  w.u8(static_cast<std::uint8_t>(c.kv_bits_));
  w.u32(static_cast<std::uint32_t>(c.group_size_));
  w.u8(c.zero_point_ ? 1 : 0);
  for (auto t : c.tokens_) w.u32(static_cast<std::uint32_t>(t));
  for (int l = 0; l < c.layers_; ++l)
    for (int h = 0; h < c.heads_; ++h) {
      write_rows(w, c.k_[c.slot(l, h)], c.tokens_[static_cast<std::size_t>(l)]);
      write_rows(w, c.v_[c.slot(l, h)], c.tokens_[static_cast<std::size_t>(l)]);
    }
  detail::write_file(path.string(), w.bytes());
}

KvCache read_kv_cache(const std::filesystem::path& path) {
  const auto data = detail::read_file(path.string());
  detail::ByteReader r(data);
  check(r.magic("TMKV"), ErrorKind::kFormat, "bad magic: not a KV cache file");
  check(r.u32() == kKvVersion, ErrorKind::kFormat, "unsupported KV cache version");
  const int layers = static_cast<int>(r.u32());
  const int heads = static_cast<int>(r.u32());
  const int head_dim = static_cast<int>(r.u32());
  const int capacity = static_cast<int>(r.u32());
  const int bits = r.u8();
  const int group = static_cast<int>(r.u32());
  const bool zp = r.u8() != 0;
  KvCache c;
  try {
    c = KvCache(layers, heads, head_dim, capacity, bits, group, zp);
  } catch (const Error& e) {
    fail(ErrorKind::kFormat, std::string("bad KV cache header: ") + e.what());
  }
  for (auto& t : c.tokens_) {
    t = r.u32();
    check(t <= capacity, ErrorKind::kFormat, "token count exceeds capacity");
  }
  for (int l = 0; l < layers; ++l)
    for (int h = 0; h < heads; ++h) {
      read_rows(r, c.k_[c.slot(l, h)], c.tokens_[static_cast<std::size_t>(l)]);
      read_rows(r, c.v_[c.slot(l, h)], c.tokens_[static_cast<std::size_t>(l)]);
    }
  check(r.remaining() == 0, ErrorKind::kFormat, "trailing bytes in KV cache file");
  return c;
}

}  // namespace mixkern
