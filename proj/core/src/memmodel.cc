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

#include "mixkern/memmodel.h"

#include <algorithm>
#include <map>
#include <set>
#include <string>

#include "mixkern/error.h"

namespace mixkern {

void MemConfig::validate() const {
  check(warp_size == kWarpSize, ErrorKind::kInvalidArgument, "warp_size must be 32");
  check(bank_count > 0 && bank_width > 0 && segment_size > 0,
        ErrorKind::kInvalidArgument, "memory config extents must be positive");
}

AccessTrace AccessTrace::strided(std::int64_t base, std::int64_t stride, int width) {
  AccessTrace t;
  t.width = width;
  for (int i = 0; i < kWarpSize; ++i) t.addr[static_cast<std::size_t>(i)] = base + i * stride;
  return t;
}

AccessTrace AccessTrace::from_addresses(const std::vector<std::int64_t>& addrs,
                                        int width) {
  check(addrs.size() <= kWarpSize, ErrorKind::kInvalidArgument,
        "more than 32 lane addresses");
  AccessTrace t;
  t.width = width;
  t.active = 0;
  for (std::size_t i = 0; i < addrs.size(); ++i) {
    t.addr[i] = addrs[i];
    t.active |= 1u << i;
  }
  return t;
}

int coalesce_count(const AccessTrace& t, const MemConfig& cfg) {
  cfg.validate();
  std::set<std::int64_t> segments;
  for (int l = 0; l < kWarpSize; ++l) {
    if (!t.is_active(l)) continue;
    const std::int64_t a = t.addr[static_cast<std::size_t>(l)];
    check(a >= 0 && t.width > 0, ErrorKind::kInvalidArgument, "malformed access trace");
    for (std::int64_t s = a / cfg.segment_size; s <= (a + t.width - 1) / cfg.segment_size; ++s)
      segments.insert(s);
  }
  return static_cast<int>(segments.size());
}

int bank_conflict_degree(const AccessTrace& t, const MemConfig& cfg) {
  cfg.validate();
  check(t.width > 0 && t.width <= 16, ErrorKind::kInvalidArgument,
        "access width must be 1..16 bytes");
  const int phase_lanes = t.width <= 4 ? 32 : (t.width <= 8 ? 16 : 8);
  int degree = 0;
  for (int p0 = 0; p0 < kWarpSize; p0 += phase_lanes) {
    std::map<int, std::set<std::int64_t>> words_per_bank;
    for (int l = p0; l < p0 + phase_lanes; ++l) {
      if (!t.is_active(l)) continue;
      const std::int64_t a = t.addr[static_cast<std::size_t>(l)];
      check(a >= 0, ErrorKind::kInvalidArgument, "negative address");
      for (std::int64_t w = a / cfg.bank_width; w <= (a + t.width - 1) / cfg.bank_width; ++w)
        words_per_bank[static_cast<int>(w % cfg.bank_count)].insert(w);
    }
    for (const auto& [bank, words] : words_per_bank)
      degree = std::max(degree, static_cast<int>(words.size()));
  }
  return degree;
}

int swizzle_index(int row, int chunk) {
  check(chunk >= 0 && chunk < 8, ErrorKind::kInvalidArgument,
        "chunk index out of range: " + std::to_string(chunk));
  check(row >= 0, ErrorKind::kInvalidArgument, "negative row");
  return chunk ^ (row % 8);
}

SharedTile::SharedTile(int rows, int row_bytes, int row_stride, bool swizzled)
    : rows_(rows), row_bytes_(row_bytes), row_stride_(row_stride), swizzled_(swizzled) {
  check(rows > 0 && row_bytes > 0 && row_bytes % 2 == 0, ErrorKind::kInvalidArgument,
        "shared tile extents must be positive and 16-bit aligned");
  check(row_stride >= row_bytes, ErrorKind::kInvalidArgument,
        "row stride smaller than row payload");
  check(!swizzled || row_stride % 128 == 0, ErrorKind::kInvalidArgument,
        "swizzled tiles need a 128-byte multiple row stride");
  mem_.assign(static_cast<std::size_t>(rows) * static_cast<std::size_t>(row_stride), 0);
}

std::int64_t SharedTile::address(int row, int col_byte) const {
  check(row >= 0 && row < rows_ && col_byte >= 0 && col_byte < row_bytes_,
        ErrorKind::kInvalidArgument, "shared tile coordinate out of range");
  int b = col_byte;
  if (swizzled_) {
    const int unit = b / 128;
    const int chunk = (b % 128) / 16;
    b = unit * 128 + swizzle_index(row, chunk) * 16 + b % 16;
  }
  return static_cast<std::int64_t>(row) * row_stride_ + b;
}

std::uint16_t SharedTile::load16(std::int64_t addr) const {
  check(addr >= 0 && addr + 2 <= static_cast<std::int64_t>(mem_.size()),
        ErrorKind::kLayout, "shared load out of range");
  const auto i = static_cast<std::size_t>(addr);
  return static_cast<std::uint16_t>(mem_[i] | (mem_[i + 1] << 8));
}

void SharedTile::store16(std::int64_t addr, std::uint16_t v) {
  check(addr >= 0 && addr + 2 <= static_cast<std::int64_t>(mem_.size()),
        ErrorKind::kLayout, "shared store out of range");
  const auto i = static_cast<std::size_t>(addr);
  mem_[i] = static_cast<std::uint8_t>(v);
  mem_[i + 1] = static_cast<std::uint8_t>(v >> 8);
}

std::uint32_t SharedTile::load32(std::int64_t addr) const {
  return load16(addr) | (static_cast<std::uint32_t>(load16(addr + 2)) << 16);
}

LdmatrixResult ldmatrix_emulate(const SharedTile& tile,
                                const std::vector<std::int64_t>& row_addrs,
                                int count) {
  check(count == 1 || count == 2 || count == 4, ErrorKind::kInvalidArgument,
        "ldmatrix count must be 1, 2 or 4");
  check(row_addrs.size() >= static_cast<std::size_t>(8 * count),
        ErrorKind::kInvalidArgument, "ldmatrix needs 8 row addresses per matrix");
  std::vector<std::int64_t> used(row_addrs.begin(), row_addrs.begin() + 8 * count);
  for (auto a : used)
    check(a % 16 == 0, ErrorKind::kLayout,
          "ldmatrix row address " + std::to_string(a) + " not 16-byte aligned");

  LdmatrixResult r;
  r.count = count;
  r.trace = AccessTrace::from_addresses(used, 16);
  for (int j = 0; j < count; ++j) {
    for (int l = 0; l < kWarpSize; ++l) {
      const std::int64_t row = used[static_cast<std::size_t>(8 * j + l / 4)];
      r.regs[static_cast<std::size_t>(l)][static_cast<std::size_t>(j)] =
          tile.load32(row + 4 * (l % 4));
    }
  }
  return r;
}

}  // namespace mixkern
