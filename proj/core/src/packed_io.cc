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

#include <string>

#include "byte_io.h"
#include "mixkern/error.h"
#include "mixkern/packer.h"

namespace mixkern {

namespace {

constexpr std::uint32_t kPackedVersion = 1;

void check_header(const PackedWeights& p) {
  auto bad = [](const std::string& what) { fail(ErrorKind::kFormat, "bad packed header: " + what); };
  if (p.version != kPackedVersion) bad("unsupported version " + std::to_string(p.version));
  if (p.bits != 4 && p.bits != 8 && p.bits != 16) bad("bits " + std::to_string(p.bits));
  if (p.rows <= 0 || p.cols <= 0) bad("empty shape");
  if (p.group_size <= 0) bad("group_size");
  const auto layout = static_cast<std::uint32_t>(p.layout);
  if (layout > 2) bad("layout id " + std::to_string(layout));
  if ((p.bits == 16) != (p.layout == LayoutId::kPassthrough)) bad("layout does not match bits");
  if (p.bits != 16 && p.group_size % 16 != 0) bad("group_size not a k-tile multiple");
  try {
    find_arch(p.arch_id);
  } catch (const Error&) {
    bad("arch id " + std::to_string(p.arch_id));
  }
}

}  // namespace

std::vector<std::uint8_t> serialize_packed(const PackedWeights& p) {
  check_header(p);
  detail::ByteWriter w;
  w.magic("TMPK");
  w.u32(p.version);
  w.u32(static_cast<std::uint32_t>(p.rows));
  w.u32(static_cast<std::uint32_t>(p.cols));
  w.u8(static_cast<std::uint8_t>(p.bits));
  w.u32(static_cast<std::uint32_t>(p.group_size));
  w.u8(p.zero_point ? 1 : 0);
  w.u32(p.arch_id);
  w.u32(static_cast<std::uint32_t>(p.layout));
  w.u32(p.perm_id);
  for (auto word : p.words) w.u32(word);
  for (auto s : p.scales) {
    w.u8(static_cast<std::uint8_t>(s.bits));
    w.u8(static_cast<std::uint8_t>(s.bits >> 8));
  }
  w.raw(p.zero_points);
  return w.bytes();
}

PackedWeights deserialize_packed(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  check(r.magic("TMPK"), ErrorKind::kFormat, "bad magic: not a packed weight file");
  PackedWeights p;
  p.version = r.u32();
  p.rows = static_cast<int>(r.u32());
  p.cols = static_cast<int>(r.u32());
  p.bits = r.u8();
  p.group_size = static_cast<int>(r.u32());
  p.zero_point = r.u8() != 0;
  p.arch_id = r.u32();
  p.layout = static_cast<LayoutId>(r.u32());
  p.perm_id = r.u32();
  check_header(p);

  p.words.resize(p.expected_words());
  for (auto& word : p.words) word = r.u32();
  const std::size_t groups = p.expected_groups();
  p.scales.resize(groups);
  for (auto& s : p.scales) {
    const auto lo = r.u8();
    s = Half::from_bits(static_cast<std::uint16_t>(lo | (r.u8() << 8)));
  }
  if (p.zero_point && p.bits != 16) {
    const auto z = r.raw(groups);
    p.zero_points.assign(z.begin(), z.end());
  }
  check(r.remaining() == 0, ErrorKind::kFormat, "trailing bytes after packed payload");
  return p;
}

void write_packed(const PackedWeights& p, const std::filesystem::path& path) {
  detail::write_file(path.string(), serialize_packed(p));
}

PackedWeights read_packed(const std::filesystem::path& path) {
  return deserialize_packed(detail::read_file(path.string()));
}

}  // namespace mixkern
