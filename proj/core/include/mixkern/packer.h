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

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mixkern/half.h"
#include "mixkern/memmodel.h"
#include "mixkern/mma.h"
#include "mixkern/quant.h"

namespace mixkern {

struct ArchProfile {
  std::string name;
  std::uint32_t id = 0;
  MmaShape mma;            // f16 operand tile
  int int8_tile_k = 0;     // k extent of the native i8 tile (model only)
  int int4_tile_k = 0;     // k extent of the native i4 tile (model only)
  bool has_ldmatrix = true;
  int cache_line = 128;
  bool two_fragment = true;
};

const std::vector<ArchProfile>& arch_profiles();
// Throws kInvalidArgument listing the known names.
const ArchProfile& find_arch(std::string_view name);
const ArchProfile& find_arch(std::uint32_t id);
// MIXKERN_ARCH if set, otherwise sm80.
const ArchProfile& default_arch();

enum class LayoutId : std::uint32_t {
  kPassthrough = 0,
  kSingleFragment = 1,
  kTwoFragment = 2,
};

// Offline-packed weights for the B operand of y = x * W^T, W stored [N][K]
// (rows = output features, groups along K).
//
// Codes are padded to 16 rows and to 16 * F columns (F fragments per chunk)
// with each group's zero code. The code words form chunks, one per
// (n-tile, k-tile pair) in row-major grid order; inside a chunk lane l keeps
// F consecutive fragment slices at byte offset l * F * lb, lb = 4 (u4) or
// 8 (8-bit). Scales and zero points follow, group-major over the padded grid.
struct PackedWeights {
  std::uint32_t version = 1;
  int rows = 0;  // N, logical
  int cols = 0;  // K, logical
  int bits = 4;
  int group_size = 128;
  bool zero_point = true;
  std::uint32_t arch_id = 80;
  LayoutId layout = LayoutId::kTwoFragment;
  std::uint32_t perm_id = 0;
  std::vector<std::uint32_t> words;
  std::vector<Half> scales;               // [padded_rows][padded_groups]
  std::vector<std::uint8_t> zero_points;  // same extent when zero_point

  int fragments_per_chunk() const;
  int padded_rows() const;
  int padded_cols() const;
  int padded_groups() const;
  int n_tiles() const { return padded_rows() / 16; }
  int k_tiles() const { return padded_cols() / 16; }
  // 32-bit words one lane holds per 16x16 fragment (1 for u4, 2 for 8-bit).
  int words_per_fragment() const { return bits == 4 ? 1 : 2; }
  std::size_t expected_words() const;
  std::size_t expected_groups() const;

  // Scale and effective zero point (including the i8 bias and the implicit
  // symmetric u4 zero point) of padded row n, group g.
  Half scale_at(int n, int g) const;
  int zero_at(int n, int g) const;

  friend bool operator==(const PackedWeights&, const PackedWeights&) = default;
};

// Offset subtracted from raw 8-bit storage: i8 codes are stored as code ^ 0x80.
int storage_bias(int bits, bool zero_point);

// Position-to-slot map of the in-register code order found by probing the
// I2F extraction with one-hot words. perm[p] = fragment slot of position p.
std::array<int, 8> probe_permutation(int bits);
std::uint32_t permutation_id(const std::array<int, 8>& perm);
// Throws kLayout if id does not encode a permutation of 0..7.
std::array<int, 8> decode_permutation(std::uint32_t id);

// I2F extraction of one lane's code words: raw unsigned codes in register
// order, out[2j + h] = half h of half2 j. Emulates the 0x6400 magic-number
// conversion, so a value is recovered as half(0x6400 | u) - 1024.
std::array<int, 8> i2f_extract(std::span<const std::uint32_t> lane_words, int bits);

// Slot s of a 16x16 chunk fragment: (n, k) inside the tile. Slots 0..3 form
// the B fragment of rows 0..7, slots 4..7 the one of rows 8..15.
std::pair<int, int> tile_slot_coord(int lane, int slot);

// The per-lane slot map obtained by running the widen + ldmatrix.x4 steps on
// an index tile. map[lane][slot] = n * 16 + k.
std::array<std::array<int, 8>, kWarpSize> ldmatrix_slot_map();

PackedWeights pack_weights(const QuantizedTensor& q, const ArchProfile& arch,
                           bool two_fragment = true);
QuantizedTensor unpack_weights(const PackedWeights& p);

// Code words of one 16x16 fragment for every lane.
struct CodeFragment {
  int bits = 4;
  std::array<std::array<std::uint32_t, 2>, kWarpSize> words{};
};

CodeFragment load_code_fragment(const PackedWeights& p, int n_tile, int k_tile);

// Scale and effective zero point for each of the 16 rows of a tile.
struct TileQuant {
  std::array<Half, 16> scale{};
  std::array<int, 16> zero{};
};
TileQuant tile_quant(const PackedWeights& p, int n_tile, int k_tile);

// I2F plus scale: returns the two B fragments (rows 0..7 and 8..15) of the
// tile. Positions are placed by perm_id; throws kLayout if it is malformed.
std::array<Fragment, 2> dequant_fragment(const CodeFragment& codes, const TileQuant& q,
                                         std::uint32_t perm_id);

struct LayoutReport {
  int transactions = 0;     // per cache line of the chunk copy, worst chunk
  int conflict_degree = 0;  // shared-to-register fragment loads, worst chunk
  bool mma_aligned = false;
  bool ok() const { return transactions == 1 && conflict_degree == 1 && mma_aligned; }
};
LayoutReport verify_layout(const PackedWeights& p);

// Reference address patterns for the unpacked layouts.
struct NaiveControls {
  int row_major_tile_transactions = 0;  // u4 16x16 tile from a row-major matrix
  int half_offset_transactions = 0;     // lane i at 64 + 4i, width 4
  int lane_stride_conflict = 0;         // lane i at 128i, width 4
  int column_load_conflict = 0;         // 16-byte rows of a column tile
  int column_load_after_ldmatrix = 0;   // the same bytes read lane-contiguously
};
NaiveControls naive_controls();

void write_packed(const PackedWeights& p, const std::filesystem::path& path);
PackedWeights read_packed(const std::filesystem::path& path);
std::vector<std::uint8_t> serialize_packed(const PackedWeights& p);
PackedWeights deserialize_packed(std::span<const std::uint8_t> bytes);

}  // namespace mixkern
