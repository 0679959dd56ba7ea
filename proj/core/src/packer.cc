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

#include "mixkern/packer.h"

#include <algorithm>
#include <cstdlib>
#include <string>

#include "mixkern/error.h"

namespace mixkern {

namespace {

constexpr std::uint16_t kHalfOne = 0x3C00u;

int round_up(int x, int m) { return (x + m - 1) / m * m; }

// Global column offset of a 128-byte shared slice: 64 widened codes.
constexpr int kSliceCols = 64;

std::uint16_t reg_half(const LdmatrixResult& r, int lane, int slot) {
  const std::uint32_t reg =
      r.regs[static_cast<std::size_t>(lane)][static_cast<std::size_t>(slot / 2)];
  return static_cast<std::uint16_t>(reg >> (16 * (slot % 2)));
}

// Row addresses for an x4 load of k-tile `kt` (0..3) of a 16-row slice:
// matrices (n0-7, k0-7), (n0-7, k8-15), (n8-15, k0-7), (n8-15, k8-15).
std::vector<std::int64_t> x4_row_addresses(const SharedTile& tile, int kt) {
  std::vector<std::int64_t> addrs(kWarpSize);
  for (int lane = 0; lane < kWarpSize; ++lane) {
    const int j = lane / 8;
    const int n = (j / 2) * 8 + lane % 8;
    const int k = kt * 16 + (j % 2) * 8;
    addrs[static_cast<std::size_t>(lane)] = tile.address(n, 2 * k);
  }
  return addrs;
}

std::size_t word_index(const PackedWeights& p, int nt, int kt, int lane, int w) {
  const int f_count = p.fragments_per_chunk();
  const int wpf = p.words_per_fragment();
  const std::size_t chunk =
      static_cast<std::size_t>(nt) * static_cast<std::size_t>(p.k_tiles() / f_count) +
      static_cast<std::size_t>(kt / f_count);
  return chunk * static_cast<std::size_t>(kWarpSize * f_count * wpf) +
         static_cast<std::size_t>(lane * f_count * wpf + (kt % f_count) * wpf + w);
}

// Padded raw code grid [padded_rows][padded_cols] recovered through the
// canonical slot map.
std::vector<std::uint16_t> raw_code_grid(const PackedWeights& p) {
  const int kp = p.padded_cols();
  std::vector<std::uint16_t> grid(static_cast<std::size_t>(p.padded_rows()) *
                                  static_cast<std::size_t>(kp));
  const auto map = ldmatrix_slot_map();
  for (int nt = 0; nt < p.n_tiles(); ++nt)
    for (int kt = 0; kt < p.k_tiles(); ++kt) {
      const CodeFragment cf = load_code_fragment(p, nt, kt);
      for (int lane = 0; lane < kWarpSize; ++lane) {
        const auto raw = i2f_extract(
            std::span<const std::uint32_t>(cf.words[static_cast<std::size_t>(lane)])
                .first(static_cast<std::size_t>(p.words_per_fragment())),
            p.bits);
        for (int s = 0; s < 8; ++s) {
          const int idx = map[static_cast<std::size_t>(lane)][static_cast<std::size_t>(s)];
          const int n = nt * 16 + idx / 16;
          const int k = kt * 16 + idx % 16;
          grid[static_cast<std::size_t>(n) * static_cast<std::size_t>(kp) +
               static_cast<std::size_t>(k)] =
              static_cast<std::uint16_t>(raw[static_cast<std::size_t>(s)]);
        }
      }
    }
  return grid;
}

}  // namespace

const std::vector<ArchProfile>& arch_profiles() {
  static const std::vector<ArchProfile> profiles = {
      {"sm75", 75, MmaShape{}, 16, 32, true, 128, true},
      {"sm80", 80, MmaShape{}, 32, 64, true, 128, true},
      {"sm90", 90, MmaShape{}, 64, 128, true, 128, true},
  };
  return profiles;
}

const ArchProfile& find_arch(std::string_view name) {
  std::string known;
  for (const auto& a : arch_profiles()) {
    if (a.name == name) return a;
    known += (known.empty() ? "" : ", ") + a.name;
  }
  fail(ErrorKind::kInvalidArgument,
       "unknown arch profile '" + std::string(name) + "' (known: " + known + ")");
}

const ArchProfile& find_arch(std::uint32_t id) {
  for (const auto& a : arch_profiles())
    if (a.id == id) return a;
  fail(ErrorKind::kInvalidArgument, "unknown arch id " + std::to_string(id));
}

const ArchProfile& default_arch() {
  const char* env = std::getenv("MIXKERN_ARCH");
  return find_arch(env != nullptr && *env != '\0' ? std::string_view(env) : "sm80");
}

int PackedWeights::fragments_per_chunk() const {
  return layout == LayoutId::kTwoFragment ? 2 : 1;
}

int PackedWeights::padded_rows() const { return bits == 16 ? rows : round_up(rows, 16); }

int PackedWeights::padded_cols() const {
  return bits == 16 ? cols : round_up(cols, 16 * fragments_per_chunk());
}

int PackedWeights::padded_groups() const {
  return (padded_cols() + group_size - 1) / group_size;
}

std::size_t PackedWeights::expected_words() const {
  const std::size_t n = static_cast<std::size_t>(padded_rows()) *
                        static_cast<std::size_t>(padded_cols());
  if (bits == 16) return (n + 1) / 2;
  return n * static_cast<std::size_t>(bits) / 32;
}

std::size_t PackedWeights::expected_groups() const {
  if (bits == 16) return 0;
  return static_cast<std::size_t>(padded_rows()) * static_cast<std::size_t>(padded_groups());
}

Half PackedWeights::scale_at(int n, int g) const {
  return scales.at(static_cast<std::size_t>(n) * static_cast<std::size_t>(padded_groups()) +
                   static_cast<std::size_t>(g));
}

int PackedWeights::zero_at(int n, int g) const {
  if (bits == 16) return 0;
  if (zero_point)
    return zero_points.at(static_cast<std::size_t>(n) *
                              static_cast<std::size_t>(padded_groups()) +
                          static_cast<std::size_t>(g));
  return implicit_zero_point(bits) + storage_bias(bits, zero_point);
}

int storage_bias(int bits, bool zero_point) { return bits == 8 && !zero_point ? 128 : 0; }

std::array<int, 8> i2f_extract(std::span<const std::uint32_t> lane_words, int bits) {
  check(bits == 4 || bits == 8, ErrorKind::kInvalidArgument, "I2F handles 4 or 8 bits");
  check(lane_words.size() >= static_cast<std::size_t>(bits == 4 ? 1 : 2),
        ErrorKind::kInvalidArgument, "not enough code words for one fragment");
  std::array<int, 8> out{};
  for (int j = 0; j < 4; ++j) {
    std::uint32_t x = 0;
    if (bits == 4)
      x = (lane_words[0] >> (4 * j)) & 0x000F000Fu;
    else
      x = (lane_words[static_cast<std::size_t>(j / 2)] >> (8 * (j % 2))) & 0x00FF00FFu;
    x |= 0x64006400u;
    for (int h = 0; h < 2; ++h) {
      const Half v = Half::from_bits(static_cast<std::uint16_t>(x >> (16 * h)));
      out[static_cast<std::size_t>(2 * j + h)] = static_cast<int>(v.to_float() - 1024.0f);
    }
  }
  return out;
}

std::array<int, 8> probe_permutation(int bits) {
  std::array<int, 8> perm{};
  for (int p = 0; p < 8; ++p) {
    std::array<std::uint32_t, 2> w{};
    if (bits == 4)
      w[0] = 1u << (4 * p);
    else
      w[static_cast<std::size_t>(p / 4)] = 1u << (8 * (p % 4));
    const auto out = i2f_extract(w, bits);
    int hit = -1;
    for (int i = 0; i < 8; ++i)
      if (out[static_cast<std::size_t>(i)] != 0) {
        check(hit < 0 && out[static_cast<std::size_t>(i)] == 1, ErrorKind::kLayout,
              "I2F probe is not one-to-one");
        hit = i;
      }
    check(hit >= 0, ErrorKind::kLayout, "I2F probe lost a position");
    perm[static_cast<std::size_t>(p)] = hit;
  }
  return perm;
}

std::uint32_t permutation_id(const std::array<int, 8>& perm) {
  std::uint32_t id = 0;
  for (int p = 0; p < 8; ++p)
    id |= static_cast<std::uint32_t>(perm[static_cast<std::size_t>(p)]) << (3 * p);
  return id;
}

std::array<int, 8> decode_permutation(std::uint32_t id) {
  check(id != 0 && id < (1u << 24), ErrorKind::kLayout,
        "malformed permutation id " + std::to_string(id));
  std::array<int, 8> perm{};
  unsigned seen = 0;
  for (int p = 0; p < 8; ++p) {
    const int s = static_cast<int>((id >> (3 * p)) & 7u);
    check(!((seen >> s) & 1u), ErrorKind::kLayout,
          "permutation id " + std::to_string(id) + " repeats a slot");
    seen |= 1u << s;
    perm[static_cast<std::size_t>(p)] = s;
  }
  return perm;
}

std::pair<int, int> tile_slot_coord(int lane, int slot) {
  const int g = lane / 4;
  const int t = lane % 4;
  return {g + 8 * (slot / 4), 2 * t + slot % 2 + 8 * ((slot % 4) / 2)};
}

std::array<std::array<int, 8>, kWarpSize> ldmatrix_slot_map() {
  SharedTile tile(16, 128, 128, true);
  for (int n = 0; n < 16; ++n)
    for (int k = 0; k < 16; ++k) tile.set(n, k, static_cast<std::uint16_t>(n * 16 + k));
  const auto r = ldmatrix_emulate(tile, x4_row_addresses(tile, 0), 4);
  std::array<std::array<int, 8>, kWarpSize> map{};
  for (int lane = 0; lane < kWarpSize; ++lane)
    for (int s = 0; s < 8; ++s)
      map[static_cast<std::size_t>(lane)][static_cast<std::size_t>(s)] = reg_half(r, lane, s);
  return map;
}

PackedWeights pack_weights(const QuantizedTensor& q, const ArchProfile& arch,
                           bool two_fragment) {
  q.validate();
  check(q.bits == 4 || q.bits == 8 || q.bits == 16, ErrorKind::kInvalidArgument,
        "unsupported bit width " + std::to_string(q.bits));
  check(arch.has_ldmatrix && arch.mma == MmaShape{}, ErrorKind::kLayout,
        "arch profile " + arch.name + " lacks the ldmatrix/16x8x16 path");
  check(q.rows > 0 && q.cols > 0, ErrorKind::kInvalidArgument, "empty weight matrix");

  PackedWeights p;
  p.rows = static_cast<int>(q.rows);
  p.cols = static_cast<int>(q.cols);
  p.bits = q.bits;
  p.group_size = q.group_size;
  p.zero_point = q.zero_point;
  p.arch_id = arch.id;

  if (q.bits == 16) {
    p.layout = LayoutId::kPassthrough;
    p.perm_id = 0;
    p.words.assign(p.expected_words(), 0);
    const auto bytes = q.codes.bytes();
    for (std::size_t i = 0; i < bytes.size(); ++i)
      p.words[i / 4] |= static_cast<std::uint32_t>(bytes[i]) << (8 * (i % 4));
    return p;
  }

  check(q.group_size % 16 == 0, ErrorKind::kInvalidArgument,
        "group_size must be a multiple of the 16-wide k-tile");
  p.layout = two_fragment ? LayoutId::kTwoFragment : LayoutId::kSingleFragment;
  const auto perm = probe_permutation(q.bits);
  p.perm_id = permutation_id(perm);

  const int np = p.padded_rows();
  const int kp = p.padded_cols();
  const int gp = p.padded_groups();
  p.scales.assign(static_cast<std::size_t>(np) * static_cast<std::size_t>(gp),
                  Half::from_bits(kHalfOne));
  if (p.zero_point)
    p.zero_points.assign(static_cast<std::size_t>(np) * static_cast<std::size_t>(gp), 0);
  for (int n = 0; n < p.rows; ++n)
    for (int g = 0; g < static_cast<int>(q.groups()); ++g) {
      const auto i = static_cast<std::size_t>(n) * static_cast<std::size_t>(gp) +
                     static_cast<std::size_t>(g);
      p.scales[i] = q.scale(n, g);
      if (p.zero_point) p.zero_points[i] = static_cast<std::uint8_t>(q.zero_point_of(n, g));
    }

  // Widen: 16-bit codes, padded with each group's zero code.
  const int bias = storage_bias(q.bits, q.zero_point);
  auto raw = [&](int n, int k) -> std::uint16_t {
    if (n < p.rows && k < p.cols) return static_cast<std::uint16_t>(q.code(n, k) + bias);
    return static_cast<std::uint16_t>(p.zero_at(n, k / p.group_size));
  };

  p.words.assign(p.expected_words(), 0);
  const int wpf = p.words_per_fragment();
  for (int nt = 0; nt < p.n_tiles(); ++nt) {
    for (int k0 = 0; k0 < kp; k0 += kSliceCols) {
      // Stage: a 16-row x 128-byte swizzled shared slice, then ldmatrix.x4
      // per k-tile.
      SharedTile tile(16, 128, 128, true);
      const int k1 = std::min(k0 + kSliceCols, kp);
      for (int n = 0; n < 16; ++n)
        for (int k = k0; k < k1; ++k) tile.set(n, k - k0, raw(nt * 16 + n, k));
      for (int kt = k0 / 16; kt < k1 / 16; ++kt) {
        const auto regs = ldmatrix_emulate(tile, x4_row_addresses(tile, kt - k0 / 16), 4);
        // Repack and store: narrow into code words in permuted position order
        // and store them lane-major inside the chunk.
        for (int lane = 0; lane < kWarpSize; ++lane) {
          std::array<std::uint32_t, 2> w{};
          for (int pos = 0; pos < 8; ++pos) {
            const std::uint32_t v = reg_half(regs, lane, perm[static_cast<std::size_t>(pos)]);
            if (q.bits == 4)
              w[0] |= (v & 0xFu) << (4 * pos);
            else
              w[static_cast<std::size_t>(pos / 4)] |= (v & 0xFFu) << (8 * (pos % 4));
          }
          for (int i = 0; i < wpf; ++i)
            p.words[word_index(p, nt, kt, lane, i)] = w[static_cast<std::size_t>(i)];
        }
      }
    }
  }
  return p;
}

QuantizedTensor unpack_weights(const PackedWeights& p) {
  QuantizedTensor q;
  q.bits = p.bits;
  q.group_size = p.group_size;
  q.zero_point = p.zero_point && p.bits != 16;
  q.rows = p.rows;
  q.cols = p.cols;
  q.logical_shape = {p.rows, p.cols};
  q.codes = Tensor({p.rows, p.cols}, code_dtype(p.bits, q.zero_point));
  check(p.words.size() == p.expected_words(), ErrorKind::kFormat,
        "packed payload has the wrong word count");

  if (p.bits == 16) {
    auto bytes = q.codes.bytes();
    for (std::size_t i = 0; i < bytes.size(); ++i)
      bytes[i] = static_cast<std::uint8_t>(p.words[i / 4] >> (8 * (i % 4)));
    return q;
  }

  check(p.scales.size() == p.expected_groups() &&
            (!p.zero_point || p.zero_points.size() == p.expected_groups()),
        ErrorKind::kFormat, "packed payload has the wrong group count");
  const auto grid = raw_code_grid(p);
  const int bias = storage_bias(p.bits, p.zero_point);
  const auto kp = static_cast<std::size_t>(p.padded_cols());
  for (int n = 0; n < p.rows; ++n)
    for (int k = 0; k < p.cols; ++k)
      q.codes.set_code(static_cast<std::size_t>(n) * static_cast<std::size_t>(p.cols) +
                           static_cast<std::size_t>(k),
                       grid[static_cast<std::size_t>(n) * kp + static_cast<std::size_t>(k)] -
                           bias);
  const auto groups = q.groups();
  q.scales = Tensor({p.rows, groups}, Dtype::kF16);
  if (q.zero_point) q.zero_points = Tensor({p.rows, groups}, Dtype::kU8);
  for (int n = 0; n < p.rows; ++n)
    for (int g = 0; g < groups; ++g) {
      const auto i = static_cast<std::size_t>(n * groups + g);
      q.scales.set_f16(i, p.scale_at(n, g));
      if (q.zero_point) q.zero_points.set_code(i, p.zero_at(n, g));
    }
  return q;
}

CodeFragment load_code_fragment(const PackedWeights& p, int n_tile, int k_tile) {
  check(p.bits == 4 || p.bits == 8, ErrorKind::kInvalidArgument,
        "code fragments exist for 4- and 8-bit layouts only");
  check(n_tile >= 0 && n_tile < p.n_tiles() && k_tile >= 0 && k_tile < p.k_tiles(),
        ErrorKind::kInvalidArgument, "tile index out of range");
  CodeFragment cf;
  cf.bits = p.bits;
  for (int lane = 0; lane < kWarpSize; ++lane)
    for (int w = 0; w < p.words_per_fragment(); ++w)
      cf.words[static_cast<std::size_t>(lane)][static_cast<std::size_t>(w)] =
          p.words.at(word_index(p, n_tile, k_tile, lane, w));
  return cf;
}

TileQuant tile_quant(const PackedWeights& p, int n_tile, int k_tile) {
  TileQuant tq;
  const int g = k_tile * 16 / p.group_size;
  for (int r = 0; r < 16; ++r) {
    tq.scale[static_cast<std::size_t>(r)] = p.scale_at(n_tile * 16 + r, g);
    tq.zero[static_cast<std::size_t>(r)] = p.zero_at(n_tile * 16 + r, g);
  }
  return tq;
}

std::array<Fragment, 2> dequant_fragment(const CodeFragment& codes, const TileQuant& q,
                                         std::uint32_t perm_id) {
  const auto perm = decode_permutation(perm_id);
  static const std::array<int, 8> hw4 = probe_permutation(4);
  static const std::array<int, 8> hw8 = probe_permutation(8);
  const auto& hw = codes.bits == 4 ? hw4 : hw8;
  const std::size_t wpf = codes.bits == 4 ? 1 : 2;
  std::array<Fragment, 2> out{Fragment(Role::kB), Fragment(Role::kB)};
  for (int lane = 0; lane < kWarpSize; ++lane) {
    const auto raw = i2f_extract(
        std::span<const std::uint32_t>(codes.words[static_cast<std::size_t>(lane)]).first(wpf),
        codes.bits);
    for (int pos = 0; pos < 8; ++pos) {
      const int slot = perm[static_cast<std::size_t>(pos)];
      const int u = raw[static_cast<std::size_t>(hw[static_cast<std::size_t>(pos)])];
      const int row = lane / 4 + 8 * (slot / 4);
      const float zero = 1024.0f + static_cast<float>(q.zero[static_cast<std::size_t>(row)]);
      const float diff = (1024.0f + static_cast<float>(u)) - zero;
      out[static_cast<std::size_t>(slot / 4)].at(lane, slot % 4) =
          round_to_half(diff * q.scale[static_cast<std::size_t>(row)].to_float());
    }
  }
  return out;
}

LayoutReport verify_layout(const PackedWeights& p) {
  LayoutReport rep;
  const std::size_t total_bytes = p.words.size() * 4;
  const std::size_t chunk_bytes =
      p.bits == 16 ? 512
                   : static_cast<std::size_t>(kWarpSize * p.fragments_per_chunk() *
                                              p.words_per_fragment() * 4);

  // Global -> shared copy: 16-byte vector lanes over each chunk.
  rep.transactions = 0;
  for (std::size_t base = 0; base < total_bytes; base += chunk_bytes) {
    for (std::size_t b0 = base; b0 < std::min(base + chunk_bytes, total_bytes); b0 += 512) {
      std::vector<std::int64_t> addrs;
      for (std::size_t a = b0; a < std::min({b0 + 512, base + chunk_bytes, total_bytes});
           a += 16)
        addrs.push_back(static_cast<std::int64_t>(a));
      const auto t = AccessTrace::from_addresses(addrs, 16);
      const int lines = static_cast<int>((addrs.size() * 16 + 127) / 128);
      const int tx = coalesce_count(t);
      rep.transactions = std::max(rep.transactions, (tx + lines - 1) / lines);
    }
  }
  if (total_bytes == 0) rep.transactions = 1;

  if (p.bits == 16) {
    rep.conflict_degree = bank_conflict_degree(AccessTrace::strided(0, 16, 16));
    rep.mma_aligned = p.layout == LayoutId::kPassthrough && p.perm_id == 0;
    return rep;
  }

  // Shared -> register: each lane reads its F fragment slices in one vector.
  const int lane_bytes = p.fragments_per_chunk() * p.words_per_fragment() * 4;
  rep.conflict_degree = bank_conflict_degree(AccessTrace::strided(0, lane_bytes, lane_bytes));

  // Online I2F output against the analytic B layout of the logical tile.
  rep.mma_aligned = true;
  const auto grid = raw_code_grid(p);
  const auto kp = static_cast<std::size_t>(p.padded_cols());
  try {
    for (int nt = 0; nt < p.n_tiles() && rep.mma_aligned; ++nt)
      for (int kt = 0; kt < p.k_tiles() && rep.mma_aligned; ++kt) {
        const auto tq = tile_quant(p, nt, kt);
        const auto frags = dequant_fragment(load_code_fragment(p, nt, kt), tq, p.perm_id);
        for (int h = 0; h < 2 && rep.mma_aligned; ++h) {
          const Fragment expect = gather_with(Role::kB, [&](int k, int n) {
            const int row = n + 8 * h;
            const std::size_t gi = static_cast<std::size_t>(nt * 16 + row) * kp +
                                   static_cast<std::size_t>(kt * 16 + k);
            return dequantize_value(grid[gi], tq.zero[static_cast<std::size_t>(row)],
                                    tq.scale[static_cast<std::size_t>(row)])
                .to_float();
          });
          rep.mma_aligned = expect == frags[static_cast<std::size_t>(h)];
        }
      }
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::kLayout) throw;
    rep.mma_aligned = false;
  }
  return rep;
}

NaiveControls naive_controls() {
  NaiveControls c;
  // A 16x16 u4 tile of a row-major 4096-column matrix: 8 bytes per row,
  // two 4-byte lanes per row.
  {
    std::vector<std::int64_t> addrs;
    for (int lane = 0; lane < kWarpSize; ++lane)
      addrs.push_back((lane / 2) * 2048 + (lane % 2) * 4);
    c.row_major_tile_transactions = coalesce_count(AccessTrace::from_addresses(addrs, 4));
  }
  c.half_offset_transactions = coalesce_count(AccessTrace::strided(64, 4, 4));
  c.lane_stride_conflict = bank_conflict_degree(AccessTrace::strided(0, 128, 4));
  c.column_load_conflict = bank_conflict_degree(AccessTrace::strided(0, 128, 16));
  c.column_load_after_ldmatrix = bank_conflict_degree(AccessTrace::strided(0, 16, 16));
  return c;
}

}  // namespace mixkern
