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
#include <string>
#include <string_view>
#include <vector>

namespace mixkern {

enum class Unit : std::uint8_t { kTC = 0, kALU = 1, kLDST = 2 };
inline constexpr int kUnitCount = 3;

enum class StageKind : std::uint8_t { kPrefetch, kLds, kI2f, kI2fFma, kMma };

const char* unit_name(Unit u);
const char* stage_name(StageKind k);

struct UnitLatencies {
  int load = 10;  // global -> shared, per tile
  int lds = 2;    // shared -> register, per (micro-)tile
  int i2f = 4;    // dequantization, per fragment set
  int mma = 8;    // per tile
  int fma = 1;    // scale application
  int depth = 3;  // prefetch buffers

  // Costs may be zero (a stage that vanishes); depth must be >= 1.
  void validate() const;
  friend bool operator==(const UnitLatencies&, const UnitLatencies&) = default;
};

std::string latencies_to_json(const UnitLatencies& lat);
// Missing keys keep their defaults; throws kFormat on malformed input.
UnitLatencies latencies_from_json(std::string_view text);

struct StageRecord {
  Unit unit = Unit::kTC;
  StageKind kind = StageKind::kMma;
  int tile = 0;         // k-tile (GEMM) or macro-tile (attention)
  int sub = -1;         // micro-tile inside the macro-tile, -1 if none
  char operand = 'W';   // 'W' weights, 'K' keys, 'V' values
  std::vector<int> deps;
};

// Stage records in program order. Each unit issues its own records in this
// order; a record starts once its unit is free and its dependencies finished.
struct PipelineSchedule {
  std::string workload;  // "gemm", "gemm-f16", "attn", ...
  int depth = 3;
  std::vector<StageRecord> stages;

  int add(StageRecord r);
  // Structural rules: dependency indices in range, every MMA waits for the
  // I2F of its tile when one exists and every I2F waits for its LDS.
  void validate() const;
  std::size_t count(StageKind k) const;
};

int stage_cost(StageKind k, const UnitLatencies& lat);

struct CycleReport {
  std::int64_t total = 0;
  std::array<std::int64_t, kUnitCount> busy{};
  std::array<std::int64_t, kUnitCount> bubbles{};
  std::int64_t stage_count = 0;
  std::int64_t serial_cycles = 0;  // sum of every stage cost
  int max_inflight_prefetch = 0;   // tiles between first prefetch and last MMA
  int prefetch_tiles = 0;          // distinct tiles with a prefetch
  std::vector<std::int64_t> start;
  std::vector<std::int64_t> finish;
};

// Throws kSchedule on a dependency cycle (including one induced by the
// per-unit issue order).
CycleReport simulate(const PipelineSchedule& s, const UnitLatencies& lat);

// The same records with every stage also waiting for its predecessor.
PipelineSchedule serialize(const PipelineSchedule& s);

struct OverlapReport {
  CycleReport pipelined;
  CycleReport serial;
  CycleReport baseline;
  double instr_ratio = 0.0;  // mixed stages / baseline stages
  double cycle_ratio = 0.0;  // mixed cycles / baseline cycles
};
OverlapReport compare_overlap(const PipelineSchedule& mixed,
                              const PipelineSchedule& baseline,
                              const UnitLatencies& lat);

struct BubbleReport {
  double steady = 0.0;   // TC idle share between the first and last MMA start
  double overall = 0.0;  // TC idle share of the whole run
};
BubbleReport attention_bubbles(const PipelineSchedule& s, const UnitLatencies& lat);

// Mainloop of one GEMM output tile over k_tiles k-tiles. Mixed precision
// emits PREFETCH, LDS, I2F+FMA, MMA per tile; the f16 baseline omits I2F.
// PREFETCH of tile t waits for the MMA of tile t - depth.
PipelineSchedule gemm_schedule(int k_tiles, int depth, bool mixed);

// KV loading pipeline of one head: per 64-token macro-tile a K and a V
// prefetch, then per 16-token micro-tile LDS, I2F (when kv_bits < 16) and
// MMA, keys before values. The first value MMA of a macro-tile waits for
// its last key MMA.
PipelineSchedule attention_schedule(std::int64_t tokens, int kv_bits, int depth);

std::string schedule_to_json(const PipelineSchedule& s);
std::string report_to_json(const CycleReport& r, bool with_timeline = false);

}  // namespace mixkern
