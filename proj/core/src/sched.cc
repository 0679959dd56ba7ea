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

#include "mixkern/sched.h"

#include <algorithm>
#include <map>
#include <set>
#include <tuple>

#include "json.hpp"
#include "mixkern/error.h"

namespace mixkern {

using nlohmann::json;

const char* unit_name(Unit u) {
  switch (u) {
    case Unit::kTC: return "TC";
    case Unit::kALU: return "ALU";
    case Unit::kLDST: return "LDST";
  }
  return "?";
}

const char* stage_name(StageKind k) {
  switch (k) {
    case StageKind::kPrefetch: return "PREFETCH";
    case StageKind::kLds: return "LDS";
    case StageKind::kI2f: return "I2F";
    case StageKind::kI2fFma: return "I2F_FMA";
    case StageKind::kMma: return "MMA";
  }
  return "?";
}

void UnitLatencies::validate() const {
  check(load >= 0 && lds >= 0 && i2f >= 0 && mma >= 0 && fma >= 0,
        ErrorKind::kInvalidArgument, "latencies must be non-negative");
  check(depth >= 1, ErrorKind::kInvalidArgument, "pipeline depth must be >= 1");
}

std::string latencies_to_json(const UnitLatencies& lat) {
  json j = {{"load", lat.load}, {"lds", lat.lds}, {"i2f", lat.i2f},
            {"mma", lat.mma},   {"fma", lat.fma}, {"depth", lat.depth}};
  return j.dump(2);
}

UnitLatencies latencies_from_json(std::string_view text) {
  UnitLatencies lat;
  try {
    const json j = json::parse(text);
    check(j.is_object(), ErrorKind::kFormat, "latency config must be a JSON object");
    auto get = [&](const char* key, int& field) {
      if (j.contains(key)) field = j.at(key).get<int>();
    };
    get("load", lat.load);
    get("lds", lat.lds);
    get("i2f", lat.i2f);
    get("mma", lat.mma);
    get("fma", lat.fma);
    get("depth", lat.depth);
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormat, std::string("bad latency config: ") + e.what());
  }
  lat.validate();
  return lat;
}

int PipelineSchedule::add(StageRecord r) {
  stages.push_back(std::move(r));
  return static_cast<int>(stages.size()) - 1;
}

std::size_t PipelineSchedule::count(StageKind k) const {
  return static_cast<std::size_t>(
      std::count_if(stages.begin(), stages.end(), [&](const StageRecord& r) { return r.kind == k; }));
}

void PipelineSchedule::validate() const {
  check(depth >= 1, ErrorKind::kSchedule, "schedule depth must be >= 1");
  using Key = std::tuple<int, int, char>;
  std::map<Key, int> i2f_of;
  std::map<Key, int> lds_of;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const auto& r = stages[i];
    for (int d : r.deps)
      check(d >= 0 && static_cast<std::size_t>(d) < stages.size() &&
                static_cast<std::size_t>(d) != i,
            ErrorKind::kSchedule, "dependency index out of range");
    const Key key{r.tile, r.sub, r.operand};
    if (r.kind == StageKind::kI2f || r.kind == StageKind::kI2fFma) i2f_of[key] = static_cast<int>(i);
    if (r.kind == StageKind::kLds) lds_of[key] = static_cast<int>(i);
  }
  auto depends_on = [&](const StageRecord& r, int j) {
    return std::find(r.deps.begin(), r.deps.end(), j) != r.deps.end();
  };
  for (const auto& r : stages) {
    const Key key{r.tile, r.sub, r.operand};
    if (r.kind == StageKind::kMma) {
      auto it = i2f_of.find(key);
      check(it == i2f_of.end() || depends_on(r, it->second), ErrorKind::kSchedule,
            "MMA does not wait for the I2F of its tile");
    }
    if (r.kind == StageKind::kI2f || r.kind == StageKind::kI2fFma) {
      auto it = lds_of.find(key);
      check(it != lds_of.end() && depends_on(r, it->second), ErrorKind::kSchedule,
            "I2F does not wait for the LDS of its tile");
    }
  }
}

int stage_cost(StageKind k, const UnitLatencies& lat) {
  switch (k) {
    case StageKind::kPrefetch: return lat.load;
    case StageKind::kLds: return lat.lds;
    case StageKind::kI2f: return lat.i2f;
    case StageKind::kI2fFma: return lat.i2f + lat.fma;
    case StageKind::kMma: return lat.mma;
  }
  return 0;
}

CycleReport simulate(const PipelineSchedule& s, const UnitLatencies& lat) {
  lat.validate();
  s.validate();
  const std::size_t n = s.stages.size();
  CycleReport rep;
  rep.stage_count = static_cast<std::int64_t>(n);
  rep.start.assign(n, -1);
  rep.finish.assign(n, -1);

  std::array<std::vector<int>, kUnitCount> queue;
  for (std::size_t i = 0; i < n; ++i)
    queue[static_cast<std::size_t>(s.stages[i].unit)].push_back(static_cast<int>(i));
  std::array<std::size_t, kUnitCount> head{};
  std::array<std::int64_t, kUnitCount> unit_free{};

  for (std::size_t done = 0; done < n; ++done) {
    // Among the head records whose dependencies have finished, commit the
    // earliest start; ties by tile, then unit order TC < ALU < LDST.
    int best = -1;
    std::int64_t best_start = 0;
    for (int u = 0; u < kUnitCount; ++u) {
      const auto uu = static_cast<std::size_t>(u);
      if (head[uu] >= queue[uu].size()) continue;
      const int i = queue[uu][head[uu]];
      std::int64_t t = unit_free[uu];
      bool ready = true;
      for (int d : s.stages[static_cast<std::size_t>(i)].deps) {
        if (rep.finish[static_cast<std::size_t>(d)] < 0) {
          ready = false;
          break;
        }
        t = std::max(t, rep.finish[static_cast<std::size_t>(d)]);
      }
      if (!ready) continue;
      const auto& r = s.stages[static_cast<std::size_t>(i)];
      if (best < 0 || t < best_start ||
          (t == best_start && r.tile < s.stages[static_cast<std::size_t>(best)].tile)) {
        best = i;
        best_start = t;
      }
    }
    check(best >= 0, ErrorKind::kSchedule, "cyclic dependencies in schedule");
    const auto& r = s.stages[static_cast<std::size_t>(best)];
    const auto uu = static_cast<std::size_t>(r.unit);
    const int cost = stage_cost(r.kind, lat);
    rep.start[static_cast<std::size_t>(best)] = best_start;
    rep.finish[static_cast<std::size_t>(best)] = best_start + cost;
    unit_free[uu] = best_start + cost;
    rep.busy[uu] += cost;
    rep.serial_cycles += cost;
    rep.total = std::max(rep.total, best_start + cost);
    ++head[uu];
  }
  for (int u = 0; u < kUnitCount; ++u)
    rep.bubbles[static_cast<std::size_t>(u)] = rep.total - rep.busy[static_cast<std::size_t>(u)];

  // A tile occupies a prefetch buffer from its first prefetch start until its
  // last MMA finishes.
  std::map<int, std::pair<std::int64_t, std::int64_t>> span;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = s.stages[i];
    if (r.kind == StageKind::kPrefetch) {
      auto [it, fresh] = span.try_emplace(r.tile, rep.start[i], rep.start[i]);
      if (!fresh) it->second.first = std::min(it->second.first, rep.start[i]);
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = s.stages[i];
    auto it = span.find(r.tile);
    if (r.kind == StageKind::kMma && it != span.end())
      it->second.second = std::max(it->second.second, rep.finish[i]);
  }
  rep.prefetch_tiles = static_cast<int>(span.size());
  // Sweep over buffer acquire (+1) and release (-1) events; releases at a
  // cycle happen before acquires at the same cycle.
  std::vector<std::pair<std::int64_t, int>> events;
  events.reserve(2 * span.size());
  for (const auto& [tile, a] : span) {
    events.emplace_back(a.first, 1);
    events.emplace_back(std::max(a.second, a.first + 1), -1);
  }
  std::sort(events.begin(), events.end());
  int live = 0;
  for (const auto& [cycle, delta] : events) {
    live += delta;
    rep.max_inflight_prefetch = std::max(rep.max_inflight_prefetch, live);
  }
  return rep;
}

PipelineSchedule serialize(const PipelineSchedule& s) {
  PipelineSchedule out = s;
  out.workload = s.workload + "-serial";
  out.depth = 1;
  for (std::size_t i = 1; i < out.stages.size(); ++i) {
    auto& deps = out.stages[i].deps;
    if (std::find(deps.begin(), deps.end(), static_cast<int>(i - 1)) == deps.end())
      deps.push_back(static_cast<int>(i - 1));
  }
  return out;
}

OverlapReport compare_overlap(const PipelineSchedule& mixed, const PipelineSchedule& baseline,
                              const UnitLatencies& lat) {
  OverlapReport r;
  r.pipelined = simulate(mixed, lat);
  r.serial = simulate(serialize(mixed), lat);
  r.baseline = simulate(baseline, lat);
  r.instr_ratio = static_cast<double>(r.pipelined.stage_count) /
                  static_cast<double>(std::max<std::int64_t>(1, r.baseline.stage_count));
  r.cycle_ratio = r.baseline.total == 0
                      ? 1.0
                      : static_cast<double>(r.pipelined.total) / static_cast<double>(r.baseline.total);
  return r;
}

BubbleReport attention_bubbles(const PipelineSchedule& s, const UnitLatencies& lat) {
  const CycleReport rep = simulate(s, lat);
  BubbleReport b;
  const auto tc = static_cast<std::size_t>(Unit::kTC);
  if (rep.total > 0)
    b.overall = static_cast<double>(rep.bubbles[tc]) / static_cast<double>(rep.total);
  std::int64_t lo = -1;
  std::int64_t hi = -1;
  for (std::size_t i = 0; i < s.stages.size(); ++i) {
    if (s.stages[i].kind != StageKind::kMma) continue;
    lo = lo < 0 ? rep.start[i] : std::min(lo, rep.start[i]);
    hi = std::max(hi, rep.start[i]);
  }
  if (hi > lo) {
    std::int64_t busy = 0;
    for (std::size_t i = 0; i < s.stages.size(); ++i) {
      if (s.stages[i].unit != Unit::kTC) continue;
      const std::int64_t a = std::max(lo, rep.start[i]);
      const std::int64_t z = std::min(hi, rep.finish[i]);
      if (z > a) busy += z - a;
    }
    b.steady = static_cast<double>(hi - lo - busy) / static_cast<double>(hi - lo);
  }
  return b;
}

PipelineSchedule gemm_schedule(int k_tiles, int depth, bool mixed) {
  check(k_tiles >= 1, ErrorKind::kInvalidArgument, "need at least one k-tile");
  check(depth >= 1, ErrorKind::kInvalidArgument, "pipeline depth must be >= 1");
  PipelineSchedule s;
  s.workload = mixed ? "gemm" : "gemm-f16";
  s.depth = depth;
  std::vector<int> mma_of;
  for (int t = 0; t < k_tiles; ++t) {
    StageRecord pre{Unit::kLDST, StageKind::kPrefetch, t, -1, 'W', {}};
    if (t >= depth) pre.deps.push_back(mma_of[static_cast<std::size_t>(t - depth)]);
    const int p = s.add(pre);
    const int l = s.add({Unit::kALU, StageKind::kLds, t, -1, 'W', {p}});
    int feed = l;
    if (mixed) feed = s.add({Unit::kALU, StageKind::kI2fFma, t, -1, 'W', {l}});
    StageRecord mma{Unit::kTC, StageKind::kMma, t, -1, 'W', {feed}};
    if (t > 0) mma.deps.push_back(mma_of.back());
    mma_of.push_back(s.add(mma));
  }
  return s;
}

PipelineSchedule attention_schedule(std::int64_t tokens, int kv_bits, int depth) {
  check(tokens >= 1, ErrorKind::kInvalidArgument, "attention needs at least one token");
  check(depth >= 1, ErrorKind::kInvalidArgument, "pipeline depth must be >= 1");
  check(kv_bits == 4 || kv_bits == 8 || kv_bits == 16, ErrorKind::kInvalidArgument,
        "kv_bits must be 4, 8 or 16");
  constexpr std::int64_t kMacro = 64;
  constexpr std::int64_t kMicro = 16;
  PipelineSchedule s;
  s.workload = "attn";
  s.depth = depth;
  const int macros = static_cast<int>((tokens + kMacro - 1) / kMacro);
  std::vector<int> release;  // last value MMA of each macro-tile
  int last_mma = -1;
  for (int j = 0; j < macros; ++j) {
    const std::int64_t count = std::min(kMacro, tokens - j * kMacro);
    const int micros = static_cast<int>((count + kMicro - 1) / kMicro);
    std::vector<int> pre_deps;
    if (j >= depth) pre_deps.push_back(release[static_cast<std::size_t>(j - depth)]);
    const int pk = s.add({Unit::kLDST, StageKind::kPrefetch, j, -1, 'K', pre_deps});
    const int pv = s.add({Unit::kLDST, StageKind::kPrefetch, j, -1, 'V', pre_deps});
    int last_k = -1;
    for (char op : {'K', 'V'}) {
      for (int m = 0; m < micros; ++m) {
        const int l = s.add({Unit::kALU, StageKind::kLds, j, m, op, {op == 'K' ? pk : pv}});
        int feed = l;
        if (kv_bits < 16) feed = s.add({Unit::kALU, StageKind::kI2f, j, m, op, {l}});
        StageRecord mma{Unit::kTC, StageKind::kMma, j, m, op, {feed}};
        if (last_mma >= 0) mma.deps.push_back(last_mma);
        if (op == 'V' && m == 0) mma.deps.push_back(last_k);
        last_mma = s.add(mma);
        if (op == 'K') last_k = last_mma;
      }
    }
    release.push_back(last_mma);
  }
  return s;
}

std::string schedule_to_json(const PipelineSchedule& s) {
  json stages = json::array();
  for (const auto& r : s.stages)
    stages.push_back({{"unit", unit_name(r.unit)},
                      {"kind", stage_name(r.kind)},
                      {"tile", r.tile},
                      {"sub", r.sub},
                      {"operand", std::string(1, r.operand)},
                      {"deps", r.deps}});
  json j = {{"workload", s.workload}, {"depth", s.depth}, {"stages", stages}};
  return j.dump(2);
}

std::string report_to_json(const CycleReport& r, bool with_timeline) {
  json busy = json::object();
  json bubbles = json::object();
  for (int u = 0; u < kUnitCount; ++u) {
    busy[unit_name(static_cast<Unit>(u))] = r.busy[static_cast<std::size_t>(u)];
    bubbles[unit_name(static_cast<Unit>(u))] = r.bubbles[static_cast<std::size_t>(u)];
  }
  json j = {{"total_cycles", r.total},
            {"busy", busy},
            {"bubbles", bubbles},
            {"stage_count", r.stage_count},
            {"serial_cycles", r.serial_cycles},
            {"max_inflight_prefetch", r.max_inflight_prefetch},
            {"prefetch_tiles", r.prefetch_tiles}};
  if (with_timeline) {
    j["start"] = r.start;
    j["finish"] = r.finish;
  }
  return j.dump(2);
}

}  // namespace mixkern
