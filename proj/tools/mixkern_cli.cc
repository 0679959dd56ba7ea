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

// mixkern: pack, verify, run, simulate and report from the command line.
//
// Exit codes: 0 success, 2 usage or input error, 3 layout verification
// failure, 4 oracle mismatch.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <string>

#include "mixkern/attention.h"
#include "mixkern/error.h"
#include "mixkern/gemm.h"
#include "mixkern/kv_cache.h"
#include "mixkern/memmodel.h"
#include "mixkern/packer.h"
#include "mixkern/quant.h"
#include "mixkern/sched.h"
#include "mixkern/tensor_io.h"

namespace {

using json = nlohmann::ordered_json;
using namespace mixkern;

constexpr int kSchemaVersion = 1;
constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitLayout = 3;
constexpr int kExitMismatch = 4;

// Thrown to leave a command with a specific exit code.
struct ExitCode {
  int code;
};

json envelope(const std::string& command) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["command"] = command;
  return j;
}

void emit(const json& j, const std::string& path) {
  const std::string text = j.dump(2) + "\n";
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  check(static_cast<bool>(out), ErrorKind::kFormat, "cannot write " + path);
  out << text;
}

json layout_json(const LayoutReport& r) {
  return {{"transactions", r.transactions},
          {"conflict_degree", r.conflict_degree},
          {"mma_aligned", r.mma_aligned},
          {"ok", r.ok()}};
}

const ArchProfile& resolve_arch(const std::string& name) {
  return name.empty() ? default_arch() : find_arch(name);
}

Tensor random_f16(std::vector<std::int64_t> shape, std::mt19937_64& rng) {
  std::size_t n = 1;
  for (auto d : shape) n *= static_cast<std::size_t>(d);
  std::normal_distribution<float> dist(0.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = dist(rng);
  return Tensor::from_float_rounded(std::move(shape), v);
}

Tensor as_2d(const Tensor& t) {
  if (t.rank() == 2) return t;
  check(t.rank() == 1, ErrorKind::kInvalidArgument, "expected a 1-D or 2-D tensor");
  std::vector<Half> h(t.numel());
  for (std::size_t i = 0; i < h.size(); ++i) h[i] = t.f16(i);
  return Tensor::from_f16({1, t.dim(0)}, h);
}

// Reports the first differing element and throws ExitCode{4}, or returns.
void compare_or_fail(const Tensor& got, const Tensor& want, std::int64_t cols) {
  for (std::size_t i = 0; i < got.numel(); ++i) {
    const Half a = got.f16(i);
    const Half b = want.f16(i);
    if (a.bits == b.bits) continue;
    std::fprintf(stderr,
                 "check failed: first mismatch at index %zu (row %lld, col %lld): "
                 "online 0x%04x, oracle 0x%04x\n",
                 i, static_cast<long long>(static_cast<std::int64_t>(i) / cols),
                 static_cast<long long>(static_cast<std::int64_t>(i) % cols), a.bits, b.bits);
    throw ExitCode{kExitMismatch};
  }
}

// ---- pack / unpack / verify ------------------------------------------------

struct PackArgs {
  std::string in, meta, out, arch;
  int bits = 4;
  int group = 128;
  bool symmetric = false;
  bool single_fragment = false;
};

void add_pack(CLI::App& app) {
  auto args = std::make_shared<PackArgs>();
  auto* cmd = app.add_subcommand("pack", "Quantize and pack a 2-D f16 weight matrix [N][K]");
  cmd->add_option("--in", args->in, "weight data file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--meta", args->meta, "JSON sidecar (default <in>.json)");
  cmd->add_option("--bits", args->bits, "4, 8 or 16")->check(CLI::IsMember({4, 8, 16}));
  cmd->add_option("--group", args->group, "group size along K")->check(CLI::PositiveNumber);
  cmd->add_flag("--symmetric", args->symmetric, "symmetric codes (default asymmetric)");
  cmd->add_flag("--zero-point", [args](std::int64_t) { args->symmetric = false; },
                "asymmetric codes with zero points");
  cmd->add_option("--arch", args->arch, "architecture profile (default $MIXKERN_ARCH or sm80)");
  cmd->add_flag("--single-fragment", args->single_fragment, "one fragment per lane store");
  cmd->add_option("--out", args->out, "packed output file")->required();
  cmd->callback([args] {
    const ArchProfile& arch = resolve_arch(args->arch);
    const Tensor w = read_tensor(args->in, args->meta);
    check(w.rank() == 2 && w.dtype() == Dtype::kF16, ErrorKind::kInvalidArgument,
          "pack expects a 2-D f16 weight matrix");
    const auto q = quantize_rows(w, args->bits, args->group, !args->symmetric);
    const PackedWeights p = pack_weights(q, arch, !args->single_fragment);
    write_packed(p, args->out);
    const LayoutReport rep = verify_layout(p);
    json j = envelope("pack");
    j["out"] = args->out;
    j["rows"] = p.rows;
    j["cols"] = p.cols;
    j["bits"] = p.bits;
    j["arch"] = arch.name;
    j["layout"] = layout_json(rep);
    emit(j, "");
    if (!rep.ok()) throw ExitCode{kExitLayout};
  });
}

void add_unpack(CLI::App& app) {
  auto in = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>();
  auto codes = std::make_shared<std::string>();
  auto* cmd = app.add_subcommand("unpack", "Recover codes and dequantized weights from a packed file");
  cmd->add_option("--in", *in, "packed file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", *out, "dequantized f16 weights")->required();
  cmd->add_option("--codes", *codes, "optional raw code tensor");
  cmd->callback([in, out, codes] {
    const QuantizedTensor q = unpack_weights(read_packed(*in));
    write_tensor(dequantize(q), *out);
    if (!codes->empty()) write_tensor(q.codes, *codes);
    json j = envelope("unpack");
    j["rows"] = q.rows;
    j["cols"] = q.cols;
    j["bits"] = q.bits;
    emit(j, "");
  });
}

void add_verify(CLI::App& app) {
  auto in = std::make_shared<std::string>();
  auto* cmd = app.add_subcommand("verify", "Check the packed layout against the memory model");
  cmd->add_option("--in", *in, "packed file")->required()->check(CLI::ExistingFile);
  cmd->callback([in] {
    const LayoutReport rep = verify_layout(read_packed(*in));
    json j = envelope("verify");
    j["layout"] = layout_json(rep);
    emit(j, "");
    if (!rep.ok()) throw ExitCode{kExitLayout};
  });
}

// ---- gemm / attn ------------------------------------------------------------

struct GemmArgs {
  std::string weights, act, out, arch;
  std::optional<std::uint64_t> seed;
  int m = 16, n = 256, k = 512, bits = 4, group = 128, depth = 3;
  bool symmetric = false;
  bool check_oracle = false;
};

void add_gemm(CLI::App& app) {
  auto a = std::make_shared<GemmArgs>();
  auto* cmd = app.add_subcommand("gemm", "Run the online mixed-precision GEMM y = a * w^T");
  cmd->add_option("--weights", a->weights, "packed weights")->check(CLI::ExistingFile);
  cmd->add_option("--act", a->act, "f16 activations [M][K]")->check(CLI::ExistingFile);
  cmd->add_option("--seed", a->seed, "generate a random problem instead of reading files");
  cmd->add_option("--m", a->m)->check(CLI::PositiveNumber);
  cmd->add_option("--n", a->n)->check(CLI::PositiveNumber);
  cmd->add_option("--k", a->k)->check(CLI::PositiveNumber);
  cmd->add_option("--bits", a->bits)->check(CLI::IsMember({4, 8, 16}));
  cmd->add_option("--group", a->group)->check(CLI::PositiveNumber);
  cmd->add_flag("--symmetric", a->symmetric);
  cmd->add_option("--arch", a->arch);
  cmd->add_option("--depth", a->depth)->check(CLI::PositiveNumber);
  cmd->add_option("--out", a->out, "output tensor file");
  cmd->add_flag("--check", a->check_oracle, "compare against the dequantize-then-GEMM oracle");
  cmd->callback([a] {
    const ArchProfile& arch = resolve_arch(a->arch);
    PackedWeights p;
    Tensor act;
    if (a->seed) {
      std::mt19937_64 rng(*a->seed);
      const Tensor w = random_f16({a->n, a->k}, rng);
      p = pack_weights(quantize_rows(w, a->bits, a->group, !a->symmetric), arch);
      act = random_f16({a->m, a->k}, rng);
    } else {
      check(!a->weights.empty() && !a->act.empty(), ErrorKind::kInvalidArgument,
            "gemm needs --weights and --act, or --seed");
      p = read_packed(a->weights);
      act = as_2d(read_tensor(a->act));
    }
    const GemmResult res = mixed_gemm(act, p, arch, a->depth);
    if (!a->out.empty()) write_tensor(res.out, a->out);
    json j = envelope("gemm");
    j["m"] = res.out.dim(0);
    j["n"] = res.out.dim(1);
    j["k"] = p.cols;
    j["bits"] = p.bits;
    j["mma_stages"] = res.schedule.count(StageKind::kMma);
    if (a->check_oracle) {
      compare_or_fail(res.out, reference_gemm(act, dequantize(unpack_weights(p))), res.out.dim(1));
      j["check"] = "pass";
    }
    emit(j, "");
  });
}

struct AttnArgs {
  std::string kv, q, out;
  std::optional<std::uint64_t> seed;
  int heads = 2, head_dim = 128, tokens = 130, kv_bits = 8, group = 128, layer = 0, depth = 3;
  bool check_oracle = false;
};

void add_attn(CLI::App& app) {
  auto a = std::make_shared<AttnArgs>();
  auto* cmd = app.add_subcommand("attn", "Run one decode step of mixed-precision attention");
  cmd->add_option("--kv", a->kv, "KV cache file")->check(CLI::ExistingFile);
  cmd->add_option("--q", a->q, "f16 queries [heads][head_dim]")->check(CLI::ExistingFile);
  cmd->add_option("--seed", a->seed, "generate a random problem instead of reading files");
  cmd->add_option("--heads", a->heads)->check(CLI::PositiveNumber);
  cmd->add_option("--head-dim", a->head_dim)->check(CLI::PositiveNumber);
  cmd->add_option("--tokens", a->tokens)->check(CLI::PositiveNumber);
  cmd->add_option("--kv-bits", a->kv_bits)->check(CLI::IsMember({4, 8, 16}));
  cmd->add_option("--group", a->group)->check(CLI::PositiveNumber);
  cmd->add_option("--layer", a->layer)->check(CLI::NonNegativeNumber);
  cmd->add_option("--depth", a->depth)->check(CLI::PositiveNumber);
  cmd->add_option("--out", a->out, "output tensor file");
  cmd->add_flag("--check", a->check_oracle, "compare against the reference attention");
  cmd->callback([a] {
    KvCache cache;
    Tensor q;
    int layer = a->layer;
    if (a->seed) {
      std::mt19937_64 rng(*a->seed);
      cache = KvCache(1, a->heads, a->head_dim, a->tokens, a->kv_bits, a->group, true);
      cache.append(0, random_f16({a->tokens, a->heads, a->head_dim}, rng),
                   random_f16({a->tokens, a->heads, a->head_dim}, rng));
      q = random_f16({a->heads, a->head_dim}, rng);
      layer = 0;
    } else {
      check(!a->kv.empty() && !a->q.empty(), ErrorKind::kInvalidArgument,
            "attn needs --kv and --q, or --seed");
      cache = read_kv_cache(a->kv);
      q = as_2d(read_tensor(a->q));
    }
    const AttnResult res = attention_mixed(q, cache, layer, a->depth);
    if (!a->out.empty()) write_tensor(res.out, a->out);
    json j = envelope("attn");
    j["heads"] = cache.heads();
    j["head_dim"] = cache.head_dim();
    j["tokens"] = cache.tokens(layer);
    j["kv_bits"] = cache.kv_bits();
    j["macro_tiles"] = cache.macro_tile_count(layer);
    if (a->check_oracle) {
      compare_or_fail(res.out, reference_attention_cache(q, cache, layer), cache.head_dim());
      j["check"] = "pass";
    }
    emit(j, "");
  });
}

// ---- kv ---------------------------------------------------------------------

void add_kv(CLI::App& app) {
  auto* kv = app.add_subcommand("kv", "Create, extend and inspect KV cache files");
  kv->require_subcommand(1);

  struct CreateArgs {
    std::string out;
    int layers = 1, heads = 1, head_dim = 128, capacity = 1024, kv_bits = 8, group = 128;
    bool symmetric = false;
  };
  auto c = std::make_shared<CreateArgs>();
  auto* create = kv->add_subcommand("create", "Write an empty cache");
  create->add_option("--out", c->out)->required();
  create->add_option("--layers", c->layers)->check(CLI::PositiveNumber);
  create->add_option("--heads", c->heads)->check(CLI::PositiveNumber);
  create->add_option("--head-dim", c->head_dim)->check(CLI::PositiveNumber);
  create->add_option("--capacity", c->capacity)->check(CLI::PositiveNumber);
  create->add_option("--kv-bits", c->kv_bits)->check(CLI::IsMember({4, 8, 16}));
  create->add_option("--group", c->group)->check(CLI::PositiveNumber);
  create->add_flag("--symmetric", c->symmetric);
  create->callback([c] {
    write_kv_cache(KvCache(c->layers, c->heads, c->head_dim, c->capacity, c->kv_bits, c->group,
                           !c->symmetric),
                   c->out);
  });

  struct AppendArgs {
    std::string cache, k, v;
    int layer = 0;
  };
  auto ap = std::make_shared<AppendArgs>();
  auto* append = kv->add_subcommand("append", "Quantize and append K/V rows");
  append->add_option("--cache", ap->cache)->required()->check(CLI::ExistingFile);
  append->add_option("--k", ap->k, "f16 [heads][hd] or [n][heads][hd]")->required()->check(CLI::ExistingFile);
  append->add_option("--v", ap->v)->required()->check(CLI::ExistingFile);
  append->add_option("--layer", ap->layer)->check(CLI::NonNegativeNumber);
  append->callback([ap] {
    KvCache cache = read_kv_cache(ap->cache);
    check(ap->layer < cache.layers(), ErrorKind::kInvalidArgument, "layer out of range");
    cache.append(ap->layer, read_tensor(ap->k), read_tensor(ap->v));
    write_kv_cache(cache, ap->cache);
  });

  auto path = std::make_shared<std::string>();
  auto* info = kv->add_subcommand("info", "Print cache geometry");
  info->add_option("--cache", *path)->required()->check(CLI::ExistingFile);
  info->callback([path] {
    const KvCache cache = read_kv_cache(*path);
    json j = envelope("kv-info");
    j["layers"] = cache.layers();
    j["heads"] = cache.heads();
    j["head_dim"] = cache.head_dim();
    j["capacity"] = cache.capacity();
    j["kv_bits"] = cache.kv_bits();
    j["group_size"] = cache.group_size();
    json tokens = json::array();
    for (int l = 0; l < cache.layers(); ++l) tokens.push_back(cache.tokens(l));
    j["tokens"] = tokens;
    emit(j, "");
  });
}

// ---- sim / analyze ----------------------------------------------------------

struct SimArgs {
  std::string workload = "gemm", latencies, report;
  int m = 16, n = 4096, k = 4096, tokens = 130, head_dim = 128, kv_bits = 8;
  int depth = 0;  // 0: take it from the latency config
  bool timeline = false;
};

json cycle_json(const CycleReport& r, bool timeline) {
  return json::parse(report_to_json(r, timeline));
}

void add_sim(CLI::App& app) {
  auto a = std::make_shared<SimArgs>();
  auto* cmd = app.add_subcommand("sim", "Simulate the loading pipeline and report cycle ratios");
  cmd->add_option("--workload", a->workload)->check(CLI::IsMember({"gemm", "attn"}));
  cmd->add_option("--m", a->m);
  cmd->add_option("--n", a->n);
  cmd->add_option("--k", a->k);
  cmd->add_option("--tokens", a->tokens);
  cmd->add_option("--head-dim", a->head_dim);
  cmd->add_option("--kv-bits", a->kv_bits)->check(CLI::IsMember({4, 8, 16}));
  cmd->add_option("--depth", a->depth, "prefetch depth (overrides the latency file)");
  cmd->add_option("--latencies", a->latencies, "latency JSON")->check(CLI::ExistingFile);
  cmd->add_option("--report", a->report, "write the report here instead of stdout");
  cmd->add_flag("--timeline", a->timeline, "include per-stage start/finish cycles");
  cmd->callback([a, cmd] {
    UnitLatencies lat;
    if (!a->latencies.empty()) {
      std::ifstream in(a->latencies);
      lat = latencies_from_json(std::string(std::istreambuf_iterator<char>(in), {}));
    }
    if (cmd->count("--depth") > 0) {
      check(a->depth >= 1, ErrorKind::kInvalidArgument, "--depth must be at least 1");
      lat.depth = a->depth;
    }
    json j = envelope("sim");
    j["workload"] = a->workload;
    j["latencies"] = json::parse(latencies_to_json(lat));
    if (a->workload == "gemm") {
      check(a->m > 0 && a->n > 0 && a->k > 0, ErrorKind::kInvalidArgument,
            "--m, --n and --k must be positive");
      const int k_tiles = (a->k + 15) / 16;
      const auto mixed = gemm_schedule(k_tiles, lat.depth, true);
      const auto base = gemm_schedule(k_tiles, lat.depth, false);
      const OverlapReport r = compare_overlap(mixed, base, lat);
      j["m"] = a->m;
      j["n"] = a->n;
      j["k"] = a->k;
      j["k_tiles"] = k_tiles;
      j["instr_ratio"] = r.instr_ratio;
      j["cycle_ratio"] = r.cycle_ratio;
      j["pipelined"] = cycle_json(r.pipelined, a->timeline);
      j["serial"] = cycle_json(r.serial, false);
      j["baseline"] = cycle_json(r.baseline, false);
    } else {
      check(a->tokens > 0 && a->head_dim > 0, ErrorKind::kInvalidArgument,
            "--tokens and --head-dim must be positive");
      make_rearrange_params(a->head_dim, a->kv_bits);
      const auto mixed = attention_schedule(a->tokens, a->kv_bits, lat.depth);
      const auto base = attention_schedule(a->tokens, 16, lat.depth);
      const OverlapReport r = compare_overlap(mixed, base, lat);
      const BubbleReport b = attention_bubbles(mixed, lat);
      j["tokens"] = a->tokens;
      j["head_dim"] = a->head_dim;
      j["kv_bits"] = a->kv_bits;
      j["macro_tiles"] = (a->tokens + kMacroTileTokens - 1) / kMacroTileTokens;
      j["instr_ratio"] = r.instr_ratio;
      j["cycle_ratio"] = r.cycle_ratio;
      j["bubbles"] = {{"steady", b.steady}, {"overall", b.overall}};
      j["pipelined"] = cycle_json(r.pipelined, a->timeline);
      j["serial"] = cycle_json(r.serial, false);
      j["baseline"] = cycle_json(r.baseline, false);
    }
    emit(j, a->report);
  });
}

struct AnalyzeArgs {
  std::int64_t base = 0, stride = 4;
  int width = 4;
  bool controls = false;
};

void add_analyze(CLI::App& app) {
  auto a = std::make_shared<AnalyzeArgs>();
  auto* cmd = app.add_subcommand("analyze", "Coalescing and bank-conflict analysis of a strided warp access");
  cmd->add_option("--base", a->base)->check(CLI::NonNegativeNumber);
  cmd->add_option("--stride", a->stride)->check(CLI::NonNegativeNumber);
  cmd->add_option("--width", a->width)->check(CLI::IsMember({1, 2, 4, 8, 16}));
  cmd->add_flag("--controls", a->controls, "also report the naive control layouts");
  cmd->callback([a] {
    const AccessTrace t = AccessTrace::strided(a->base, a->stride, a->width);
    json j = envelope("analyze");
    j["base"] = a->base;
    j["stride"] = a->stride;
    j["width"] = a->width;
    j["transactions"] = coalesce_count(t);
    j["conflict_degree"] = bank_conflict_degree(t);
    if (a->controls) {
      const NaiveControls c = naive_controls();
      j["controls"] = {{"row_major_tile_transactions", c.row_major_tile_transactions},
                       {"half_offset_transactions", c.half_offset_transactions},
                       {"lane_stride_conflict", c.lane_stride_conflict},
                       {"column_load_conflict", c.column_load_conflict},
                       {"column_load_after_ldmatrix", c.column_load_after_ldmatrix}};
    }
    emit(j, "");
  });
}

int exit_code_for(ErrorKind kind) {
  return kind == ErrorKind::kLayout ? kExitLayout : kExitUsage;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mixkern: mixed-precision kernel layouts, emulation and pipeline model"};
  app.require_subcommand(1);
  add_pack(app);
  add_unpack(app);
  add_verify(app);
  add_gemm(app);
  add_attn(app);
  add_kv(app);
  add_sim(app);
  add_analyze(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  } catch (const ExitCode& e) {
    return e.code;
  } catch (const mixkern::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  }
  return kExitOk;
}
