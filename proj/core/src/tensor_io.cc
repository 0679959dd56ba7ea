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

#include "mixkern/tensor_io.h"

#include <fstream>
#include <iterator>

#include "json.hpp"
#include "mixkern/error.h"

namespace mixkern {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path default_sidecar(const fs::path& data) {
  fs::path p = data;
  p += ".json";
  return p;
}

std::string sidecar_json(const Tensor& t) {
  json j;
  j["shape"] = t.shape();
  j["dtype"] = std::string(dtype_name(t.dtype()));
  return j.dump();
}

fs::path write_tensor(const Tensor& t, const fs::path& data,
                      fs::path sidecar) {
  if (sidecar.empty()) sidecar = default_sidecar(data);
  {
    std::ofstream out(data, std::ios::binary | std::ios::trunc);
    check(out.good(), ErrorKind::kFormat, "cannot open " + data.string());
    const auto bytes = t.bytes();
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    check(out.good(), ErrorKind::kFormat, "write failed: " + data.string());
  }
  std::ofstream meta(sidecar, std::ios::trunc);
  check(meta.good(), ErrorKind::kFormat, "cannot open " + sidecar.string());
  meta << sidecar_json(t) << "\n";
  return sidecar;
}

Tensor read_tensor(const fs::path& data, fs::path sidecar) {
  if (sidecar.empty()) sidecar = default_sidecar(data);

  std::ifstream meta(sidecar);
  check(meta.good(), ErrorKind::kFormat, "cannot open " + sidecar.string());
  json j;
  try {
    meta >> j;
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormat, "bad sidecar " + sidecar.string() + ": " + e.what());
  }
  check(j.is_object() && j.contains("shape") && j.contains("dtype") &&
            j["shape"].is_array() && j["dtype"].is_string(),
        ErrorKind::kFormat, "sidecar needs \"shape\" array and \"dtype\" string");

  std::vector<std::int64_t> shape;
  for (const auto& e : j["shape"]) {
    check(e.is_number_integer() && e.get<std::int64_t>() >= 0,
          ErrorKind::kFormat, "shape entries must be non-negative integers");
    shape.push_back(e.get<std::int64_t>());
  }
  const Dtype dtype = parse_dtype(j["dtype"].get<std::string>());

  std::ifstream in(data, std::ios::binary);
  check(in.good(), ErrorKind::kFormat, "cannot open " + data.string());
  std::vector<std::uint8_t> raw((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());

  Tensor t(std::move(shape), dtype);
  check(raw.size() == t.bytes().size(), ErrorKind::kFormat,
        "length mismatch: " + data.string() + " has " +
            std::to_string(raw.size()) + " bytes, sidecar implies " +
            std::to_string(t.bytes().size()));
  std::copy(raw.begin(), raw.end(), t.bytes().begin());
  return t;
}

}  // namespace mixkern
