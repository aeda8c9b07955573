/*
 * Copyright 2026 The unitrans Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Little-endian binary layout:
//
//   magic    8 bytes  "UNITRCKP"
//   version  u32
//   kind     u32      1 = encoder, 2 = translator
//   step     i64
//   config   u64 length + UTF-8 key=value text
//   count    u64      parameter triples
//   triple   u32 name length, name, i64 rows, i64 cols, rows*cols f32 row-major
//   moments  u8 flag; if 1, u64 count then first and second moment triples

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "unitrans/nn.hpp"
#include "unitrans/numerics/optim.hpp"

namespace unitrans {

inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class ModelKind : std::uint32_t { Encoder = 1, Translator = 2 };

const char* kind_name(ModelKind kind);

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  ModelKind kind = ModelKind::Encoder;
  std::int64_t step = 0;
  std::string config;
  std::vector<std::pair<std::string, Matrix>> params;
  std::vector<std::pair<std::string, Matrix>> first_moments;   // empty without optimizer state
  std::vector<std::pair<std::string, Matrix>> second_moments;

  /// Copies `params` into same-named, same-shaped model tensors. Missing,
  /// extra or misshaped entries are checkpoint errors.
  void restore(const NamedParams& model) const;
  /// Restores moments and step into an optimizer built over `model`.
  void restore(const NamedParams& model, Adam& optimizer) const;
};

Checkpoint make_checkpoint(ModelKind kind, const NamedParams& params, const std::string& config,
                           const Adam* optimizer = nullptr);

std::string serialize(const Checkpoint& ckpt);
Checkpoint deserialize(const std::string& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
/// Loads and rejects a checkpoint of another kind.
Checkpoint load_checkpoint(const std::filesystem::path& path, ModelKind expected);

}  // namespace unitrans
