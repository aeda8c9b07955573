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

#include "unitrans/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "unitrans/error.hpp"
#include "unitrans/kvfile.hpp"

namespace unitrans {

namespace {

constexpr char kMagic[8] = {'U', 'N', 'I', 'T', 'R', 'C', 'K', 'P'};
constexpr std::int64_t kMaxDim = std::int64_t{1} << 28;

class Writer {
 public:
  template <typename T>
  void put(T v) {
    using U = std::make_unsigned_t<T>;
    const U u = static_cast<U>(v);
    for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<char>((u >> (8 * i)) & 0xFF));
  }
  void put_f32(float f) { put(std::bit_cast<std::uint32_t>(f)); }
  void bytes(const char* p, std::size_t n) { out_.append(p, n); }
  void str32(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void triples(const std::vector<std::pair<std::string, Matrix>>& items) {
    for (const auto& [name, m] : items) {
      str32(name);
      put(static_cast<std::int64_t>(m.rows()));
      put(static_cast<std::int64_t>(m.cols()));
      for (Index i = 0; i < m.size(); ++i) put_f32(m.data()[i]);
    }
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : in_(in) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    using U = std::make_unsigned_t<T>;
    U u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      u |= static_cast<U>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return static_cast<T>(u);
  }
  std::string bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::vector<std::pair<std::string, Matrix>> triples(std::uint64_t count) {
    std::vector<std::pair<std::string, Matrix>> items;
    for (std::uint64_t k = 0; k < count; ++k) {
      const auto len = get<std::uint32_t>("name length");
      std::string name = bytes(len, "name");
      const auto rows = get<std::int64_t>("rows");
      const auto cols = get<std::int64_t>("cols");
      if (rows < 1 || cols < 1 || rows > kMaxDim || cols > kMaxDim) {
        fail(ErrorCategory::Checkpoint, "tensor '" + name + "' has invalid shape");
      }
      need(static_cast<std::size_t>(rows * cols) * 4, "tensor data");
      Matrix m(rows, cols);
      for (Index i = 0; i < m.size(); ++i) m.data()[i] = std::bit_cast<float>(get<std::uint32_t>("data"));
      items.emplace_back(std::move(name), std::move(m));
    }
    return items;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n, const char* what) {
    if (in_.size() - pos_ < n) {
      fail(ErrorCategory::Checkpoint, std::string("truncated checkpoint while reading ") + what);
    }
  }
  const std::string& in_;
  std::size_t pos_ = 0;
};

std::string shape(const Matrix& m) {
  return "[" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + "]";
}

}  // namespace

const char* kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::Encoder: return "encoder";
    case ModelKind::Translator: return "translator";
  }
  return "unknown";
}

Checkpoint make_checkpoint(ModelKind kind, const NamedParams& params, const std::string& config,
                           const Adam* optimizer) {
  Checkpoint c;
  c.kind = kind;
  c.config = config;
  for (const auto& [name, t] : params) c.params.emplace_back(name, t.value());
  if (optimizer) {
    if (optimizer->params().size() != params.size()) {
      fail(ErrorCategory::Usage, "optimizer does not cover the model parameters");
    }
    c.step = optimizer->steps();
    for (std::size_t i = 0; i < params.size(); ++i) {
      c.first_moments.emplace_back(params[i].first, optimizer->first_moments()[i]);
      c.second_moments.emplace_back(params[i].first, optimizer->second_moments()[i]);
    }
  }
  return c;
}

void Checkpoint::restore(const NamedParams& model) const {
  if (model.size() != params.size()) {
    fail(ErrorCategory::Checkpoint, "checkpoint holds " + std::to_string(params.size()) +
                                        " tensors, model expects " + std::to_string(model.size()));
  }
  std::map<std::string, const Matrix*> by_name;
  for (const auto& [name, m] : params) by_name[name] = &m;
  for (const auto& [name, t] : model) {
    auto it = by_name.find(name);
    if (it == by_name.end()) fail(ErrorCategory::Checkpoint, "checkpoint lacks tensor '" + name + "'");
    if (it->second->rows() != t.rows() || it->second->cols() != t.cols()) {
      fail(ErrorCategory::Checkpoint, "tensor '" + name + "' is " + shape(*it->second) +
                                          ", model expects " + t.shape_string());
    }
    Tensor handle = t;
    handle.mutable_value() = *it->second;
  }
}

void Checkpoint::restore(const NamedParams& model, Adam& optimizer) const {
  restore(model);
  if (first_moments.size() != model.size() || second_moments.size() != model.size()) {
    fail(ErrorCategory::Checkpoint, "checkpoint carries no optimizer state for this model");
  }
  for (std::size_t i = 0; i < model.size(); ++i) {
    if (first_moments[i].first != model[i].first || second_moments[i].first != model[i].first) {
      fail(ErrorCategory::Checkpoint, "optimizer state order differs at '" + model[i].first + "'");
    }
    optimizer.first_moments()[i] = first_moments[i].second;
    optimizer.second_moments()[i] = second_moments[i].second;
  }
  optimizer.set_steps(step);
}

std::string serialize(const Checkpoint& c) {
  Writer w;
  w.bytes(kMagic, sizeof(kMagic));
  w.put(c.version);
  w.put(static_cast<std::uint32_t>(c.kind));
  w.put(c.step);
  w.put(static_cast<std::uint64_t>(c.config.size()));
  w.bytes(c.config.data(), c.config.size());
  w.put(static_cast<std::uint64_t>(c.params.size()));
  w.triples(c.params);
  const bool moments = !c.first_moments.empty();
  w.put(static_cast<std::uint8_t>(moments ? 1 : 0));
  if (moments) {
    w.put(static_cast<std::uint64_t>(c.first_moments.size()));
    w.triples(c.first_moments);
    w.triples(c.second_moments);
  }
  return w.take();
}

Checkpoint deserialize(const std::string& bytes) {
  Reader r(bytes);
  if (r.bytes(sizeof(kMagic), "magic") != std::string(kMagic, sizeof(kMagic))) {
    fail(ErrorCategory::Checkpoint, "not a unitrans checkpoint (bad magic)");
  }
  Checkpoint c;
  c.version = r.get<std::uint32_t>("version");
  if (c.version != kCheckpointVersion) {
    fail(ErrorCategory::Checkpoint, "checkpoint version " + std::to_string(c.version) +
                                        " is not supported (expected " +
                                        std::to_string(kCheckpointVersion) + ")");
  }
  const auto kind = r.get<std::uint32_t>("kind");
  if (kind != 1 && kind != 2) fail(ErrorCategory::Checkpoint, "unknown model kind " + std::to_string(kind));
  c.kind = static_cast<ModelKind>(kind);
  c.step = r.get<std::int64_t>("step");
  const auto config_len = r.get<std::uint64_t>("config length");
  if (config_len > bytes.size()) fail(ErrorCategory::Checkpoint, "truncated checkpoint while reading config");
  c.config = r.bytes(static_cast<std::size_t>(config_len), "config");
  c.params = r.triples(r.get<std::uint64_t>("tensor count"));
  if (r.get<std::uint8_t>("optimizer flag")) {
    const auto n = r.get<std::uint64_t>("moment count");
    c.first_moments = r.triples(n);
    c.second_moments = r.triples(n);
  }
  if (!r.done()) fail(ErrorCategory::Checkpoint, "trailing bytes after checkpoint payload");
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::string bytes = serialize(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCategory::Io, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCategory::Io, "failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    fail(ErrorCategory::Checkpoint, "checkpoint not found: " + path.string());
  }
  return deserialize(read_text_file(path));
}

Checkpoint load_checkpoint(const std::filesystem::path& path, ModelKind expected) {
  Checkpoint c = load_checkpoint(path);
  if (c.kind != expected) {
    fail(ErrorCategory::Checkpoint, path.string() + " holds a " + kind_name(c.kind) +
                                        " checkpoint, expected " + kind_name(expected));
  }
  return c;
}

}  // namespace unitrans
