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

#include "unitrans/nn.hpp"

#include <cmath>

namespace unitrans {

std::vector<Tensor> tensors_of(const NamedParams& params) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const auto& [name, t] : params) out.push_back(t);
  return out;
}

Matrix sinusoidal_positions(Index rows, Index width, Index start) {
  Matrix pe(rows, width);
  for (Index t = 0; t < rows; ++t) {
    for (Index i = 0; i < width; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) /
                                                static_cast<double>(width));
      const double angle = static_cast<double>(t + start) * rate;
      pe(t, i) = static_cast<float>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return pe;
}

Tensor add_positions(const Tensor& x, std::span<const Segment> segs) {
  Index longest = 0;
  for (const auto& s : segs) longest = std::max(longest, s.length);
  const Matrix table = sinusoidal_positions(longest, x.cols());
  Matrix pe = Matrix::Zero(x.rows(), x.cols());
  for (const auto& s : segs) pe.middleRows(s.offset, s.length) = table.topRows(s.length);
  return add(x, Tensor(std::move(pe)));
}

Tensor xavier(Index rows, Index cols, std::mt19937_64& rng) {
  const float limit = std::sqrt(6.0f / static_cast<float>(rows + cols));
  std::uniform_real_distribution<float> dist(-limit, limit);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return Tensor(std::move(m), true);
}

Tensor gaussian(Index rows, Index cols, float stddev, std::mt19937_64& rng) {
  std::normal_distribution<float> dist(0.0f, stddev);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return Tensor(std::move(m), true);
}

Linear::Linear(Index in, Index out, std::mt19937_64& rng)
    : weight(xavier(in, out, rng)), bias(Tensor::zeros(1, out, true)) {}

void Linear::collect(const std::string& prefix, NamedParams& out) const {
  out.emplace_back(prefix + ".weight", weight);
  out.emplace_back(prefix + ".bias", bias);
}

LayerNorm::LayerNorm(Index width)
    : gain(Tensor(Matrix::Ones(1, width), true)), bias(Tensor::zeros(1, width, true)) {}

void LayerNorm::collect(const std::string& prefix, NamedParams& out) const {
  out.emplace_back(prefix + ".gain", gain);
  out.emplace_back(prefix + ".bias", bias);
}

MultiHeadAttention::MultiHeadAttention(Index width, Index heads_, std::mt19937_64& rng)
    : query(width, width, rng),
      key(width, width, rng),
      value(width, width, rng),
      output(width, width, rng),
      heads(heads_) {}

Tensor MultiHeadAttention::operator()(const Tensor& x, const Tensor& memory,
                                      std::span<const Segment> q_segs,
                                      std::span<const Segment> k_segs, bool causal) const {
  const Tensor q = query(x);
  const Tensor k = key(memory);
  const Tensor v = value(memory);
  return output(attention(q, k, v, q_segs, k_segs, heads, causal));
}

KvCache MultiHeadAttention::project(const Tensor& memory) const {
  return {key(memory).value(), value(memory).value()};
}

Tensor MultiHeadAttention::step(const Tensor& x_row, KvCache& cache, bool append) const {
  if (append) {
    const Matrix k = key(x_row).value();
    const Matrix v = value(x_row).value();
    const Index n = cache.keys.rows();
    cache.keys.conservativeResize(n + 1, k.cols());
    cache.values.conservativeResize(n + 1, v.cols());
    cache.keys.row(n) = k.row(0);
    cache.values.row(n) = v.row(0);
  }
  const Tensor q = query(x_row);
  const std::vector<Segment> qs{{0, 1}};
  const std::vector<Segment> ks{{0, cache.keys.rows()}};
  return output(attention(q, Tensor(cache.keys), Tensor(cache.values), qs, ks, heads, false));
}

void MultiHeadAttention::collect(const std::string& prefix, NamedParams& out) const {
  query.collect(prefix + ".query", out);
  key.collect(prefix + ".key", out);
  value.collect(prefix + ".value", out);
  output.collect(prefix + ".output", out);
}

FeedForward::FeedForward(Index width, Index hidden, std::mt19937_64& rng)
    : expand(width, hidden, rng), contract(hidden, width, rng) {}

void FeedForward::collect(const std::string& prefix, NamedParams& out) const {
  expand.collect(prefix + ".expand", out);
  contract.collect(prefix + ".contract", out);
}

EncoderBlock::EncoderBlock(Index width, Index heads, Index hidden, std::mt19937_64& rng)
    : norm_attn(width), attn(width, heads, rng), norm_ff(width), ff(width, hidden, rng) {}

Tensor EncoderBlock::operator()(const Tensor& x, std::span<const Segment> segs) const {
  const Tensor h = norm_attn(x);
  const Tensor y = add(x, attn(h, h, segs, segs, false));
  return add(y, ff(norm_ff(y)));
}

void EncoderBlock::collect(const std::string& prefix, NamedParams& out) const {
  norm_attn.collect(prefix + ".norm_attn", out);
  attn.collect(prefix + ".attn", out);
  norm_ff.collect(prefix + ".norm_ff", out);
  ff.collect(prefix + ".ff", out);
}

DecoderBlock::DecoderBlock(Index width, Index heads, Index hidden, std::mt19937_64& rng)
    : norm_self(width),
      self_attn(width, heads, rng),
      norm_cross(width),
      cross_attn(width, heads, rng),
      norm_ff(width),
      ff(width, hidden, rng) {}

Tensor DecoderBlock::operator()(const Tensor& x, std::span<const Segment> segs,
                                const Tensor& memory, std::span<const Segment> mem_segs) const {
  const Tensor h = norm_self(x);
  Tensor y = add(x, self_attn(h, h, segs, segs, true));
  y = add(y, cross_attn(norm_cross(y), memory, segs, mem_segs, false));
  return add(y, ff(norm_ff(y)));
}

DecoderBlock::State DecoderBlock::start(const Tensor& memory) const {
  State s;
  s.self.keys = Matrix(0, memory.cols());
  s.self.values = Matrix(0, memory.cols());
  s.cross = cross_attn.project(memory);
  return s;
}

Tensor DecoderBlock::step(const Tensor& x_row, State& state) const {
  Tensor y = add(x_row, self_attn.step(norm_self(x_row), state.self, true));
  y = add(y, cross_attn.step(norm_cross(y), state.cross, false));
  return add(y, ff(norm_ff(y)));
}

void DecoderBlock::collect(const std::string& prefix, NamedParams& out) const {
  norm_self.collect(prefix + ".norm_self", out);
  self_attn.collect(prefix + ".self_attn", out);
  norm_cross.collect(prefix + ".norm_cross", out);
  cross_attn.collect(prefix + ".cross_attn", out);
  norm_ff.collect(prefix + ".norm_ff", out);
  ff.collect(prefix + ".ff", out);
}

}  // namespace unitrans
