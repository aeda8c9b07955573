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

#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "unitrans/numerics/ops.hpp"

namespace unitrans {

/// Named parameter list in a fixed registration order.
using NamedParams = std::vector<std::pair<std::string, Tensor>>;

std::vector<Tensor> tensors_of(const NamedParams& params);

/// Fixed sinusoidal position table, rows start..start+rows-1.
Matrix sinusoidal_positions(Index rows, Index width, Index start = 0);

/// Adds positions 0..len-1 to every segment of x (constant, no gradient).
Tensor add_positions(const Tensor& x, std::span<const Segment> segs);

Tensor xavier(Index rows, Index cols, std::mt19937_64& rng);
Tensor gaussian(Index rows, Index cols, float stddev, std::mt19937_64& rng);

struct Linear {
  Tensor weight;
  Tensor bias;

  Linear() = default;
  Linear(Index in, Index out, std::mt19937_64& rng);
  Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }
  void collect(const std::string& prefix, NamedParams& out) const;
};

struct LayerNorm {
  Tensor gain;
  Tensor bias;

  LayerNorm() = default;
  explicit LayerNorm(Index width);
  Tensor operator()(const Tensor& x) const { return layer_norm(x, gain, bias); }
  void collect(const std::string& prefix, NamedParams& out) const;
};

/// Cached keys/values for one attention layer during incremental decoding.
struct KvCache {
  Matrix keys;
  Matrix values;
};

struct MultiHeadAttention {
  Linear query;
  Linear key;
  Linear value;
  Linear output;
  Index heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(Index width, Index heads, std::mt19937_64& rng);

  Tensor operator()(const Tensor& x, const Tensor& memory, std::span<const Segment> q_segs,
                    std::span<const Segment> k_segs, bool causal) const;

  /// Projects a memory once so later single-row queries can reuse it.
  KvCache project(const Tensor& memory) const;
  /// One query row against cached keys/values; appends the row's own key and
  /// value first when `append` is set (causal self-attention).
  Tensor step(const Tensor& x_row, KvCache& cache, bool append) const;

  void collect(const std::string& prefix, NamedParams& out) const;
};

struct FeedForward {
  Linear expand;
  Linear contract;

  FeedForward() = default;
  FeedForward(Index width, Index hidden, std::mt19937_64& rng);
  Tensor operator()(const Tensor& x) const { return contract(relu(expand(x))); }
  void collect(const std::string& prefix, NamedParams& out) const;
};

/// Pre-norm self-attention block.
struct EncoderBlock {
  LayerNorm norm_attn;
  MultiHeadAttention attn;
  LayerNorm norm_ff;
  FeedForward ff;

  EncoderBlock() = default;
  EncoderBlock(Index width, Index heads, Index hidden, std::mt19937_64& rng);
  Tensor operator()(const Tensor& x, std::span<const Segment> segs) const;
  void collect(const std::string& prefix, NamedParams& out) const;
};

/// Pre-norm decoder block: causal self-attention, cross-attention, FFN.
struct DecoderBlock {
  LayerNorm norm_self;
  MultiHeadAttention self_attn;
  LayerNorm norm_cross;
  MultiHeadAttention cross_attn;
  LayerNorm norm_ff;
  FeedForward ff;

  DecoderBlock() = default;
  DecoderBlock(Index width, Index heads, Index hidden, std::mt19937_64& rng);
  Tensor operator()(const Tensor& x, std::span<const Segment> segs, const Tensor& memory,
                    std::span<const Segment> mem_segs) const;

  struct State {
    KvCache self;
    KvCache cross;
  };
  State start(const Tensor& memory) const;
  Tensor step(const Tensor& x_row, State& state) const;

  void collect(const std::string& prefix, NamedParams& out) const;
};

}  // namespace unitrans
