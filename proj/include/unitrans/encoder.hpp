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
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "unitrans/nn.hpp"
#include "unitrans/numerics/optim.hpp"
#include "unitrans/synthlang.hpp"

namespace unitrans {

/// Fixed-size sentence representation. `source_lang` is bookkeeping only and
/// is never read by any computation.
struct SentenceEmbedding {
  RowVector values;
  std::string source_lang;

  Index dim() const { return values.size(); }
};

/// Cosine similarity; zero vectors are rejected.
double cosine(const SentenceEmbedding& a, const SentenceEmbedding& b);
double cosine(const RowVector& a, const RowVector& b);

struct EncoderConfig {
  int vocab = 384;      // total unit IDs across languages
  int layers = 2;       // 0 disables self-attention and positions
  int width = 64;       // D_enc
  int embed_dim = 64;   // D
  int heads = 4;
  int ffn = 256;
  float dropout = 0.0f;

  void validate() const;
};

/// Deterministic cross-lingual regression target: bag-of-concepts counts
/// projected by a seeded Gaussian matrix, then L2-normalized.
class TeacherAnchor {
 public:
  TeacherAnchor(int num_concepts, int dim, std::uint64_t seed);
  RowVector operator()(const ConceptSentence& sentence) const;
  int dim() const { return static_cast<int>(projection_.rows()); }

 private:
  Matrix projection_;  // dim × num_concepts
};

class SentenceEncoder {
 public:
  SentenceEncoder(EncoderConfig config, std::uint64_t seed);

  const EncoderConfig& config() const { return config_; }

  /// Differentiable batch forward: one L2-normalized row per sequence.
  Tensor forward(std::span<const UnitSequence> batch, std::mt19937_64* dropout_rng = nullptr) const;

  /// Inference; records nothing even when a tape is active.
  SentenceEmbedding encode(const UnitSequence& units) const;
  std::vector<SentenceEmbedding> encode_all(std::span<const UnitSequence> seqs,
                                            std::size_t batch = 64) const;

  NamedParams named_parameters() const;

  /// Freezing clears requires_grad on every parameter.
  void freeze();
  bool frozen() const { return frozen_; }

 private:
  void check(const UnitSequence& units) const;

  EncoderConfig config_;
  Tensor embedding_;
  std::vector<EncoderBlock> blocks_;
  LayerNorm final_norm_;
  Linear projection_;
  bool frozen_ = false;
};

struct EncoderTrainConfig {
  int epochs = 6;
  int batch_size = 32;
  std::uint64_t seed = 1;
  std::uint64_t anchor_seed = 7;
  AdamConfig adam;
  /// Invoked after each epoch with (epoch, mean loss); optional.
  std::function<void(int, double)> on_epoch;
};

struct EncoderTrainReport {
  double initial_loss = 0.0;  // mean loss over the first batch before any update
  std::vector<double> epoch_loss;
  std::int64_t steps = 0;
};

/// Regresses normalized embeddings onto TeacherAnchor targets over the
/// monolingual training data of every language.
EncoderTrainReport train_encoder(SentenceEncoder& model, const Corpus& corpus,
                                 const EncoderTrainConfig& config, Adam* optimizer = nullptr);

}  // namespace unitrans
