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
#include <map>
#include <span>
#include <string>
#include <vector>

#include "unitrans/encoder.hpp"
#include "unitrans/nn.hpp"
#include "unitrans/numerics/optim.hpp"
#include "unitrans/synthlang.hpp"

namespace unitrans {

///////////////////////////////////////////
// Unit reduction
///////////////////////////////////////////

/// Run-length form of a unit sequence: no two adjacent units are equal and
/// every duration is at least 1.
struct ReducedUnitSequence {
  std::vector<int> units;
  std::vector<int> durations;
  bool operator==(const ReducedUnitSequence&) const = default;
};

ReducedUnitSequence reduce_units(const UnitSequence& units);
UnitSequence expand_units(const ReducedUnitSequence& reduced);

///////////////////////////////////////////
// Feature expansion
///////////////////////////////////////////

/// N_sub frames of width D / N_sub cut from one embedding.
struct SubEmbeddingGrid {
  Matrix frames;
  int n_sub() const { return static_cast<int>(frames.rows()); }
  RowVector flatten() const;
};

SubEmbeddingGrid expand_features(const SentenceEmbedding& embedding, int n_sub);

///////////////////////////////////////////
// Model
///////////////////////////////////////////

struct TranslatorConfig {
  int embed_dim = 64;           // D, must match the encoder
  int n_sub = 16;               // sub-embedding frames
  bool semantic_encoder = true; // false: a single linear projection per frame
  int conv_taps = 3;
  int model_dim = 128;
  int layers = 4;
  int heads = 4;
  int ffn = 512;
  int total_units = 384;        // unit IDs [0, total_units)
  std::vector<std::string> target_languages{"en"};
  int max_decode_length = 128;  // reduced tokens
  float dropout = 0.0f;

  void validate() const;
};

/// Token layout: unit IDs first, then PAD, BOS, EOS, then one token per
/// target language in configuration order.
struct Vocabulary {
  int total_units = 0;
  std::vector<std::string> languages;

  int pad() const { return total_units; }
  int bos() const { return total_units + 1; }
  int eos() const { return total_units + 2; }
  int language_token(const std::string& lang) const;
  int size() const { return total_units + 3 + static_cast<int>(languages.size()); }
  bool is_unit(int token) const { return token >= 0 && token < total_units; }
};

struct TranslationResult {
  UnitSequence units;
  ReducedUnitSequence reduced;
  bool truncated = false;  // max length reached before EOS
};

/// Forward outputs for a teacher-forced batch.
struct TeacherForcedOutput {
  Tensor logits;          // one row per predicted token
  std::vector<int> targets;
  Tensor log_durations;   // one row per target unit
  Matrix duration_targets;
};

struct TrainingExample {
  RowVector embedding;
  std::string lang;
  ReducedUnitSequence target;
};

class TranslatorModel {
 public:
  TranslatorModel(TranslatorConfig config, std::uint64_t seed);

  const TranslatorConfig& config() const { return config_; }
  const Vocabulary& vocabulary() const { return vocab_; }

  /// Semantic frames N_sub × model_dim for one grid; inference only.
  Matrix semantic_encode(const SubEmbeddingGrid& grid) const;
  /// Differentiable semantic encoding of packed grids.
  Tensor semantic_encode(const Tensor& packed_frames, std::span<const Segment> segs) const;

  TeacherForcedOutput teacher_forced(std::span<const TrainingExample> batch,
                                     std::mt19937_64* dropout_rng = nullptr) const;

  /// Greedy decoding from a sentence embedding.
  TranslationResult decode(const SentenceEmbedding& embedding, const std::string& target_lang) const;

  /// Logits of every position for a fixed token prefix, via the batch path.
  Matrix prefix_logits(const SentenceEmbedding& embedding, const std::vector<int>& tokens) const;
  /// Same logits via incremental cached decoding.
  Matrix incremental_logits(const SentenceEmbedding& embedding, const std::vector<int>& tokens) const;

  NamedParams named_parameters() const;

 private:
  Tensor decoder_hidden(std::span<const std::vector<int>> inputs, const Tensor& memory,
                        std::span<const Segment> mem_segs, std::mt19937_64* dropout_rng) const;
  Tensor memory_for(std::span<const RowVector> embeddings, std::vector<Segment>& segs) const;

  TranslatorConfig config_;
  Vocabulary vocab_;
  Linear conv1_;   // kernel stored as weight [(taps·in)×model_dim]
  Linear conv2_;
  Linear bypass_;
  Tensor token_embedding_;
  std::vector<DecoderBlock> blocks_;
  LayerNorm final_norm_;
  Linear unit_head_;
  Linear duration_head_;
};

/// Encodes a source sequence and decodes it in the requested language.
TranslationResult translate(const TranslatorModel& model, const SentenceEncoder& encoder,
                            const UnitSequence& source, const std::string& target_lang);

struct TranslatorTrainConfig {
  int epochs = 12;
  int batch_size = 32;
  float label_smoothing = 0.2f;
  float duration_weight = 0.5f;
  std::uint64_t seed = 1;
  AdamConfig adam;
  std::function<void(int, double, double)> on_epoch;  // epoch, token loss, duration loss
};

struct TranslatorTrainReport {
  double initial_loss = 0.0;  // combined loss of the first batch before any update
  std::vector<double> epoch_token_loss;
  std::vector<double> epoch_duration_loss;
  std::vector<double> epoch_loss;
  std::int64_t steps = 0;
};

/// Monolingual training input: sequences grouped by their own language. The
/// type carries no pairing information.
struct MonolingualData {
  std::map<std::string, std::vector<UnitSequence>> by_language;
};

/// Rejects input that carries anything other than pure, configured
/// target-language sequences.
void check_monolingual(const MonolingualData& data, const Corpus& corpus,
                       const std::vector<std::string>& targets);

/// Trains the decoder to reconstruct each target-language sequence from the
/// frozen encoder's embedding of that same sequence.
TranslatorTrainReport train_translator(TranslatorModel& model, const SentenceEncoder& encoder,
                                       const MonolingualData& data, const Corpus& corpus,
                                       const TranslatorTrainConfig& config,
                                       Adam* optimizer = nullptr);

/// Teacher-forced token accuracy over examples.
double teacher_forced_accuracy(const TranslatorModel& model, std::span<const TrainingExample> examples);

std::vector<TrainingExample> make_examples(const SentenceEncoder& encoder, const std::string& lang,
                                           std::span<const UnitSequence> seqs);

}  // namespace unitrans
