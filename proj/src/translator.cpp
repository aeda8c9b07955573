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

#include "unitrans/translator.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <set>

namespace unitrans {

///////////////////////////////////////////
// Unit reduction
///////////////////////////////////////////

ReducedUnitSequence reduce_units(const UnitSequence& units) {
  ReducedUnitSequence out;
  for (int u : units) {
    if (!out.units.empty() && out.units.back() == u) {
      ++out.durations.back();
    } else {
      out.units.push_back(u);
      out.durations.push_back(1);
    }
  }
  return out;
}

UnitSequence expand_units(const ReducedUnitSequence& reduced) {
  if (reduced.units.size() != reduced.durations.size()) {
    fail(ErrorCategory::Invariant, "reduced sequence has " + std::to_string(reduced.units.size()) +
                                       " units but " + std::to_string(reduced.durations.size()) +
                                       " durations");
  }
  UnitSequence out;
  for (std::size_t i = 0; i < reduced.units.size(); ++i) {
    if (reduced.durations[i] < 1) {
      fail(ErrorCategory::Invariant, "duration " + std::to_string(reduced.durations[i]) +
                                         " at position " + std::to_string(i) + " is not positive");
    }
    out.insert(out.end(), static_cast<std::size_t>(reduced.durations[i]), reduced.units[i]);
  }
  return out;
}

///////////////////////////////////////////
// Feature expansion
///////////////////////////////////////////

RowVector SubEmbeddingGrid::flatten() const {
  return Eigen::Map<const RowVector>(frames.data(), frames.size());
}

SubEmbeddingGrid expand_features(const SentenceEmbedding& embedding, int n_sub) {
  const Index d = embedding.dim();
  if (n_sub < 1 || d % n_sub != 0) {
    fail(ErrorCategory::Config, "n_sub=" + std::to_string(n_sub) +
                                    " does not divide embedding dimension D=" + std::to_string(d));
  }
  // Row-major storage makes frame i the contiguous slice [i·D/N, (i+1)·D/N).
  SubEmbeddingGrid grid;
  grid.frames = Eigen::Map<const Matrix>(embedding.values.data(), n_sub, d / n_sub);
  return grid;
}

///////////////////////////////////////////
// Model
///////////////////////////////////////////

void TranslatorConfig::validate() const {
  if (n_sub < 1 || embed_dim % n_sub != 0) {
    fail(ErrorCategory::Config, "n_sub=" + std::to_string(n_sub) +
                                    " does not divide embed_dim=" + std::to_string(embed_dim));
  }
  if (conv_taps < 1 || conv_taps % 2 == 0) fail(ErrorCategory::Config, "conv_taps must be odd");
  if (model_dim < 1 || ffn < 1 || layers < 1) {
    fail(ErrorCategory::Config, "decoder sizes must be positive");
  }
  if (heads < 1 || model_dim % heads != 0) {
    fail(ErrorCategory::Config, "dec_heads must divide dec_model_dim");
  }
  if (total_units < 1) fail(ErrorCategory::Config, "total_units must be positive");
  if (target_languages.empty()) fail(ErrorCategory::Config, "target_langs must not be empty");
  std::set<std::string> seen(target_languages.begin(), target_languages.end());
  if (seen.size() != target_languages.size()) {
    fail(ErrorCategory::Config, "target_langs contains duplicates");
  }
  if (max_decode_length < 1) fail(ErrorCategory::Config, "max_decode_length must be positive");
  if (dropout < 0.0f || dropout >= 1.0f) fail(ErrorCategory::Config, "dropout must lie in [0,1)");
}

int Vocabulary::language_token(const std::string& lang) const {
  for (std::size_t i = 0; i < languages.size(); ++i) {
    if (languages[i] == lang) return total_units + 3 + static_cast<int>(i);
  }
  fail(ErrorCategory::Config, "no language token for '" + lang + "'");
}

TranslatorModel::TranslatorModel(TranslatorConfig config, std::uint64_t seed)
    : config_(std::move(config)) {
  config_.validate();
  vocab_.total_units = config_.total_units;
  vocab_.languages = config_.target_languages;
  std::mt19937_64 rng(derive_seed(seed, {0x7D}));
  const Index frame = config_.embed_dim / config_.n_sub;
  const Index d = config_.model_dim;
  conv1_ = Linear(config_.conv_taps * frame, d, rng);
  conv2_ = Linear(config_.conv_taps * d, d, rng);
  bypass_ = Linear(frame, d, rng);
  token_embedding_ = gaussian(vocab_.size(), d, 1.0f / std::sqrt(static_cast<float>(d)), rng);
  for (int i = 0; i < config_.layers; ++i) blocks_.emplace_back(d, config_.heads, config_.ffn, rng);
  final_norm_ = LayerNorm(d);
  unit_head_ = Linear(d, vocab_.size(), rng);
  duration_head_ = Linear(d, 1, rng);
}

Tensor TranslatorModel::semantic_encode(const Tensor& packed, std::span<const Segment> segs) const {
  Tensor h;
  if (config_.semantic_encoder) {
    h = relu(add_bias(conv1d(packed, conv1_.weight, config_.conv_taps, segs), conv1_.bias));
    h = add_bias(conv1d(h, conv2_.weight, config_.conv_taps, segs), conv2_.bias);
  } else {
    h = bypass_(packed);
  }
  return add_positions(h, segs);
}

Matrix TranslatorModel::semantic_encode(const SubEmbeddingGrid& grid) const {
  NoTapeScope no_tape;
  const auto segs = whole(grid.frames.rows());
  return semantic_encode(Tensor(grid.frames), segs).value();
}

Tensor TranslatorModel::memory_for(std::span<const RowVector> embeddings,
                                   std::vector<Segment>& segs) const {
  const Index n = config_.n_sub;
  const Index frame = config_.embed_dim / n;
  Matrix packed(static_cast<Index>(embeddings.size()) * n, frame);
  segs.clear();
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    if (embeddings[i].size() != config_.embed_dim) {
      fail(ErrorCategory::Dimension, "embedding of size " + std::to_string(embeddings[i].size()) +
                                         " for a model expecting " +
                                         std::to_string(config_.embed_dim));
    }
    const Index off = static_cast<Index>(i) * n;
    packed.middleRows(off, n) = Eigen::Map<const Matrix>(embeddings[i].data(), n, frame);
    segs.push_back({off, n});
  }
  return semantic_encode(Tensor(std::move(packed)), segs);
}

Tensor TranslatorModel::decoder_hidden(std::span<const std::vector<int>> inputs,
                                       const Tensor& memory, std::span<const Segment> mem_segs,
                                       std::mt19937_64* dropout_rng) const {
  std::vector<int> ids;
  std::vector<Index> lengths;
  for (const auto& seq : inputs) {
    ids.insert(ids.end(), seq.begin(), seq.end());
    lengths.push_back(static_cast<Index>(seq.size()));
  }
  const auto segs = pack_segments(lengths);
  Tensor x = scale(embedding_lookup(token_embedding_, ids),
                   std::sqrt(static_cast<float>(config_.model_dim)));
  x = add_positions(x, segs);
  for (const auto& block : blocks_) {
    if (dropout_rng) x = dropout(x, config_.dropout, *dropout_rng);
    x = block(x, segs, memory, mem_segs);
  }
  return final_norm_(x);
}

TeacherForcedOutput TranslatorModel::teacher_forced(std::span<const TrainingExample> batch,
                                                    std::mt19937_64* dropout_rng) const {
  if (batch.empty()) fail(ErrorCategory::EmptyInput, "teacher_forced: empty batch");
  std::vector<RowVector> embeddings;
  std::vector<std::vector<int>> inputs;
  TeacherForcedOutput out;
  std::vector<int> pred_rows;
  std::vector<int> dur_rows;
  std::vector<float> dur_targets;
  int offset = 0;
  for (const auto& ex : batch) {
    if (ex.target.units.empty()) fail(ErrorCategory::EmptyInput, "teacher_forced: empty target");
    embeddings.push_back(ex.embedding);
    std::vector<int> seq{vocab_.bos(), vocab_.language_token(ex.lang)};
    for (int u : ex.target.units) {
      if (!vocab_.is_unit(u)) fail(ErrorCategory::Index, "unit " + std::to_string(u) + " not in vocabulary");
      seq.push_back(u);
    }
    const int n = static_cast<int>(ex.target.units.size());
    for (int i = 1; i <= n + 1; ++i) pred_rows.push_back(offset + i);
    for (int i = 0; i < n; ++i) out.targets.push_back(ex.target.units[static_cast<std::size_t>(i)]);
    out.targets.push_back(vocab_.eos());
    for (int i = 0; i < n; ++i) {
      dur_rows.push_back(offset + 2 + i);
      dur_targets.push_back(std::log(static_cast<float>(ex.target.durations[static_cast<std::size_t>(i)])));
    }
    offset += static_cast<int>(seq.size());
    inputs.push_back(std::move(seq));
  }
  std::vector<Segment> mem_segs;
  const Tensor memory = memory_for(embeddings, mem_segs);
  const Tensor hidden = decoder_hidden(inputs, memory, mem_segs, dropout_rng);
  out.logits = unit_head_(embedding_lookup(hidden, pred_rows));
  out.log_durations = duration_head_(embedding_lookup(hidden, dur_rows));
  out.duration_targets = Eigen::Map<const Matrix>(dur_targets.data(), static_cast<Index>(dur_targets.size()), 1);
  return out;
}

Matrix TranslatorModel::prefix_logits(const SentenceEmbedding& embedding,
                                      const std::vector<int>& tokens) const {
  NoTapeScope no_tape;
  std::vector<Segment> mem_segs;
  const std::vector<RowVector> e{embedding.values};
  const Tensor memory = memory_for(e, mem_segs);
  const std::vector<std::vector<int>> inputs{tokens};
  return unit_head_(decoder_hidden(inputs, memory, mem_segs, nullptr)).value();
}

namespace {

/// Incremental decoding state over a fixed memory.
class Stepper {
 public:
  Stepper(const std::vector<DecoderBlock>& blocks, const Tensor& embedding_table,
          const LayerNorm& final_norm, const Tensor& memory, Index width)
      : blocks_(blocks), table_(embedding_table), final_norm_(final_norm), width_(width) {
    for (const auto& b : blocks_) states_.push_back(b.start(memory));
  }

  Tensor feed(int token) {
    Matrix row = table_.value().row(token) * std::sqrt(static_cast<float>(width_));
    row += sinusoidal_positions(1, width_, position_++);
    Tensor x(std::move(row));
    for (std::size_t i = 0; i < blocks_.size(); ++i) x = blocks_[i].step(x, states_[i]);
    return final_norm_(x);
  }

 private:
  const std::vector<DecoderBlock>& blocks_;
  const Tensor& table_;
  const LayerNorm& final_norm_;
  Index width_;
  Index position_ = 0;
  std::vector<DecoderBlock::State> states_;
};

}  // namespace

Matrix TranslatorModel::incremental_logits(const SentenceEmbedding& embedding,
                                           const std::vector<int>& tokens) const {
  NoTapeScope no_tape;
  const Tensor memory(semantic_encode(expand_features(embedding, config_.n_sub)));
  Stepper stepper(blocks_, token_embedding_, final_norm_, memory, config_.model_dim);
  Matrix out(static_cast<Index>(tokens.size()), vocab_.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    out.row(static_cast<Index>(i)) = unit_head_(stepper.feed(tokens[i])).value().row(0);
  }
  return out;
}

TranslationResult TranslatorModel::decode(const SentenceEmbedding& embedding,
                                          const std::string& target_lang) const {
  NoTapeScope no_tape;
  const int lang_token = vocab_.language_token(target_lang);
  const Tensor memory(semantic_encode(expand_features(embedding, config_.n_sub)));
  Stepper stepper(blocks_, token_embedding_, final_norm_, memory, config_.model_dim);
  stepper.feed(vocab_.bos());
  Tensor h = stepper.feed(lang_token);
  TranslationResult result;
  const int eos = vocab_.eos();
  for (;;) {
    const Matrix logits = unit_head_(h).value();
    int best = eos;
    float best_score = logits(0, eos);
    for (int u = 0; u < vocab_.total_units; ++u) {
      if (logits(0, u) > best_score) {
        best_score = logits(0, u);
        best = u;
      }
    }
    if (best == eos) break;
    if (static_cast<int>(result.reduced.units.size()) >= config_.max_decode_length) {
      result.truncated = true;
      break;
    }
    result.reduced.units.push_back(best);
    h = stepper.feed(best);
    const float log_d = duration_head_(h).value()(0, 0);
    const float d = std::round(std::exp(std::clamp(log_d, -10.0f, 6.0f)));
    result.reduced.durations.push_back(std::max(1, static_cast<int>(d)));
  }
  result.units = expand_units(result.reduced);
  return result;
}

NamedParams TranslatorModel::named_parameters() const {
  NamedParams out;
  if (config_.semantic_encoder) {
    conv1_.collect("translator.semantic.conv1", out);
    conv2_.collect("translator.semantic.conv2", out);
  } else {
    bypass_.collect("translator.semantic.bypass", out);
  }
  out.emplace_back("translator.token_embedding", token_embedding_);
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    blocks_[i].collect("translator.block" + std::to_string(i), out);
  }
  final_norm_.collect("translator.final_norm", out);
  unit_head_.collect("translator.unit_head", out);
  duration_head_.collect("translator.duration_head", out);
  return out;
}

TranslationResult translate(const TranslatorModel& model, const SentenceEncoder& encoder,
                            const UnitSequence& source, const std::string& target_lang) {
  return model.decode(encoder.encode(source), target_lang);
}

///////////////////////////////////////////
// Training
///////////////////////////////////////////

void check_monolingual(const MonolingualData& data, const Corpus& corpus,
                       const std::vector<std::string>& targets) {
  const std::set<std::string> allowed(targets.begin(), targets.end());
  for (const auto& [lang, seqs] : data.by_language) {
    if (!allowed.count(lang)) {
      fail(ErrorCategory::Contract,
           "training input contains language '" + lang + "' which is not a configured target");
    }
    const auto& def = corpus.language(lang);
    for (std::size_t i = 0; i < seqs.size(); ++i) {
      if (seqs[i].empty()) {
        fail(ErrorCategory::Contract, "empty training sequence " + std::to_string(i) + " in " + lang);
      }
      for (int u : seqs[i]) {
        if (!def.owns(u, corpus.num_concepts())) {
          fail(ErrorCategory::Contract, "training sequence " + std::to_string(i) + " of '" + lang +
                                            "' carries foreign unit " + std::to_string(u) +
                                            " (paired or mixed-language data)");
        }
      }
    }
  }
  for (const auto& t : targets) {
    auto it = data.by_language.find(t);
    if (it == data.by_language.end() || it->second.empty()) {
      fail(ErrorCategory::Contract, "no training data for target language '" + t + "'");
    }
  }
}

std::vector<TrainingExample> make_examples(const SentenceEncoder& encoder, const std::string& lang,
                                           std::span<const UnitSequence> seqs) {
  const auto embeddings = encoder.encode_all(seqs);
  std::vector<TrainingExample> out;
  out.reserve(seqs.size());
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    out.push_back({embeddings[i].values, lang, reduce_units(seqs[i])});
  }
  return out;
}

TranslatorTrainReport train_translator(TranslatorModel& model, const SentenceEncoder& encoder,
                                       const MonolingualData& data, const Corpus& corpus,
                                       const TranslatorTrainConfig& config, Adam* optimizer) {
  if (!encoder.frozen()) fail(ErrorCategory::Usage, "translator training needs a frozen encoder");
  if (config.batch_size < 1 || config.epochs < 0) {
    fail(ErrorCategory::Config, "translator batch size and epochs must be positive");
  }
  if (!(config.label_smoothing >= 0.0f && config.label_smoothing < 1.0f)) {
    fail(ErrorCategory::Config, "label_smoothing must lie in [0,1)");
  }
  if (config.duration_weight < 0.0f) fail(ErrorCategory::Config, "duration_weight must be >= 0");
  const auto& targets = model.config().target_languages;
  check_monolingual(data, corpus, targets);

  std::vector<TrainingExample> examples;
  for (const auto& lang : targets) {
    auto part = make_examples(encoder, lang, data.by_language.at(lang));
    examples.insert(examples.end(), std::make_move_iterator(part.begin()),
                    std::make_move_iterator(part.end()));
  }

  std::unique_ptr<Adam> owned;
  if (!optimizer) {
    owned = std::make_unique<Adam>(tensors_of(model.named_parameters()), config.adam);
    optimizer = owned.get();
  }

  TranslatorTrainReport report;
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 dropout_rng(derive_seed(config.seed, {0xD1}));
  const bool use_dropout = model.config().dropout > 0.0f;
  const auto bs = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::mt19937_64 shuffle_rng(derive_seed(config.seed, {0x5E, static_cast<std::uint64_t>(epoch)}));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double tok_total = 0.0;
    double dur_total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t n = std::min(bs, order.size() - start);
      std::vector<TrainingExample> batch;
      batch.reserve(n);
      for (std::size_t i = 0; i < n; ++i) batch.push_back(examples[order[start + i]]);

      Tape tape;
      TapeScope scope(tape);
      const auto out = model.teacher_forced(batch, use_dropout ? &dropout_rng : nullptr);
      const Tensor tok_loss = label_smoothed_ce(out.logits, out.targets, config.label_smoothing);
      const Tensor dur_loss = mse(out.log_durations, out.duration_targets);
      const Tensor loss = add(tok_loss, scale(dur_loss, config.duration_weight));
      const double value = loss.item();
      if (!std::isfinite(value)) {
        fail(ErrorCategory::Training,
             "translator loss diverged at step " + std::to_string(optimizer->steps() + 1));
      }
      if (report.steps == 0 && epoch == 0) report.initial_loss = value;
      backward(loss);
      optimizer->step();
      optimizer->zero_grad();
      ++report.steps;
      tok_total += tok_loss.item();
      dur_total += dur_loss.item();
      ++batches;
    }
    const double nb = static_cast<double>(batches);
    report.epoch_token_loss.push_back(tok_total / nb);
    report.epoch_duration_loss.push_back(dur_total / nb);
    report.epoch_loss.push_back((tok_total + config.duration_weight * dur_total) / nb);
    if (config.on_epoch) config.on_epoch(epoch, tok_total / nb, dur_total / nb);
  }
  return report;
}

double teacher_forced_accuracy(const TranslatorModel& model,
                               std::span<const TrainingExample> examples) {
  NoTapeScope no_tape;
  std::size_t correct = 0;
  std::size_t total = 0;
  for (std::size_t i = 0; i < examples.size(); i += 64) {
    const auto n = std::min<std::size_t>(64, examples.size() - i);
    const auto out = model.teacher_forced(examples.subspan(i, n));
    const Matrix& logits = out.logits.value();
    for (Index r = 0; r < logits.rows(); ++r) {
      Index best = 0;
      logits.row(r).maxCoeff(&best);
      correct += static_cast<int>(best) == out.targets[static_cast<std::size_t>(r)] ? 1 : 0;
      ++total;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace unitrans
