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

#include "unitrans/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

namespace unitrans {

double cosine(const RowVector& a, const RowVector& b) {
  if (a.size() != b.size()) {
    fail(ErrorCategory::Dimension, "cosine: dimensions " + std::to_string(a.size()) + " and " +
                                       std::to_string(b.size()) + " differ");
  }
  const double na = a.cast<double>().norm();
  const double nb = b.cast<double>().norm();
  if (na == 0.0 || nb == 0.0) fail(ErrorCategory::UndefinedSimilarity, "cosine of a zero vector");
  const double c = a.cast<double>().dot(b.cast<double>()) / (na * nb);
  return std::clamp(c, -1.0, 1.0);
}

double cosine(const SentenceEmbedding& a, const SentenceEmbedding& b) {
  return cosine(a.values, b.values);
}

void EncoderConfig::validate() const {
  if (vocab < 1) fail(ErrorCategory::Config, "encoder vocab must be positive");
  if (layers < 0) fail(ErrorCategory::Config, "enc_layers must be >= 0");
  if (width < 1 || embed_dim < 1 || ffn < 1) {
    fail(ErrorCategory::Config, "encoder widths must be positive");
  }
  if (heads < 1 || width % heads != 0) {
    fail(ErrorCategory::Config, "enc_heads must divide enc_width");
  }
  if (dropout < 0.0f || dropout >= 1.0f) fail(ErrorCategory::Config, "dropout must lie in [0,1)");
}

TeacherAnchor::TeacherAnchor(int num_concepts, int dim, std::uint64_t seed)
    : projection_(dim, num_concepts) {
  std::mt19937_64 rng(derive_seed(seed, {0xA7}));
  std::normal_distribution<float> dist(0.0f, 1.0f);
  for (Index i = 0; i < projection_.size(); ++i) projection_.data()[i] = dist(rng);
}

RowVector TeacherAnchor::operator()(const ConceptSentence& sentence) const {
  if (sentence.concepts.empty()) fail(ErrorCategory::EmptyInput, "anchor of an empty sentence");
  Eigen::VectorXf counts = Eigen::VectorXf::Zero(projection_.cols());
  for (int c : sentence.concepts) {
    if (c < 0 || c >= projection_.cols()) {
      fail(ErrorCategory::Index, "anchor: concept " + std::to_string(c) + " out of range");
    }
    counts(c) += 1.0f;
  }
  RowVector v = (projection_ * counts).transpose();
  const float n = v.norm();
  if (n == 0.0f) fail(ErrorCategory::Numeric, "anchor projected to the zero vector");
  return v / n;
}

SentenceEncoder::SentenceEncoder(EncoderConfig config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(derive_seed(seed, {0xE1}));
  embedding_ = gaussian(config_.vocab, config_.width, 1.0f / std::sqrt(static_cast<float>(config_.width)), rng);
  for (int i = 0; i < config_.layers; ++i) {
    blocks_.emplace_back(config_.width, config_.heads, config_.ffn, rng);
  }
  final_norm_ = LayerNorm(config_.width);
  projection_ = Linear(config_.width, config_.embed_dim, rng);
}

void SentenceEncoder::check(const UnitSequence& units) const {
  if (units.empty()) fail(ErrorCategory::EmptyInput, "encode: empty unit sequence");
  for (int u : units) {
    if (u < 0 || u >= config_.vocab) {
      fail(ErrorCategory::Index, "encode: unit " + std::to_string(u) + " outside vocabulary of " +
                                     std::to_string(config_.vocab));
    }
  }
}

Tensor SentenceEncoder::forward(std::span<const UnitSequence> batch,
                                std::mt19937_64* dropout_rng) const {
  if (batch.empty()) fail(ErrorCategory::EmptyInput, "encoder forward on an empty batch");
  std::vector<int> ids;
  std::vector<Index> lengths;
  for (const auto& seq : batch) {
    check(seq);
    ids.insert(ids.end(), seq.begin(), seq.end());
    lengths.push_back(static_cast<Index>(seq.size()));
  }
  const auto segs = pack_segments(lengths);
  Tensor x = scale(embedding_lookup(embedding_, ids), std::sqrt(static_cast<float>(config_.width)));
  if (!blocks_.empty()) {
    x = add_positions(x, segs);
    for (const auto& block : blocks_) {
      if (dropout_rng) x = dropout(x, config_.dropout, *dropout_rng);
      x = block(x, segs);
    }
    x = final_norm_(x);
  }
  const Tensor pooled = max_pool_segments(x, segs);
  return l2_normalize_rows(projection_(pooled));
}

SentenceEmbedding SentenceEncoder::encode(const UnitSequence& units) const {
  const std::vector<UnitSequence> one{units};
  auto all = encode_all(one, 1);
  return std::move(all.front());
}

std::vector<SentenceEmbedding> SentenceEncoder::encode_all(std::span<const UnitSequence> seqs,
                                                           std::size_t batch) const {
  NoTapeScope no_tape;
  std::vector<SentenceEmbedding> out;
  out.reserve(seqs.size());
  for (std::size_t i = 0; i < seqs.size(); i += batch) {
    const auto n = std::min(batch, seqs.size() - i);
    Tensor e = forward(seqs.subspan(i, n));
    for (Index r = 0; r < e.rows(); ++r) out.push_back({e.value().row(r), {}});
  }
  return out;
}

NamedParams SentenceEncoder::named_parameters() const {
  NamedParams out;
  out.emplace_back("encoder.embedding", embedding_);
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    blocks_[i].collect("encoder.block" + std::to_string(i), out);
  }
  final_norm_.collect("encoder.final_norm", out);
  projection_.collect("encoder.projection", out);
  return out;
}

void SentenceEncoder::freeze() {
  for (auto& [name, t] : named_parameters()) t.set_requires_grad(false);
  frozen_ = true;
}

EncoderTrainReport train_encoder(SentenceEncoder& model, const Corpus& corpus,
                                 const EncoderTrainConfig& config, Adam* optimizer) {
  if (corpus.languages.size() < 2) {
    fail(ErrorCategory::Contract, "encoder training needs at least two languages");
  }
  if (model.frozen()) fail(ErrorCategory::Usage, "cannot train a frozen encoder");
  if (config.batch_size < 1 || config.epochs < 0) {
    fail(ErrorCategory::Config, "encoder batch size and epochs must be positive");
  }
  const TeacherAnchor anchor(corpus.num_concepts(), model.config().embed_dim, config.anchor_seed);

  std::vector<const UnitSequence*> seqs;
  std::vector<RowVector> targets;
  for (const auto& r : corpus.train) {
    const auto& lang = corpus.language(r.lang);
    seqs.push_back(&r.units);
    targets.push_back(anchor(recover_concepts(r.units, lang, corpus.num_concepts())));
  }
  if (seqs.empty()) fail(ErrorCategory::EmptyInput, "encoder training corpus is empty");

  std::unique_ptr<Adam> owned;
  if (!optimizer) {
    owned = std::make_unique<Adam>(tensors_of(model.named_parameters()), config.adam);
    optimizer = owned.get();
  }

  EncoderTrainReport report;
  std::vector<std::size_t> order(seqs.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 dropout_rng(derive_seed(config.seed, {0xD0}));
  const auto bs = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::mt19937_64 shuffle_rng(derive_seed(config.seed, {0x5F, static_cast<std::uint64_t>(epoch)}));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t n = std::min(bs, order.size() - start);
      std::vector<UnitSequence> batch;
      Matrix target(static_cast<Index>(n), model.config().embed_dim);
      for (std::size_t i = 0; i < n; ++i) {
        batch.push_back(*seqs[order[start + i]]);
        target.row(static_cast<Index>(i)) = targets[order[start + i]];
      }
      Tape tape;
      TapeScope scope(tape);
      const Tensor pred = model.forward(batch, model.config().dropout > 0 ? &dropout_rng : nullptr);
      const Tensor loss = mse(pred, target);
      const double value = loss.item();
      if (!std::isfinite(value)) {
        fail(ErrorCategory::Training,
             "encoder loss diverged at step " + std::to_string(optimizer->steps() + 1));
      }
      if (report.steps == 0 && epoch == 0) report.initial_loss = value;
      backward(loss);
      optimizer->step();
      optimizer->zero_grad();
      ++report.steps;
      total += value;
      ++batches;
    }
    report.epoch_loss.push_back(total / static_cast<double>(batches));
    if (config.on_epoch) config.on_epoch(epoch, report.epoch_loss.back());
  }
  return report;
}

}  // namespace unitrans
