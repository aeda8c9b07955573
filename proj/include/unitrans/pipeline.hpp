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

#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "unitrans/checkpoint.hpp"
#include "unitrans/config.hpp"
#include "unitrans/evalkit.hpp"

namespace unitrans {

namespace fs = std::filesystem;
using nlohmann::json;

///////////////////////////////////////////
// Held-out selections
///////////////////////////////////////////

/// One cross-lingual pair per held-out sentence, cycling through directions.
std::vector<EvalPair> cross_lingual_pairs(const Corpus& corpus, std::size_t n);

/// One pair into `tgt` per held-out sentence, cycling through source languages.
std::vector<EvalPair> pairs_into(const Corpus& corpus, const std::string& tgt, std::size_t n);

///////////////////////////////////////////
// In-process training and evaluation
///////////////////////////////////////////

SentenceEncoder fit_encoder(const ExperimentConfig& config, const Corpus& corpus,
                            EncoderTrainReport* report = nullptr, std::ostream* log = nullptr);

/// Trains a translator on monolingual data of the configured target languages.
TranslatorModel fit_translator(const ExperimentConfig& config, const SentenceEncoder& encoder,
                               const Corpus& corpus, TranslatorTrainReport* report = nullptr,
                               std::ostream* log = nullptr);

struct TranslationEval {
  BleuReport bleu;                // on reduced unit sequences
  double similarity = 0.0;        // mean encoder cosine, empty outputs count as 0
  double purity = 0.0;            // fraction of emitted units inside the requested range
  double majority_match = 0.0;    // fraction of outputs whose majority language is the requested one
  std::size_t pairs = 0;
  std::size_t empty = 0;
  std::size_t truncated = 0;
  std::vector<UnitSequence> hypotheses;
};

TranslationEval evaluate_translation(const TranslatorModel& model, const SentenceEncoder& encoder,
                                     std::span<const SyntheticLanguage> languages, int num_concepts,
                                     std::span<const EvalPair> pairs);

/// Scores the identity mapping src -> tgt.
BleuReport copy_source_bleu(std::span<const EvalPair> pairs);

/// Reconstruction: each reference re-encoded and decoded in its own language.
BleuReport reconstruction_bleu(const TranslatorModel& model, const SentenceEncoder& encoder,
                               std::span<const EvalPair> pairs);

/// Frozen metrics schema: {bleu, similarity, purity} plus counts.
json metrics_json(const TranslationEval& e);

struct AblationRow {
  std::string variant;  // "n_sub=16", "w/o semantic encoder"
  int n_sub = 0;
  bool semantic_encoder = true;
  std::uint64_t seed = 0;
  double bleu = 0.0;
};

struct AblationSummary {
  std::string variant;
  int n_sub = 0;
  bool semantic_encoder = true;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation across seeds, 0 for one seed
  int seeds = 0;
};

struct AblationTable {
  std::vector<AblationRow> rows;
  std::vector<AblationSummary> summary;
  std::string csv() const;
  json to_json() const;
  const AblationSummary& find(int n_sub, bool semantic_encoder) const;
};

/// Sweeps N_sub (with the semantic encoder) and the default N_sub without it,
/// over `ablate_seeds` translator seeds. The encoder is shared.
AblationTable run_ablation(const ExperimentConfig& config, const SentenceEncoder& encoder,
                           const Corpus& corpus, std::ostream* log = nullptr);

///////////////////////////////////////////
// Checkpoint helpers
///////////////////////////////////////////

struct LoadedEncoder {
  ExperimentConfig config;
  std::unique_ptr<SentenceEncoder> model;
};

struct LoadedTranslator {
  ExperimentConfig config;
  std::unique_ptr<TranslatorModel> model;
};

LoadedEncoder load_encoder(const fs::path& path);
LoadedTranslator load_translator(const fs::path& path);

///////////////////////////////////////////
// Commands
///////////////////////////////////////////

/// Every command writes `manifest.json` into its output directory holding the
/// command name, the effective config and the produced artifacts.
fs::path cmd_gen_corpus(const ExperimentConfig& config, const fs::path& out_dir);
json cmd_train_encoder(const ExperimentConfig& config, const fs::path& corpus_dir,
                       const fs::path& out_dir, std::ostream* log = nullptr);
json cmd_train_translator(const ExperimentConfig& config, const fs::path& corpus_dir,
                          const fs::path& encoder_ckpt, const fs::path& out_dir,
                          std::ostream* log = nullptr);
/// Input: one space-separated unit sequence per line.
fs::path cmd_translate(const fs::path& translator_ckpt, const fs::path& encoder_ckpt,
                       const fs::path& input, const std::string& target_lang, const fs::path& out_file);
json cmd_evaluate(const fs::path& translator_ckpt, const fs::path& encoder_ckpt,
                  const fs::path& pairs_file, const fs::path& out_dir);
json cmd_ablate(const ExperimentConfig& config, const fs::path& corpus_dir, const fs::path& out_dir,
                const fs::path& encoder_ckpt = {}, std::ostream* log = nullptr);
json cmd_export_embeddings(const fs::path& encoder_ckpt, const fs::path& corpus_dir,
                           const fs::path& out_dir);

}  // namespace unitrans
