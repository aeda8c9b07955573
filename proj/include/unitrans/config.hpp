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
#include <string>
#include <vector>

#include "unitrans/encoder.hpp"
#include "unitrans/kvfile.hpp"
#include "unitrans/synthlang.hpp"
#include "unitrans/translator.hpp"

namespace unitrans {

/// Every tunable of an experiment. Serializes to flat key=value text; keys are
/// listed in the README.
struct ExperimentConfig {
  std::uint64_t seed = 1;  // model initialization and training order

  CorpusConfig corpus;

  EncoderConfig encoder;
  int enc_epochs = 3;
  int enc_batch_size = 32;
  double enc_lr = 5e-4;
  std::int64_t enc_warmup = 200;
  std::uint64_t anchor_seed = 7;

  TranslatorConfig translator;
  int dec_epochs = 20;
  int dec_batch_size = 32;
  double dec_lr = 1e-3;
  std::int64_t dec_warmup = 200;
  double label_smoothing = 0.2;
  double duration_weight = 0.1;
  int max_decode_length = 0;  // 0: four times the longest reduced training sequence

  double lr_initial = 1e-7;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.98;
  double adam_eps = 1e-8;
  double clip_norm = 0.0;

  int eval_pairs = 500;
  std::vector<int> ablate_n_sub{1, 16};
  int ablate_seeds = 1;

  ExperimentConfig();

  /// Applies `key=value` overrides on top of the current values. Unknown keys
  /// are rejected.
  void apply(const KeyValues& kv);
  KeyValues to_key_values() const;
  std::string to_string() const { return to_key_values().to_string(); }
  static ExperimentConfig from_string(const std::string& text);

  /// Checks every cross-field invariant; errors name the offending key.
  void validate() const;

  /// Sizes derived from the corpus (vocabulary, embedding width) pushed into
  /// the component configs.
  void sync();

  EncoderTrainConfig encoder_train() const;
  TranslatorTrainConfig translator_train() const;
  std::uint64_t encoder_init_seed() const;
  std::uint64_t translator_init_seed() const;
};

std::vector<std::string> split_list(const std::string& text);

}  // namespace unitrans
