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

#include "unitrans/config.hpp"

#include <algorithm>
#include <charconv>
#include <functional>
#include <set>

#include "unitrans/error.hpp"

namespace unitrans {

namespace {

std::string fmt(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

template <typename T>
std::string fmt_int(T v) {
  return std::to_string(v);
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
  return out;
}

std::string join_ints(const std::vector<int>& items) {
  std::vector<std::string> s;
  for (int v : items) s.push_back(std::to_string(v));
  return join(s);
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "1" || text == "true") return true;
  if (text == "0" || text == "false") return false;
  fail(ErrorCategory::Config, key + ": expected true/false, got '" + text + "'");
}

void require(bool ok, const std::string& key, const std::string& what) {
  if (!ok) fail(ErrorCategory::Config, key + ": " + what);
}

struct Field {
  const char* key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const KeyValues&)> set;
};

#define UT_INT(name, member)                                                             \
  Field {                                                                                \
    name, [](const ExperimentConfig& c) { return fmt_int(c.member); },                  \
        [](ExperimentConfig& c, const KeyValues& kv) { c.member = kv.get_int(name); }   \
  }
#define UT_I64(name, member)                                                             \
  Field {                                                                                \
    name, [](const ExperimentConfig& c) { return fmt_int(c.member); },                  \
        [](ExperimentConfig& c, const KeyValues& kv) { c.member = kv.get_i64(name); }   \
  }
#define UT_U64(name, member)                                                             \
  Field {                                                                                \
    name, [](const ExperimentConfig& c) { return fmt_int(c.member); },                  \
        [](ExperimentConfig& c, const KeyValues& kv) { c.member = kv.get_u64(name); }   \
  }
#define UT_REAL(name, member)                                                            \
  Field {                                                                                \
    name, [](const ExperimentConfig& c) { return fmt(static_cast<double>(c.member)); }, \
        [](ExperimentConfig& c, const KeyValues& kv) {                                   \
          c.member = static_cast<decltype(c.member)>(kv.get_double(name));             \
        }                                                                                \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      UT_U64("seed", seed),
      UT_U64("corpus_seed", corpus.seed),
      UT_INT("num_concepts", corpus.grammar.num_concepts),
      UT_INT("min_length", corpus.grammar.min_length),
      UT_INT("max_length", corpus.grammar.max_length),
      UT_INT("branching", corpus.grammar.branching),
      UT_INT("units_per_concept", corpus.units_per_concept),
      Field{"languages", [](const ExperimentConfig& c) { return join(c.corpus.languages); },
            [](ExperimentConfig& c, const KeyValues& kv) {
              c.corpus.languages = split_list(kv.get("languages"));
            }},
      UT_I64("train_per_language", corpus.train_per_language),
      UT_I64("eval_sentences", corpus.eval_sentences),
      UT_INT("enc_layers", encoder.layers),
      UT_INT("enc_width", encoder.width),
      UT_INT("embed_dim", encoder.embed_dim),
      UT_INT("enc_heads", encoder.heads),
      UT_INT("enc_ffn", encoder.ffn),
      UT_REAL("enc_dropout", encoder.dropout),
      UT_INT("enc_epochs", enc_epochs),
      UT_INT("enc_batch_size", enc_batch_size),
      UT_REAL("enc_lr", enc_lr),
      UT_I64("enc_warmup", enc_warmup),
      UT_U64("anchor_seed", anchor_seed),
      UT_INT("n_sub", translator.n_sub),
      Field{"semantic_encoder",
            [](const ExperimentConfig& c) { return std::string(c.translator.semantic_encoder ? "true" : "false"); },
            [](ExperimentConfig& c, const KeyValues& kv) {
              c.translator.semantic_encoder = parse_bool("semantic_encoder", kv.get("semantic_encoder"));
            }},
      UT_INT("conv_taps", translator.conv_taps),
      UT_INT("dec_model_dim", translator.model_dim),
      UT_INT("dec_layers", translator.layers),
      UT_INT("dec_heads", translator.heads),
      UT_INT("dec_ffn", translator.ffn),
      UT_REAL("dec_dropout", translator.dropout),
      Field{"target_langs", [](const ExperimentConfig& c) { return join(c.translator.target_languages); },
            [](ExperimentConfig& c, const KeyValues& kv) {
              c.translator.target_languages = split_list(kv.get("target_langs"));
            }},
      UT_INT("max_decode_length", max_decode_length),
      UT_INT("dec_epochs", dec_epochs),
      UT_INT("dec_batch_size", dec_batch_size),
      UT_REAL("dec_lr", dec_lr),
      UT_I64("dec_warmup", dec_warmup),
      UT_REAL("label_smoothing", label_smoothing),
      UT_REAL("duration_weight", duration_weight),
      UT_REAL("lr_initial", lr_initial),
      UT_REAL("adam_beta1", adam_beta1),
      UT_REAL("adam_beta2", adam_beta2),
      UT_REAL("adam_eps", adam_eps),
      UT_REAL("clip_norm", clip_norm),
      UT_INT("eval_pairs", eval_pairs),
      Field{"ablate_n_sub", [](const ExperimentConfig& c) { return join_ints(c.ablate_n_sub); },
            [](ExperimentConfig& c, const KeyValues& kv) {
              c.ablate_n_sub.clear();
              for (const auto& item : split_list(kv.get("ablate_n_sub"))) {
                int v = 0;
                auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
                if (ec != std::errc() || p != item.data() + item.size()) {
                  fail(ErrorCategory::Config, "ablate_n_sub: expected an integer, got '" + item + "'");
                }
                c.ablate_n_sub.push_back(v);
              }
            }},
      UT_INT("ablate_seeds", ablate_seeds),
  };
  return table;
}

#undef UT_INT
#undef UT_I64
#undef UT_U64
#undef UT_REAL

}  // namespace

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if (ch == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (ch != ' ' && ch != '\t') {
      cur += ch;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

ExperimentConfig::ExperimentConfig() {
  // Desk-scale decoder; see README for the sizes used in acceptance.
  translator.model_dim = 64;
  translator.layers = 2;
  translator.ffn = 256;
  sync();
}

void ExperimentConfig::apply(const KeyValues& kv) {
  for (const auto& [key, value] : kv.entries()) {
    const auto& table = fields();
    auto it = std::find_if(table.begin(), table.end(),
                           [&](const Field& f) { return key == f.key; });
    if (it == table.end()) fail(ErrorCategory::Config, "unknown config key '" + key + "'");
    it->set(*this, kv);
  }
  sync();
}

KeyValues ExperimentConfig::to_key_values() const {
  KeyValues kv;
  for (const auto& f : fields()) kv.set(f.key, f.get(*this));
  return kv;
}

ExperimentConfig ExperimentConfig::from_string(const std::string& text) {
  ExperimentConfig c;
  c.apply(KeyValues::parse(text));
  return c;
}

void ExperimentConfig::sync() {
  const int total = corpus.grammar.num_concepts * corpus.units_per_concept *
                    static_cast<int>(corpus.languages.size());
  encoder.vocab = std::max(total, 1);
  translator.total_units = std::max(total, 1);
  translator.embed_dim = encoder.embed_dim;
  translator.max_decode_length = max_decode_length > 0
                                     ? max_decode_length
                                     : 4 * corpus.grammar.max_length * corpus.units_per_concept;
}

void ExperimentConfig::validate() const {
  require(corpus.grammar.num_concepts >= 2, "num_concepts", "must be >= 2");
  require(corpus.grammar.min_length >= 1 && corpus.grammar.min_length <= corpus.grammar.max_length,
          "min_length", "must lie in [1, max_length]");
  require(corpus.grammar.branching >= 0 && corpus.grammar.branching < corpus.grammar.num_concepts,
          "branching", "must lie in [0, num_concepts)");
  require(corpus.units_per_concept >= 1, "units_per_concept", "must be >= 1");
  require(corpus.languages.size() >= 2, "languages", "at least two languages are required");
  require(std::set<std::string>(corpus.languages.begin(), corpus.languages.end()).size() ==
              corpus.languages.size(),
          "languages", "duplicate language id");
  require(corpus.train_per_language >= 1, "train_per_language", "must be >= 1");
  require(corpus.eval_sentences >= 1, "eval_sentences", "must be >= 1");

  require(encoder.layers >= 0, "enc_layers", "must be >= 0");
  require(encoder.width >= 1, "enc_width", "must be positive");
  require(encoder.embed_dim >= 1, "embed_dim", "must be positive");
  require(encoder.ffn >= 1, "enc_ffn", "must be positive");
  require(encoder.heads >= 1 && encoder.width % encoder.heads == 0, "enc_heads",
          "must divide enc_width=" + std::to_string(encoder.width));
  require(encoder.dropout >= 0.0f && encoder.dropout < 1.0f, "enc_dropout", "must lie in [0,1)");
  require(enc_epochs >= 1, "enc_epochs", "must be >= 1");
  require(enc_batch_size >= 1, "enc_batch_size", "must be >= 1");
  require(enc_lr > 0.0, "enc_lr", "must be positive");
  require(enc_warmup >= 1, "enc_warmup", "must be >= 1");

  require(translator.n_sub >= 1 && encoder.embed_dim % translator.n_sub == 0, "n_sub",
          std::to_string(translator.n_sub) + " does not divide embed_dim=" +
              std::to_string(encoder.embed_dim));
  require(translator.conv_taps >= 1 && translator.conv_taps % 2 == 1, "conv_taps", "must be odd");
  require(translator.model_dim >= 1, "dec_model_dim", "must be positive");
  require(translator.layers >= 1, "dec_layers", "must be >= 1");
  require(translator.ffn >= 1, "dec_ffn", "must be positive");
  require(translator.heads >= 1 && translator.model_dim % translator.heads == 0, "dec_heads",
          "must divide dec_model_dim=" + std::to_string(translator.model_dim));
  require(translator.dropout >= 0.0f && translator.dropout < 1.0f, "dec_dropout", "must lie in [0,1)");
  require(!translator.target_languages.empty(), "target_langs", "must not be empty");
  require(std::set<std::string>(translator.target_languages.begin(), translator.target_languages.end())
                  .size() == translator.target_languages.size(),
          "target_langs", "contains duplicates");
  for (const auto& l : translator.target_languages) {
    require(std::find(corpus.languages.begin(), corpus.languages.end(), l) != corpus.languages.end(),
            "target_langs", "language '" + l + "' is not in languages");
  }
  require(max_decode_length >= 0, "max_decode_length", "must be >= 0 (0 derives it from max_length)");
  require(dec_epochs >= 1, "dec_epochs", "must be >= 1");
  require(dec_batch_size >= 1, "dec_batch_size", "must be >= 1");
  require(dec_lr > 0.0, "dec_lr", "must be positive");
  require(dec_warmup >= 1, "dec_warmup", "must be >= 1");
  require(label_smoothing >= 0.0 && label_smoothing < 1.0, "label_smoothing", "must lie in [0,1)");
  require(duration_weight >= 0.0, "duration_weight", "must be >= 0");

  require(lr_initial >= 0.0, "lr_initial", "must be >= 0");
  require(adam_beta1 >= 0.0 && adam_beta1 < 1.0, "adam_beta1", "must lie in [0,1)");
  require(adam_beta2 >= 0.0 && adam_beta2 < 1.0, "adam_beta2", "must lie in [0,1)");
  require(adam_eps > 0.0, "adam_eps", "must be positive");
  require(clip_norm >= 0.0, "clip_norm", "must be >= 0");

  require(eval_pairs >= 1, "eval_pairs", "must be >= 1");
  require(!ablate_n_sub.empty(), "ablate_n_sub", "must not be empty");
  for (int n : ablate_n_sub) {
    require(n >= 1 && encoder.embed_dim % n == 0, "ablate_n_sub",
            std::to_string(n) + " does not divide embed_dim=" + std::to_string(encoder.embed_dim));
  }
  require(ablate_seeds >= 1, "ablate_seeds", "must be >= 1");
}

EncoderTrainConfig ExperimentConfig::encoder_train() const {
  EncoderTrainConfig t;
  t.epochs = enc_epochs;
  t.batch_size = enc_batch_size;
  t.seed = derive_seed(seed, {0xE1});
  t.anchor_seed = anchor_seed;
  t.adam = {adam_beta1, adam_beta2, adam_eps, clip_norm, {lr_initial, enc_lr, enc_warmup}};
  return t;
}

TranslatorTrainConfig ExperimentConfig::translator_train() const {
  TranslatorTrainConfig t;
  t.epochs = dec_epochs;
  t.batch_size = dec_batch_size;
  t.label_smoothing = static_cast<float>(label_smoothing);
  t.duration_weight = static_cast<float>(duration_weight);
  t.seed = derive_seed(seed, {0xD1});
  t.adam = {adam_beta1, adam_beta2, adam_eps, clip_norm, {lr_initial, dec_lr, dec_warmup}};
  return t;
}

std::uint64_t ExperimentConfig::encoder_init_seed() const { return derive_seed(seed, {0xE0}); }
std::uint64_t ExperimentConfig::translator_init_seed() const { return derive_seed(seed, {0xD0}); }

}  // namespace unitrans
