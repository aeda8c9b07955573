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

// unitrans command line: corpus generation, two-phase training, translation,
// evaluation, ablation and embedding export.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "unitrans/error.hpp"
#include "unitrans/pipeline.hpp"

using namespace unitrans;

namespace {

enum ExitCode : int {
  kOk = 0,
  kUsage = 2,
  kConfig = 3,
  kIo = 4,
  kCheckpoint = 5,
  kData = 6,
  kTraining = 7,
  kInternal = 8,
};

int exit_code(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::Usage: return kUsage;
    case ErrorCategory::Config: return kConfig;
    case ErrorCategory::Io: return kIo;
    case ErrorCategory::Checkpoint: return kCheckpoint;
    case ErrorCategory::Contract:
    case ErrorCategory::Parse:
    case ErrorCategory::EmptyInput:
    case ErrorCategory::Index: return kData;
    case ErrorCategory::Training:
    case ErrorCategory::Numeric:
    case ErrorCategory::StaleGradient: return kTraining;
    default: return kInternal;
  }
}

std::string one_line(std::string s) {
  std::string out;
  for (char ch : s) {
    if (ch == '\n' || ch == '\r') {
      out += ' ';
    } else if (ch == '"' || ch == '\\') {
      out += '\\';
      out += ch;
    } else {
      out += ch;
    }
  }
  return out;
}

int report(std::string_view category, int code, const std::string& message) {
  std::cerr << "unitrans: error category=" << category << " code=" << code << " message=\""
            << one_line(message) << "\"" << std::endl;
  return code;
}

struct Overrides {
  std::string config_file;
  std::optional<std::uint64_t> seed;
  std::optional<int> n_sub;
  bool no_semantic_encoder = false;
  std::vector<std::string> target_langs;
  std::vector<std::string> sets;

  void attach(CLI::App* cmd, bool with_target) {
    cmd->add_option("--config", config_file, "key=value config file")->check(CLI::ExistingFile);
    cmd->add_option("--seed", seed, "model and training seed");
    cmd->add_option("--n-sub", n_sub, "number of sub-embedding frames");
    cmd->add_flag("--no-semantic-encoder", no_semantic_encoder, "replace the convolutional refiner by a linear map");
    cmd->add_option("--set", sets, "extra key=value override, repeatable");
    if (with_target) {
      cmd->add_option("--target-lang", target_langs, "target language(s), comma separated")->delimiter(',');
    }
  }

  ExperimentConfig resolve() const {
    ExperimentConfig c;
    if (!config_file.empty()) {
      try {
        c.apply(KeyValues::parse(read_text_file(config_file)));
      } catch (const Error& e) {
        if (e.category() == ErrorCategory::Parse) fail(ErrorCategory::Config, config_file + ": " + e.what());
        throw;
      }
    }
    KeyValues kv;
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos || eq == 0) fail(ErrorCategory::Usage, "--set expects key=value, got '" + s + "'");
      kv.set(s.substr(0, eq), s.substr(eq + 1));
    }
    if (seed) kv.set("seed", std::to_string(*seed));
    if (n_sub) kv.set("n_sub", std::to_string(*n_sub));
    if (no_semantic_encoder) kv.set("semantic_encoder", "false");
    if (!target_langs.empty()) {
      std::string joined;
      for (const auto& t : target_langs) joined += (joined.empty() ? "" : ",") + t;
      kv.set("target_langs", joined);
    }
    c.apply(kv);
    c.validate();
    return c;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"unitrans: sentence-embedding based unit translation at desk scale"};
  app.require_subcommand(1);

  Overrides ov;
  std::string out, corpus, encoder, translator, input, pairs, target;

  auto* gen = app.add_subcommand("gen-corpus", "generate the synthetic multilingual corpus");
  ov.attach(gen, false);
  gen->add_option("--out", out, "output directory")->required();

  auto* tenc = app.add_subcommand("train-encoder", "train the language-agnostic sentence encoder");
  ov.attach(tenc, false);
  tenc->add_option("--corpus", corpus, "corpus directory")->required()->check(CLI::ExistingDirectory);
  tenc->add_option("--out", out, "output directory")->required();

  auto* ttr = app.add_subcommand("train-translator", "train the decoder on monolingual target data");
  ov.attach(ttr, true);
  ttr->add_option("--corpus", corpus, "corpus directory")->required()->check(CLI::ExistingDirectory);
  ttr->add_option("--encoder", encoder, "encoder checkpoint")->required();
  ttr->add_option("--out", out, "output directory")->required();

  auto* tra = app.add_subcommand("translate", "translate unit sequences");
  tra->add_option("--translator", translator, "translator checkpoint")->required();
  tra->add_option("--encoder", encoder, "encoder checkpoint")->required();
  tra->add_option("--input", input, "one unit sequence per line")->required();
  tra->add_option("--target-lang", target, "output language")->required();
  tra->add_option("--out", out, "output file")->required();

  auto* ev = app.add_subcommand("evaluate", "score a translator on held-out pairs");
  ev->add_option("--translator", translator, "translator checkpoint")->required();
  ev->add_option("--encoder", encoder, "encoder checkpoint")->required();
  ev->add_option("--pairs", pairs, "eval_pairs.tsv")->required();
  ev->add_option("--out", out, "output directory")->required();

  auto* abl = app.add_subcommand("ablate", "sweep N_sub and the semantic encoder");
  ov.attach(abl, true);
  abl->add_option("--corpus", corpus, "corpus directory")->required()->check(CLI::ExistingDirectory);
  abl->add_option("--encoder", encoder, "encoder checkpoint; trained from scratch when omitted");
  abl->add_option("--out", out, "output directory")->required();

  auto* exp = app.add_subcommand("export-embeddings", "write held-out embeddings and a 2-D projection");
  exp->add_option("--encoder", encoder, "encoder checkpoint")->required();
  exp->add_option("--corpus", corpus, "corpus directory")->required()->check(CLI::ExistingDirectory);
  exp->add_option("--out", out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report("usage", kUsage, e.what());
  }

  try {
    if (*gen) {
      std::cout << cmd_gen_corpus(ov.resolve(), out).string() << std::endl;
    } else if (*tenc) {
      std::cout << cmd_train_encoder(ov.resolve(), corpus, out, &std::cerr).dump() << std::endl;
    } else if (*ttr) {
      std::cout << cmd_train_translator(ov.resolve(), corpus, encoder, out, &std::cerr).dump() << std::endl;
    } else if (*tra) {
      std::cout << cmd_translate(translator, encoder, input, target, out).string() << std::endl;
    } else if (*ev) {
      std::cout << cmd_evaluate(translator, encoder, pairs, out).dump() << std::endl;
    } else if (*abl) {
      std::cout << cmd_ablate(ov.resolve(), corpus, out, encoder, &std::cerr).dump() << std::endl;
    } else if (*exp) {
      std::cout << cmd_export_embeddings(encoder, corpus, out).dump() << std::endl;
    }
  } catch (const Error& e) {
    return report(category_name(e.category()), exit_code(e.category()), e.what());
  } catch (const std::exception& e) {
    return report("internal", kInternal, e.what());
  }
  return kOk;
}
