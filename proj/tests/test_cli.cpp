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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kWork = fs::temp_directory_path() / "unitrans_cli_test";

struct Run {
  int code = -1;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Run run(const std::string& args) {
  const fs::path err = kWork / "stderr.txt";
  const std::string cmd = std::string(UNITRANS_CLI) + " " + args + " >/dev/null 2>" + err.string();
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = slurp(err);
  return r;
}

// Small enough to train in seconds.
void write_tiny_config(const fs::path& path) {
  std::ofstream out(path);
  out << "# tiny end-to-end run\n"
         "train_per_language=60\n"
         "eval_sentences=40\n"
         "enc_width=32\n"
         "enc_ffn=64\n"
         "embed_dim=16\n"
         "enc_epochs=1\n"
         "dec_model_dim=32\n"
         "dec_layers=1\n"
         "dec_ffn=64\n"
         "dec_epochs=1\n"
         "n_sub=4\n"
         "eval_pairs=40\n"
         "ablate_n_sub=1,4\n";
}

bool single_error_line(const std::string& err, int code, const std::string& category) {
  static const std::regex line(R"(unitrans: error category=([a-z-]+) code=(\d+) message="[^\n]*"\n)");
  std::smatch m;
  return std::regex_match(err, m, line) && m[1] == category && std::stoi(m[2]) == code;
}

struct Workspace {
  Workspace() {
    fs::remove_all(kWork);
    fs::create_directories(kWork);
    write_tiny_config(kWork / "tiny.cfg");
  }
};

}  // namespace

TEST_CASE("end-to-end pipeline through every subcommand") {
  Workspace ws;
  const std::string cfg = "--config " + (kWork / "tiny.cfg").string();
  const fs::path corpus = kWork / "corpus";
  REQUIRE(run("gen-corpus " + cfg + " --out " + corpus.string()).code == 0);
  CHECK(fs::exists(corpus / "train.tsv"));
  CHECK(fs::exists(corpus / "eval_pairs.tsv"));

  const fs::path enc = kWork / "enc";
  REQUIRE(run("train-encoder " + cfg + " --corpus " + corpus.string() + " --out " + enc.string()).code == 0);
  const json enc_manifest = json::parse(slurp(enc / "manifest.json"));
  CHECK(enc_manifest.at("command") == "train-encoder");
  CHECK(enc_manifest.at("config").at("embed_dim") == "16");

  const fs::path tr = kWork / "tr";
  REQUIRE(run("train-translator " + cfg + " --seed 5 --corpus " + corpus.string() + " --encoder " +
              (enc / "encoder.ckpt").string() + " --target-lang en,es --out " + tr.string())
              .code == 0);
  const json tr_manifest = json::parse(slurp(tr / "manifest.json"));
  CHECK(tr_manifest.at("config").at("seed") == "5");
  CHECK(tr_manifest.at("config").at("target_langs") == "en,es");
  const json metrics = json::parse(slurp(tr / "metrics.json"));
  CHECK(metrics.contains("targets"));

  {
    std::ofstream in(kWork / "input.txt");
    in << "200 200 201 230\n" << "250 251 251\n";
  }
  REQUIRE(run("translate --translator " + (tr / "translator.ckpt").string() + " --encoder " +
              (enc / "encoder.ckpt").string() + " --input " + (kWork / "input.txt").string() +
              " --target-lang en --out " + (kWork / "out.txt").string())
              .code == 0);
  const std::string translated = slurp(kWork / "out.txt");
  CHECK(std::count(translated.begin(), translated.end(), '\n') == 2);

  const fs::path ev = kWork / "eval";
  REQUIRE(run("evaluate --translator " + (tr / "translator.ckpt").string() + " --encoder " +
              (enc / "encoder.ckpt").string() + " --pairs " + (corpus / "eval_pairs.tsv").string() +
              " --out " + ev.string())
              .code == 0);
  const json em = json::parse(slurp(ev / "metrics.json"));
  for (const char* k : {"bleu", "similarity", "purity"}) CHECK(em.contains(k));

  const fs::path ab = kWork / "ablate";
  REQUIRE(run("ablate " + cfg + " --corpus " + corpus.string() + " --encoder " + (enc / "encoder.ckpt").string() +
              " --out " + ab.string())
              .code == 0);
  const json table = json::parse(slurp(ab / "ablation.json"));
  CHECK(table.at("summary").size() == 3);  // N_sub 1, N_sub 4, without semantic encoder
  CHECK(fs::exists(ab / "ablation.csv"));

  const fs::path ex = kWork / "export";
  REQUIRE(run("export-embeddings --encoder " + (enc / "encoder.ckpt").string() + " --corpus " +
              corpus.string() + " --out " + ex.string())
              .code == 0);
  CHECK(fs::exists(ex / "embeddings.csv"));
  CHECK(fs::exists(ex / "projection.csv"));

  {  // a translator cannot be asked for an untrained target language
    const Run r = run("translate --translator " + (tr / "translator.ckpt").string() + " --encoder " +
                      (enc / "encoder.ckpt").string() + " --input " + (kWork / "input.txt").string() +
                      " --target-lang fr --out " + (kWork / "out2.txt").string());
    CHECK(r.code == 3);
    CHECK(single_error_line(r.err, 3, "config"));
  }
  {  // an encoder checkpoint is not a translator
    const Run r = run("evaluate --translator " + (enc / "encoder.ckpt").string() + " --encoder " +
                      (enc / "encoder.ckpt").string() + " --pairs " + (corpus / "eval_pairs.tsv").string() +
                      " --out " + (kWork / "ev2").string());
    CHECK(r.code == 5);
    CHECK(single_error_line(r.err, 5, "checkpoint"));
  }
}

TEST_CASE("errors map to distinct exit codes with one machine-readable line") {
  Workspace ws;
  {
    const Run r = run("");
    CHECK(r.code == 2);
    CHECK(single_error_line(r.err, 2, "usage"));
  }
  {
    const Run r = run("gen-corpus --bogus --out " + (kWork / "x").string());
    CHECK(r.code == 2);
    CHECK(single_error_line(r.err, 2, "usage"));
  }
  {
    std::ofstream(kWork / "bad.cfg") << "no_such_key=3\n";
    const Run r = run("gen-corpus --config " + (kWork / "bad.cfg").string() + " --out " + (kWork / "x").string());
    CHECK(r.code == 3);
    CHECK(single_error_line(r.err, 3, "config"));
    CHECK(r.err.find("no_such_key") != std::string::npos);
  }
  {
    std::ofstream(kWork / "syntax.cfg") << "just words\n";
    const Run r = run("gen-corpus --config " + (kWork / "syntax.cfg").string() + " --out " + (kWork / "x").string());
    CHECK(r.code == 3);
  }
  {
    const Run r = run("gen-corpus --n-sub 7 --out " + (kWork / "x").string());
    CHECK(r.code == 3);
    CHECK(r.err.find("n_sub") != std::string::npos);
  }
  {
    std::ofstream(kWork / "junk.ckpt") << "not a checkpoint";
    std::ofstream(kWork / "in.txt") << "1 2 3\n";
    const Run r = run("translate --translator " + (kWork / "junk.ckpt").string() + " --encoder " +
                      (kWork / "junk.ckpt").string() + " --input " + (kWork / "in.txt").string() +
                      " --target-lang en --out " + (kWork / "o.txt").string());
    CHECK(r.code == 5);
    CHECK(single_error_line(r.err, 5, "checkpoint"));
  }
  {
    const fs::path corpus = kWork / "c";
    fs::create_directories(corpus);
    const Run r = run("train-encoder --corpus " + corpus.string() + " --out " + (kWork / "e").string());
    CHECK(r.code == 4);
    CHECK(single_error_line(r.err, 4, "io"));
  }
  {
    const fs::path corpus = kWork / "d";
    fs::create_directories(corpus);
    REQUIRE(run("gen-corpus --set train_per_language=5 --set eval_sentences=2 --out " + corpus.string()).code == 0);
    std::ofstream(corpus / "train.tsv", std::ios::app) << "en\t1 2\tes\t200\n";
    const Run r = run("train-encoder --corpus " + corpus.string() + " --out " + (kWork / "e2").string());
    CHECK(r.code == 6);
    CHECK(single_error_line(r.err, 6, "contract"));
  }
}
