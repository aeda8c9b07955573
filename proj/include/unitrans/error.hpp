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

#include <stdexcept>
#include <string>
#include <string_view>

namespace unitrans {

enum class ErrorCategory {
  Dimension,
  Numeric,
  Index,
  Config,
  Usage,
  EmptyInput,
  StaleGradient,
  Invariant,
  UndefinedSimilarity,
  DegenerateProjection,
  Parse,
  Io,
  Checkpoint,
  Contract,
  Training,
};

constexpr std::string_view category_name(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::Dimension: return "dimension";
    case ErrorCategory::Numeric: return "numeric";
    case ErrorCategory::Index: return "index";
    case ErrorCategory::Config: return "config";
    case ErrorCategory::Usage: return "usage";
    case ErrorCategory::EmptyInput: return "empty-input";
    case ErrorCategory::StaleGradient: return "stale-gradient";
    case ErrorCategory::Invariant: return "invariant";
    case ErrorCategory::UndefinedSimilarity: return "undefined-similarity";
    case ErrorCategory::DegenerateProjection: return "degenerate-projection";
    case ErrorCategory::Parse: return "parse";
    case ErrorCategory::Io: return "io";
    case ErrorCategory::Checkpoint: return "checkpoint";
    case ErrorCategory::Contract: return "contract";
    case ErrorCategory::Training: return "training";
  }
  return "unknown";
}

/// Every failure raised by the library carries a category so the CLI can map
/// it onto a distinct exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& message)
      : std::runtime_error(message), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

[[noreturn]] inline void fail(ErrorCategory c, const std::string& message) {
  throw Error(c, message);
}

}  // namespace unitrans
