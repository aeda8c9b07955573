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
#include <vector>

#include "unitrans/numerics/tensor.hpp"

namespace unitrans {

/// Linear warmup from `initial` to `peak` over `warmup_steps`, then inverse
/// square-root decay anchored so that rate(warmup_steps) == peak.
struct LrSchedule {
  double initial = 1e-7;
  double peak = 5e-4;
  std::int64_t warmup_steps = 200;

  void validate() const;
  double rate(std::int64_t step) const;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-8;
  /// Global-norm clipping threshold; <= 0 disables.
  double clip_norm = 0.0;
  LrSchedule schedule;
};

/// Adam with bias correction. Owns first/second moments for a fixed list of
/// parameters. A parameter whose gradient was not written since the previous
/// update is skipped; if none was written the step is rejected as stale.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig config);

  void step();
  void zero_grad();

  std::int64_t steps() const { return step_; }
  void set_steps(std::int64_t t) { step_ = t; }
  const AdamConfig& config() const { return config_; }
  double current_rate() const { return config_.schedule.rate(step_); }

  const std::vector<Tensor>& params() const { return params_; }
  std::vector<Matrix>& first_moments() { return m_; }
  std::vector<Matrix>& second_moments() { return v_; }
  const std::vector<Matrix>& first_moments() const { return m_; }
  const std::vector<Matrix>& second_moments() const { return v_; }

 private:
  std::vector<Tensor> params_;
  AdamConfig config_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  std::int64_t step_ = 0;
  std::uint64_t consumed_version_ = 0;
};

}  // namespace unitrans
