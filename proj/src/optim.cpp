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

#include "unitrans/numerics/optim.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace unitrans {

void LrSchedule::validate() const {
  if (warmup_steps <= 0) {
    fail(ErrorCategory::Config, "warmup_steps must be positive, got " +
                                    std::to_string(warmup_steps));
  }
  if (!(initial >= 0.0) || !(peak >= 0.0)) {
    fail(ErrorCategory::Config, "learning rates must be non-negative");
  }
}

double LrSchedule::rate(std::int64_t step) const {
  validate();
  if (step < 0) fail(ErrorCategory::Usage, "negative schedule step " + std::to_string(step));
  const double w = static_cast<double>(warmup_steps);
  const double t = static_cast<double>(step);
  if (step <= warmup_steps) return initial + (peak - initial) * (t / w);
  return peak * std::sqrt(w / t);
}

Adam::Adam(std::vector<Tensor> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  config_.schedule.validate();
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.push_back(Matrix::Zero(p.rows(), p.cols()));
    v_.push_back(Matrix::Zero(p.rows(), p.cols()));
  }
}

void Adam::step() {
  std::uint64_t newest = 0;
  for (const auto& p : params_) {
    if (p.has_grad()) newest = std::max(newest, p.grad_version());
  }
  if (newest <= consumed_version_) {
    fail(ErrorCategory::StaleGradient,
         "optimizer step without a fresh backward pass (step " + std::to_string(step_ + 1) + ")");
  }

  float clip = 1.0f;
  if (config_.clip_norm > 0.0) {
    double sq = 0.0;
    for (const auto& p : params_) {
      if (p.has_grad() && p.grad_version() > consumed_version_) sq += p.grad().squaredNorm();
    }
    const double norm = std::sqrt(sq);
    if (norm > config_.clip_norm) clip = static_cast<float>(config_.clip_norm / norm);
  }

  ++step_;
  const double lr = config_.schedule.rate(step_);
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
  const float b1 = static_cast<float>(config_.beta1);
  const float b2 = static_cast<float>(config_.beta2);
  const float step_size = static_cast<float>(lr / bc1);
  const float inv_bc2 = static_cast<float>(1.0 / bc2);
  const float eps = static_cast<float>(config_.eps);

  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    if (!p.has_grad() || p.grad_version() <= consumed_version_) continue;
    const auto g = (p.grad().array() * clip).eval();
    m_[i].array() = b1 * m_[i].array() + (1.0f - b1) * g;
    v_[i].array() = b2 * v_[i].array() + (1.0f - b2) * g.square();
    p.mutable_value().array() -=
        step_size * m_[i].array() / ((v_[i].array() * inv_bc2).sqrt() + eps);
  }
  consumed_version_ = newest;
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace unitrans
