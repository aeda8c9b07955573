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
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "unitrans/error.hpp"

namespace unitrans {

using Index = Eigen::Index;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Matrix = MatrixX<float>;
using RowVector = Eigen::Matrix<float, 1, Eigen::Dynamic>;

///////////////////////////////////////////
// Tape
///////////////////////////////////////////

/// Ordered record of backward rules. Operations are appended in execution
/// order, so replaying in reverse visits every node after all its consumers.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::function<void()> rule) { rules_.push_back(std::move(rule)); }

  /// Replays all recorded rules in reverse order and clears the tape.
  void replay() {
    for (auto it = rules_.rbegin(); it != rules_.rend(); ++it) (*it)();
    rules_.clear();
  }

  void clear() { rules_.clear(); }
  std::size_t size() const { return rules_.size(); }

  static Tape* active() { return active_; }

  /// Monotonic id of the backward pass currently being replayed. Gradients
  /// written during a pass are stamped with it.
  static std::uint64_t current_pass() { return pass_; }
  static std::uint64_t begin_pass() { return ++pass_; }

 private:
  friend class TapeScope;
  friend class NoTapeScope;
  std::vector<std::function<void()>> rules_;
  static inline thread_local Tape* active_ = nullptr;
  static inline thread_local std::uint64_t pass_ = 0;
};

/// Makes a tape the recording target for the current thread.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape) : previous_(Tape::active_) { Tape::active_ = &tape; }
  ~TapeScope() { Tape::active_ = previous_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

/// Suspends recording for the current thread; ops run as plain value
/// computations.
class NoTapeScope {
 public:
  NoTapeScope() : previous_(Tape::active_) { Tape::active_ = nullptr; }
  ~NoTapeScope() { Tape::active_ = previous_; }
  NoTapeScope(const NoTapeScope&) = delete;
  NoTapeScope& operator=(const NoTapeScope&) = delete;

 private:
  Tape* previous_;
};

///////////////////////////////////////////
// Tensor
///////////////////////////////////////////

template <typename Scalar>
struct Node {
  MatrixX<Scalar> value;
  MatrixX<Scalar> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::uint64_t grad_version = 0;

  MatrixX<Scalar>& grad_buffer() {
    if (grad.size() == 0) grad = MatrixX<Scalar>::Zero(value.rows(), value.cols());
    grad_version = Tape::current_pass();
    return grad;
  }
};

/// Dense rank-2 tensor with optional gradient. Vectors are 1×n rows and
/// scalars are 1×1. Copies share the underlying node.
template <typename Scalar>
class BasicTensor {
 public:
  using MatrixType = MatrixX<Scalar>;

  BasicTensor() = default;

  explicit BasicTensor(MatrixType value, bool requires_grad = false)
      : node_(std::make_shared<Node<Scalar>>()) {
    if (value.rows() <= 0 || value.cols() <= 0) {
      fail(ErrorCategory::Dimension, "tensor dimensions must be positive, got " +
                                         std::to_string(value.rows()) + "x" +
                                         std::to_string(value.cols()));
    }
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  static BasicTensor zeros(Index rows, Index cols, bool requires_grad = false) {
    return BasicTensor(MatrixType::Zero(rows, cols), requires_grad);
  }

  static BasicTensor scalar(Scalar v) {
    MatrixType m(1, 1);
    m(0, 0) = v;
    return BasicTensor(std::move(m));
  }

  static BasicTensor from_rows(std::initializer_list<std::initializer_list<Scalar>> rows,
                               bool requires_grad = false) {
    const Index r = static_cast<Index>(rows.size());
    const Index c = r > 0 ? static_cast<Index>(rows.begin()->size()) : 0;
    MatrixType m(r, c);
    Index i = 0;
    for (const auto& row : rows) {
      if (static_cast<Index>(row.size()) != c) {
        fail(ErrorCategory::Dimension, "ragged initializer rows");
      }
      Index j = 0;
      for (Scalar v : row) m(i, j++) = v;
      ++i;
    }
    return BasicTensor(std::move(m), requires_grad);
  }

  bool defined() const { return static_cast<bool>(node_); }
  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  Index size() const { return node_->value.size(); }
  std::vector<Index> shape() const { return {rows(), cols()}; }

  const MatrixType& value() const { return node_->value; }
  /// Direct write access, for optimizers and initializers only.
  MatrixType& mutable_value() { return node_->value; }
  std::span<const Scalar> data() const {
    return {node_->value.data(), static_cast<std::size_t>(node_->value.size())};
  }
  Scalar item() const {
    if (size() != 1) fail(ErrorCategory::Usage, "item() on non-scalar tensor " + shape_string());
    return node_->value(0, 0);
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  bool has_grad() const { return node_->grad.size() != 0; }
  const MatrixType& grad() const { return node_->grad; }
  void zero_grad() {
    if (has_grad()) node_->grad.setZero();
  }
  std::uint64_t grad_version() const { return node_->grad_version; }

  std::string shape_string() const {
    if (!node_) return "[undefined]";
    return "[" + std::to_string(rows()) + "x" + std::to_string(cols()) + "]";
  }

  bool all_finite() const { return node_->value.allFinite(); }

  const std::shared_ptr<Node<Scalar>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<Scalar>> node_;
};

using Tensor = BasicTensor<float>;

namespace detail {

template <typename Scalar>
bool any_requires_grad(std::initializer_list<const BasicTensor<Scalar>*> inputs) {
  for (const auto* t : inputs) {
    if (t && t->defined() && t->requires_grad()) return true;
  }
  return false;
}

/// Wraps an op result; if a tape is active and any input needs gradients the
/// backward rule is recorded. The rule receives the output node's gradient.
template <typename Scalar, typename Rule>
BasicTensor<Scalar> make_result(MatrixX<Scalar> value,
                                std::initializer_list<const BasicTensor<Scalar>*> inputs,
                                Rule&& rule) {
  const bool track = Tape::active() != nullptr && any_requires_grad(inputs);
  BasicTensor<Scalar> out(std::move(value), track);
  if (track) {
    auto out_node = out.node();
    Tape::active()->record([out_node, rule = std::forward<Rule>(rule)]() {
      if (out_node->grad.size() == 0) return;  // output never reached
      rule(out_node->grad);
    });
  }
  return out;
}

template <typename Scalar>
MatrixX<Scalar>* grad_of(const BasicTensor<Scalar>& t) {
  return t.requires_grad() ? &t.node()->grad_buffer() : nullptr;
}

}  // namespace detail

/// Seeds d(loss)/d(loss) = 1 and replays the active tape.
template <typename Scalar>
void backward(const BasicTensor<Scalar>& loss) {
  if (loss.size() != 1) {
    fail(ErrorCategory::Usage, "backward() needs a scalar loss, got " + loss.shape_string());
  }
  Tape* tape = Tape::active();
  if (tape == nullptr || !loss.requires_grad()) {
    fail(ErrorCategory::Usage, "backward() called on a loss not recorded on an active tape");
  }
  Tape::begin_pass();
  loss.node()->grad_buffer().setOnes();
  tape->replay();
}

}  // namespace unitrans
