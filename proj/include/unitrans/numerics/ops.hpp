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

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "unitrans/numerics/tensor.hpp"

namespace unitrans {

/// A contiguous block of rows belonging to one sequence inside a packed batch.
struct Segment {
  Index offset = 0;
  Index length = 0;
};

/// Segments for a single sequence spanning all rows.
inline std::vector<Segment> whole(Index rows) { return {Segment{0, rows}}; }

/// Builds back-to-back segments from a list of lengths.
inline std::vector<Segment> pack_segments(std::span<const Index> lengths) {
  std::vector<Segment> segs;
  segs.reserve(lengths.size());
  Index offset = 0;
  for (Index len : lengths) {
    segs.push_back({offset, len});
    offset += len;
  }
  return segs;
}

namespace detail {

inline std::string dims(Index r, Index c) {
  return "[" + std::to_string(r) + "x" + std::to_string(c) + "]";
}

template <typename Scalar>
void require_same_shape(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b,
                        const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    fail(ErrorCategory::Dimension, std::string(op) + ": shape mismatch " + a.shape_string() +
                                       " vs " + b.shape_string());
  }
}

template <typename Scalar>
void require_finite(const BasicTensor<Scalar>& x, const char* op) {
  if (!x.all_finite()) {
    fail(ErrorCategory::Numeric, std::string(op) + ": non-finite input " + x.shape_string());
  }
}

inline void require_segments(std::span<const Segment> segs, Index rows, const char* op) {
  Index end = 0;
  for (const auto& s : segs) {
    if (s.length <= 0 || s.offset < end || s.offset + s.length > rows) {
      fail(ErrorCategory::Dimension, std::string(op) + ": invalid segment layout for " +
                                         std::to_string(rows) + " rows");
    }
    end = s.offset + s.length;
  }
}

/// Row-wise log-softmax with max subtraction.
template <typename Scalar>
MatrixX<Scalar> log_softmax_rows(const MatrixX<Scalar>& x) {
  MatrixX<Scalar> out(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const Scalar m = x.row(i).maxCoeff();
    const Scalar lse = std::log((x.row(i).array() - m).exp().sum());
    out.row(i) = (x.row(i).array() - m - lse).matrix();
  }
  return out;
}

}  // namespace detail

///////////////////////////////////////////
// Elementwise
///////////////////////////////////////////

template <typename Scalar>
BasicTensor<Scalar> add(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  detail::require_same_shape(a, b, "add");
  return detail::make_result<Scalar>(a.value() + b.value(), {&a, &b},
                                     [a, b](const MatrixX<Scalar>& g) {
                                       if (auto* ga = detail::grad_of(a)) *ga += g;
                                       if (auto* gb = detail::grad_of(b)) *gb += g;
                                     });
}

template <typename Scalar>
BasicTensor<Scalar> sub(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  detail::require_same_shape(a, b, "sub");
  return detail::make_result<Scalar>(a.value() - b.value(), {&a, &b},
                                     [a, b](const MatrixX<Scalar>& g) {
                                       if (auto* ga = detail::grad_of(a)) *ga += g;
                                       if (auto* gb = detail::grad_of(b)) *gb -= g;
                                     });
}

template <typename Scalar>
BasicTensor<Scalar> mul(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  detail::require_same_shape(a, b, "mul");
  return detail::make_result<Scalar>(
      a.value().cwiseProduct(b.value()), {&a, &b}, [a, b](const MatrixX<Scalar>& g) {
        if (auto* ga = detail::grad_of(a)) *ga += g.cwiseProduct(b.value());
        if (auto* gb = detail::grad_of(b)) *gb += g.cwiseProduct(a.value());
      });
}

template <typename Scalar>
BasicTensor<Scalar> scale(const BasicTensor<Scalar>& a, Scalar s) {
  return detail::make_result<Scalar>(a.value() * s, {&a}, [a, s](const MatrixX<Scalar>& g) {
    if (auto* ga = detail::grad_of(a)) *ga += g * s;
  });
}

template <typename Scalar>
BasicTensor<Scalar> relu(const BasicTensor<Scalar>& a) {
  return detail::make_result<Scalar>(
      a.value().cwiseMax(Scalar(0)), {&a}, [a](const MatrixX<Scalar>& g) {
        if (auto* ga = detail::grad_of(a)) {
          *ga += (a.value().array() > Scalar(0)).select(g, Scalar(0)).matrix();
        }
      });
}

/// Adds a 1×C row to every row of x.
template <typename Scalar>
BasicTensor<Scalar> add_bias(const BasicTensor<Scalar>& x, const BasicTensor<Scalar>& bias) {
  if (bias.rows() != 1 || bias.cols() != x.cols()) {
    fail(ErrorCategory::Dimension,
         "add_bias: bias " + bias.shape_string() + " does not match " + x.shape_string());
  }
  MatrixX<Scalar> out = x.value();
  out.rowwise() += bias.value().row(0);
  return detail::make_result<Scalar>(std::move(out), {&x, &bias},
                                     [x, bias](const MatrixX<Scalar>& g) {
                                       if (auto* gx = detail::grad_of(x)) *gx += g;
                                       if (auto* gb = detail::grad_of(bias)) {
                                         *gb += g.colwise().sum();
                                       }
                                     });
}

/// Inverted dropout; identity when rate is 0.
template <typename Scalar>
BasicTensor<Scalar> dropout(const BasicTensor<Scalar>& x, Scalar rate, std::mt19937_64& rng) {
  if (rate <= Scalar(0)) return x;
  std::bernoulli_distribution keep(1.0 - static_cast<double>(rate));
  MatrixX<Scalar> mask(x.rows(), x.cols());
  const Scalar inv = Scalar(1) / (Scalar(1) - rate);
  for (Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(rng) ? inv : Scalar(0);
  return detail::make_result<Scalar>(x.value().cwiseProduct(mask), {&x},
                                     [x, mask](const MatrixX<Scalar>& g) {
                                       if (auto* gx = detail::grad_of(x)) {
                                         *gx += g.cwiseProduct(mask);
                                       }
                                     });
}

///////////////////////////////////////////
// Reductions
///////////////////////////////////////////

template <typename Scalar>
BasicTensor<Scalar> sum(const BasicTensor<Scalar>& x) {
  MatrixX<Scalar> out(1, 1);
  out(0, 0) = x.value().sum();
  return detail::make_result<Scalar>(std::move(out), {&x}, [x](const MatrixX<Scalar>& g) {
    if (auto* gx = detail::grad_of(x)) gx->array() += g(0, 0);
  });
}

/// Mean squared error against a constant target.
template <typename Scalar>
BasicTensor<Scalar> mse(const BasicTensor<Scalar>& x, const MatrixX<Scalar>& target) {
  if (x.rows() != target.rows() || x.cols() != target.cols()) {
    fail(ErrorCategory::Dimension, "mse: shape mismatch " + x.shape_string() + " vs " +
                                       detail::dims(target.rows(), target.cols()));
  }
  MatrixX<Scalar> diff = x.value() - target;
  MatrixX<Scalar> out(1, 1);
  const Scalar n = static_cast<Scalar>(diff.size());
  out(0, 0) = diff.squaredNorm() / n;
  return detail::make_result<Scalar>(std::move(out), {&x},
                                     [x, diff, n](const MatrixX<Scalar>& g) {
                                       if (auto* gx = detail::grad_of(x)) {
                                         *gx += diff * (Scalar(2) * g(0, 0) / n);
                                       }
                                     });
}

///////////////////////////////////////////
// Linear algebra
///////////////////////////////////////////

template <typename Scalar>
BasicTensor<Scalar> matmul(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  if (a.cols() != b.rows()) {
    fail(ErrorCategory::Dimension, "matmul: inner dimensions differ, " + a.shape_string() +
                                       " x " + b.shape_string());
  }
  MatrixX<Scalar> out(a.rows(), b.cols());
  out.noalias() = a.value() * b.value();
  return detail::make_result<Scalar>(std::move(out), {&a, &b},
                                     [a, b](const MatrixX<Scalar>& g) {
                                       if (auto* ga = detail::grad_of(a)) {
                                         ga->noalias() += g * b.value().transpose();
                                       }
                                       if (auto* gb = detail::grad_of(b)) {
                                         gb->noalias() += a.value().transpose() * g;
                                       }
                                     });
}

/// x·W + b with W stored [in×out] and b a 1×out row.
template <typename Scalar>
BasicTensor<Scalar> linear(const BasicTensor<Scalar>& x, const BasicTensor<Scalar>& weight,
                           const BasicTensor<Scalar>& bias) {
  if (x.cols() != weight.rows() || bias.rows() != 1 || bias.cols() != weight.cols()) {
    fail(ErrorCategory::Dimension, "linear: incompatible shapes " + x.shape_string() + ", " +
                                       weight.shape_string() + ", " + bias.shape_string());
  }
  MatrixX<Scalar> out(x.rows(), weight.cols());
  out.noalias() = x.value() * weight.value();
  out.rowwise() += bias.value().row(0);
  return detail::make_result<Scalar>(std::move(out), {&x, &weight, &bias},
                                     [x, weight, bias](const MatrixX<Scalar>& g) {
                                       if (auto* gx = detail::grad_of(x)) {
                                         gx->noalias() += g * weight.value().transpose();
                                       }
                                       if (auto* gw = detail::grad_of(weight)) {
                                         gw->noalias() += x.value().transpose() * g;
                                       }
                                       if (auto* gb = detail::grad_of(bias)) {
                                         *gb += g.colwise().sum();
                                       }
                                     });
}

///////////////////////////////////////////
// Normalization and probabilities
///////////////////////////////////////////

/// Softmax over the last axis (each row), max-subtracted.
template <typename Scalar>
BasicTensor<Scalar> softmax(const BasicTensor<Scalar>& x) {
  detail::require_finite(x, "softmax");
  MatrixX<Scalar> p = detail::log_softmax_rows(x.value()).array().exp().matrix();
  return detail::make_result<Scalar>(p, {&x}, [x, p](const MatrixX<Scalar>& g) {
    if (auto* gx = detail::grad_of(x)) {
      for (Index i = 0; i < p.rows(); ++i) {
        const Scalar dot = g.row(i).dot(p.row(i));
        gx->row(i).array() += p.row(i).array() * (g.row(i).array() - dot);
      }
    }
  });
}

template <typename Scalar>
BasicTensor<Scalar> layer_norm(const BasicTensor<Scalar>& x, const BasicTensor<Scalar>& gain,
                               const BasicTensor<Scalar>& bias, Scalar eps = Scalar(1e-5)) {
  const Index n = x.rows();
  const Index c = x.cols();
  if (gain.rows() != 1 || gain.cols() != c || bias.rows() != 1 || bias.cols() != c) {
    fail(ErrorCategory::Dimension, "layer_norm: gain/bias " + gain.shape_string() + "/" +
                                       bias.shape_string() + " vs input " + x.shape_string());
  }
  MatrixX<Scalar> xhat(n, c);
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv_std(n);
  for (Index i = 0; i < n; ++i) {
    const Scalar mean = x.value().row(i).mean();
    auto centered = x.value().row(i).array() - mean;
    const Scalar var = centered.square().mean();
    inv_std(i) = Scalar(1) / std::sqrt(var + eps);
    xhat.row(i) = (centered * inv_std(i)).matrix();
  }
  MatrixX<Scalar> out = xhat;
  out.array().rowwise() *= gain.value().row(0).array();
  out.rowwise() += bias.value().row(0);
  return detail::make_result<Scalar>(
      std::move(out), {&x, &gain, &bias},
      [x, gain, bias, xhat, inv_std, c](const MatrixX<Scalar>& g) {
        if (auto* gg = detail::grad_of(gain)) *gg += g.cwiseProduct(xhat).colwise().sum();
        if (auto* gb = detail::grad_of(bias)) *gb += g.colwise().sum();
        if (auto* gx = detail::grad_of(x)) {
          const Scalar cn = static_cast<Scalar>(c);
          for (Index i = 0; i < xhat.rows(); ++i) {
            auto dxhat = (g.row(i).array() * gain.value().row(0).array()).eval();
            const Scalar s1 = dxhat.sum();
            const Scalar s2 = (dxhat * xhat.row(i).array()).sum();
            gx->row(i).array() +=
                (inv_std(i) / cn) * (cn * dxhat - s1 - xhat.row(i).array() * s2);
          }
        }
      });
}

/// Scales each row to unit L2 norm.
template <typename Scalar>
BasicTensor<Scalar> l2_normalize_rows(const BasicTensor<Scalar>& x,
                                      Scalar eps = Scalar(1e-12)) {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> norms = x.value().rowwise().norm();
  norms = norms.cwiseMax(eps);
  MatrixX<Scalar> y = x.value();
  for (Index i = 0; i < y.rows(); ++i) y.row(i) /= norms(i);
  return detail::make_result<Scalar>(y, {&x}, [x, y, norms](const MatrixX<Scalar>& g) {
    if (auto* gx = detail::grad_of(x)) {
      for (Index i = 0; i < y.rows(); ++i) {
        const Scalar dot = y.row(i).dot(g.row(i));
        gx->row(i) += (g.row(i) - y.row(i) * dot) / norms(i);
      }
    }
  });
}

///////////////////////////////////////////
// Losses
///////////////////////////////////////////

namespace detail {

template <typename Scalar>
void require_targets(const BasicTensor<Scalar>& logits, std::span<const int> targets,
                     const char* op) {
  if (static_cast<Index>(targets.size()) != logits.rows()) {
    fail(ErrorCategory::Dimension, std::string(op) + ": " + std::to_string(targets.size()) +
                                       " targets for logits " + logits.shape_string());
  }
  for (int t : targets) {
    if (t < 0 || t >= logits.cols()) {
      fail(ErrorCategory::Index, std::string(op) + ": target index " + std::to_string(t) +
                                     " outside vocabulary of " + std::to_string(logits.cols()));
    }
  }
}

}  // namespace detail

/// Mean over rows of -log softmax(logits)[target].
template <typename Scalar>
BasicTensor<Scalar> cross_entropy(const BasicTensor<Scalar>& logits,
                                  std::span<const int> targets) {
  detail::require_targets(logits, targets, "cross_entropy");
  detail::require_finite(logits, "cross_entropy");
  const MatrixX<Scalar> logp = detail::log_softmax_rows(logits.value());
  const Index t_len = logits.rows();
  Scalar total = 0;
  for (Index i = 0; i < t_len; ++i) total += -logp(i, targets[i]);
  MatrixX<Scalar> out(1, 1);
  out(0, 0) = total / static_cast<Scalar>(t_len);
  std::vector<int> tgt(targets.begin(), targets.end());
  return detail::make_result<Scalar>(
      std::move(out), {&logits}, [logits, logp, tgt](const MatrixX<Scalar>& g) {
        if (auto* gl = detail::grad_of(logits)) {
          const Scalar w = g(0, 0) / static_cast<Scalar>(logp.rows());
          MatrixX<Scalar> d = logp.array().exp().matrix();
          for (Index i = 0; i < d.rows(); ++i) d(i, tgt[i]) -= Scalar(1);
          *gl += d * w;
        }
      });
}

/// Label-smoothed cross-entropy: per row (1-α)·CE(onehot, ŷ) + α·CE(uniform, ŷ),
/// averaged over rows.
template <typename Scalar>
BasicTensor<Scalar> label_smoothed_ce(const BasicTensor<Scalar>& logits,
                                      std::span<const int> targets, Scalar alpha) {
  if (!(alpha >= Scalar(0) && alpha < Scalar(1))) {
    fail(ErrorCategory::Config,
         "label_smoothed_ce: alpha must lie in [0,1), got " + std::to_string(alpha));
  }
  detail::require_targets(logits, targets, "label_smoothed_ce");
  detail::require_finite(logits, "label_smoothed_ce");
  const MatrixX<Scalar> logp = detail::log_softmax_rows(logits.value());
  const Index t_len = logits.rows();
  const Index vocab = logits.cols();
  Scalar total = 0;
  for (Index i = 0; i < t_len; ++i) {
    const Scalar ce_target = -logp(i, targets[i]);
    const Scalar ce_uniform = -logp.row(i).sum() / static_cast<Scalar>(vocab);
    total += (Scalar(1) - alpha) * ce_target + alpha * ce_uniform;
  }
  MatrixX<Scalar> out(1, 1);
  out(0, 0) = total / static_cast<Scalar>(t_len);
  std::vector<int> tgt(targets.begin(), targets.end());
  return detail::make_result<Scalar>(
      std::move(out), {&logits}, [logits, logp, tgt, alpha](const MatrixX<Scalar>& g) {
        if (auto* gl = detail::grad_of(logits)) {
          const Scalar w = g(0, 0) / static_cast<Scalar>(logp.rows());
          const Scalar u = alpha / static_cast<Scalar>(logp.cols());
          MatrixX<Scalar> d = logp.array().exp().matrix();
          d.array() -= u;
          for (Index i = 0; i < d.rows(); ++i) d(i, tgt[i]) -= Scalar(1) - alpha;
          *gl += d * w;
        }
      });
}

///////////////////////////////////////////
// Sequence ops
///////////////////////////////////////////

/// Gathers rows of table; gradients scatter-add back.
template <typename Scalar>
BasicTensor<Scalar> embedding_lookup(const BasicTensor<Scalar>& table, std::span<const int> ids) {
  if (ids.empty()) fail(ErrorCategory::EmptyInput, "embedding_lookup: empty id list");
  MatrixX<Scalar> out(static_cast<Index>(ids.size()), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= table.rows()) {
      fail(ErrorCategory::Index, "embedding_lookup: id " + std::to_string(ids[i]) +
                                     " outside table of " + std::to_string(table.rows()));
    }
    out.row(static_cast<Index>(i)) = table.value().row(ids[i]);
  }
  std::vector<int> idx(ids.begin(), ids.end());
  return detail::make_result<Scalar>(std::move(out), {&table},
                                     [table, idx](const MatrixX<Scalar>& g) {
                                       if (auto* gt = detail::grad_of(table)) {
                                         for (std::size_t i = 0; i < idx.size(); ++i) {
                                           gt->row(idx[i]) += g.row(static_cast<Index>(i));
                                         }
                                       }
                                     });
}

/// Per-segment, per-column maximum over the time axis; one output row per
/// segment. Ties route the gradient to the earliest frame.
template <typename Scalar>
BasicTensor<Scalar> max_pool_segments(const BasicTensor<Scalar>& x,
                                      std::span<const Segment> segs) {
  if (segs.empty()) fail(ErrorCategory::EmptyInput, "max_pool: no segments");
  for (const auto& s : segs) {
    if (s.length <= 0) fail(ErrorCategory::EmptyInput, "max_pool: empty time axis");
  }
  detail::require_segments(segs, x.rows(), "max_pool");
  const Index cols = x.cols();
  MatrixX<Scalar> out(static_cast<Index>(segs.size()), cols);
  std::vector<Index> arg(segs.size() * static_cast<std::size_t>(cols));
  for (std::size_t s = 0; s < segs.size(); ++s) {
    for (Index j = 0; j < cols; ++j) {
      Index best = segs[s].offset;
      for (Index t = segs[s].offset + 1; t < segs[s].offset + segs[s].length; ++t) {
        if (x.value()(t, j) > x.value()(best, j)) best = t;
      }
      out(static_cast<Index>(s), j) = x.value()(best, j);
      arg[s * static_cast<std::size_t>(cols) + static_cast<std::size_t>(j)] = best;
    }
  }
  return detail::make_result<Scalar>(std::move(out), {&x},
                                     [x, arg, cols](const MatrixX<Scalar>& g) {
                                       if (auto* gx = detail::grad_of(x)) {
                                         for (std::size_t k = 0; k < arg.size(); ++k) {
                                           const Index s = static_cast<Index>(k) / cols;
                                           const Index j = static_cast<Index>(k) % cols;
                                           (*gx)(arg[k], j) += g(s, j);
                                         }
                                       }
                                     });
}

template <typename Scalar>
BasicTensor<Scalar> max_pool_time(const BasicTensor<Scalar>& x) {
  return max_pool_segments(x, whole(x.rows()));
}

/// Stride-1 convolution over the time axis with zero "same" padding applied
/// independently inside each segment. The kernel is stored [(K·C_in)×C_out],
/// tap-major, so tap j multiplies input frame t + j - K/2.
template <typename Scalar>
BasicTensor<Scalar> conv1d(const BasicTensor<Scalar>& x, const BasicTensor<Scalar>& kernel,
                           Index taps, std::span<const Segment> segs) {
  const Index c_in = x.cols();
  if (taps <= 0 || taps % 2 == 0) {
    fail(ErrorCategory::Config, "conv1d: same padding needs an odd tap count, got " +
                                    std::to_string(taps));
  }
  if (kernel.rows() != taps * c_in) {
    fail(ErrorCategory::Dimension, "conv1d: kernel " + kernel.shape_string() +
                                       " does not match " + std::to_string(taps) +
                                       " taps over input " + x.shape_string());
  }
  detail::require_segments(segs, x.rows(), "conv1d");
  const Index half = taps / 2;
  MatrixX<Scalar> cols = MatrixX<Scalar>::Zero(x.rows(), taps * c_in);
  for (const auto& s : segs) {
    for (Index t = 0; t < s.length; ++t) {
      for (Index j = 0; j < taps; ++j) {
        const Index src = t + j - half;
        if (src < 0 || src >= s.length) continue;
        cols.block(s.offset + t, j * c_in, 1, c_in) = x.value().row(s.offset + src);
      }
    }
  }
  MatrixX<Scalar> out(x.rows(), kernel.cols());
  out.noalias() = cols * kernel.value();
  std::vector<Segment> seg_copy(segs.begin(), segs.end());
  return detail::make_result<Scalar>(
      std::move(out), {&x, &kernel},
      [x, kernel, cols, seg_copy, taps, half, c_in](const MatrixX<Scalar>& g) {
        if (auto* gk = detail::grad_of(kernel)) gk->noalias() += cols.transpose() * g;
        if (auto* gx = detail::grad_of(x)) {
          MatrixX<Scalar> dcols(g.rows(), kernel.rows());
          dcols.noalias() = g * kernel.value().transpose();
          for (const auto& s : seg_copy) {
            for (Index t = 0; t < s.length; ++t) {
              for (Index j = 0; j < taps; ++j) {
                const Index src = t + j - half;
                if (src < 0 || src >= s.length) continue;
                gx->row(s.offset + src) += dcols.block(s.offset + t, j * c_in, 1, c_in);
              }
            }
          }
        }
      });
}

template <typename Scalar>
BasicTensor<Scalar> conv1d(const BasicTensor<Scalar>& x, const BasicTensor<Scalar>& kernel,
                           Index taps) {
  const auto segs = whole(x.rows());
  return conv1d(x, kernel, taps, std::span<const Segment>(segs));
}

/// Multi-head scaled dot-product attention over packed segments. Query
/// segment i attends only to key segment i. With causal masking, query row t
/// of a segment sees key rows 0..t + (k_len - q_len), which supports both full
/// self-attention and incremental decoding against a longer key cache.
template <typename Scalar>
BasicTensor<Scalar> attention(const BasicTensor<Scalar>& q, const BasicTensor<Scalar>& k,
                              const BasicTensor<Scalar>& v, std::span<const Segment> q_segs,
                              std::span<const Segment> k_segs, Index heads, bool causal) {
  const Index dim = q.cols();
  if (k.cols() != dim || v.cols() != dim || k.rows() != v.rows()) {
    fail(ErrorCategory::Dimension, "attention: q/k/v shapes " + q.shape_string() + ", " +
                                       k.shape_string() + ", " + v.shape_string());
  }
  if (heads <= 0 || dim % heads != 0) {
    fail(ErrorCategory::Config, "attention: " + std::to_string(heads) +
                                    " heads do not divide width " + std::to_string(dim));
  }
  if (q_segs.size() != k_segs.size()) {
    fail(ErrorCategory::Dimension, "attention: query and key segment counts differ");
  }
  detail::require_segments(q_segs, q.rows(), "attention(q)");
  detail::require_segments(k_segs, k.rows(), "attention(k)");
  const Index hd = dim / heads;
  const Scalar sc = Scalar(1) / std::sqrt(static_cast<Scalar>(hd));

  MatrixX<Scalar> out = MatrixX<Scalar>::Zero(q.rows(), dim);
  std::vector<MatrixX<Scalar>> probs;
  probs.reserve(q_segs.size() * static_cast<std::size_t>(heads));
  for (std::size_t s = 0; s < q_segs.size(); ++s) {
    const Segment qs = q_segs[s];
    const Segment ks = k_segs[s];
    const Index lag = ks.length - qs.length;
    if (causal && lag < 0) {
      fail(ErrorCategory::Dimension, "attention: causal queries outnumber keys");
    }
    for (Index h = 0; h < heads; ++h) {
      MatrixX<Scalar> scores(qs.length, ks.length);
      scores.noalias() = q.value().block(qs.offset, h * hd, qs.length, hd) *
                         k.value().block(ks.offset, h * hd, ks.length, hd).transpose();
      scores *= sc;
      for (Index i = 0; i < qs.length; ++i) {
        const Index visible = causal ? i + lag + 1 : ks.length;
        const Scalar m = scores.row(i).head(visible).maxCoeff();
        Scalar z = 0;
        for (Index j = 0; j < visible; ++j) {
          scores(i, j) = std::exp(scores(i, j) - m);
          z += scores(i, j);
        }
        for (Index j = 0; j < visible; ++j) scores(i, j) /= z;
        for (Index j = visible; j < ks.length; ++j) scores(i, j) = 0;
      }
      out.block(qs.offset, h * hd, qs.length, hd).noalias() =
          scores * v.value().block(ks.offset, h * hd, ks.length, hd);
      probs.push_back(std::move(scores));
    }
  }
  std::vector<Segment> qv(q_segs.begin(), q_segs.end());
  std::vector<Segment> kv(k_segs.begin(), k_segs.end());
  return detail::make_result<Scalar>(
      std::move(out), {&q, &k, &v},
      [q, k, v, qv, kv, probs, heads, hd, sc](const MatrixX<Scalar>& g) {
        auto* gq = detail::grad_of(q);
        auto* gk = detail::grad_of(k);
        auto* gv = detail::grad_of(v);
        for (std::size_t s = 0; s < qv.size(); ++s) {
          const Segment qs = qv[s];
          const Segment ks = kv[s];
          for (Index h = 0; h < heads; ++h) {
            const MatrixX<Scalar>& p = probs[s * static_cast<std::size_t>(heads) +
                                             static_cast<std::size_t>(h)];
            const auto dout = g.block(qs.offset, h * hd, qs.length, hd);
            if (gv) {
              gv->block(ks.offset, h * hd, ks.length, hd).noalias() += p.transpose() * dout;
            }
            if (!gq && !gk) continue;
            MatrixX<Scalar> dp(qs.length, ks.length);
            dp.noalias() = dout * v.value().block(ks.offset, h * hd, ks.length, hd).transpose();
            for (Index i = 0; i < qs.length; ++i) {
              const Scalar dot = dp.row(i).dot(p.row(i));
              dp.row(i).array() = p.row(i).array() * (dp.row(i).array() - dot);
            }
            dp *= sc;
            if (gq) {
              gq->block(qs.offset, h * hd, qs.length, hd).noalias() +=
                  dp * k.value().block(ks.offset, h * hd, ks.length, hd);
            }
            if (gk) {
              gk->block(ks.offset, h * hd, ks.length, hd).noalias() +=
                  dp.transpose() * q.value().block(qs.offset, h * hd, qs.length, hd);
            }
          }
        }
      });
}

}  // namespace unitrans
