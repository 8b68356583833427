// Copyright 2026 The LPF Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace lpf {

using Scalar = double;
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

// Error taxonomy shared by every module.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class UnknownPredicate : public DomainError {
 public:
  explicit UnknownPredicate(const std::string& predicate)
      : DomainError("unknown predicate: " + predicate) {}
};

class NoEvidence : public DomainError {
 public:
  using DomainError::DomainError;
};

class NotFound : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// log(sum(exp(v))) with the max factored out.
template <typename Derived>
typename Derived::Scalar logsumexp(const Eigen::MatrixBase<Derived>& v) {
  using S = typename Derived::Scalar;
  if (v.size() == 0) throw DomainError("logsumexp: empty input");
  const S m = v.maxCoeff();
  if (!std::isfinite(m)) return m;  // all -inf, or +inf present
  return m + std::log((v.array() - m).exp().sum());
}

/// Numerically stable softmax; invariant to adding a constant to every logit.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> softmax(
    const Eigen::MatrixBase<Derived>& logits) {
  using S = typename Derived::Scalar;
  if (logits.size() == 0) throw DomainError("softmax: empty input");
  const S m = logits.maxCoeff();
  Eigen::Matrix<S, Eigen::Dynamic, 1> e = (logits.array() - m).exp().matrix();
  return e / e.sum();
}

/// Column-wise softmax of a (classes x batch) logit matrix.
Matrix softmax_columns(const Matrix& logits);

template <typename S>
S sigmoid(S x) {
  if (x >= S(0)) return S(1) / (S(1) + std::exp(-x));
  const S e = std::exp(x);
  return e / (S(1) + e);
}

template <typename S>
S softplus(S x) {
  // log(1 + e^x) without overflow for large x.
  return x > S(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

/// Index of the largest entry; ties go to the lowest index.
template <typename Derived>
Eigen::Index argmax(const Eigen::MatrixBase<Derived>& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (v(i) > v(best)) best = i;
  return best;
}

bool all_finite(const Matrix& m);

// Counter-based generator: every output is a pure function of
// (seed, stream_id, counter), so sequences are identical on every platform.
class RandomStream {
 public:
  RandomStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform on (0, 1), never exactly zero.
  double uniform_open();
  double gaussian();
  std::uint64_t uniform_index(std::uint64_t n);

  /// Independent child stream; does not advance this stream.
  RandomStream split(std::uint64_t child_id) const;

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t mix64(std::uint64_t x) noexcept;

/// dim independent standard normals.
Vector gaussian_draw(RandomStream& stream, Eigen::Index dim);
Matrix gaussian_draw(RandomStream& stream, Eigen::Index rows, Eigen::Index cols);

template <typename T>
void shuffle(std::vector<T>& items, RandomStream& stream) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(stream.uniform_index(i));
    std::swap(items[i - 1], items[j]);
  }
}

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamOptions options;
  std::int64_t step = 0;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;

  AdamState() = default;
  explicit AdamState(AdamOptions opts) : options(opts) {}
};

/// One bias-corrected Adam update. Moments are lazily shaped on the first step.
void adam_step(std::span<Matrix* const> params,
               std::span<const Matrix* const> grads, AdamState& state);

}  // namespace lpf
