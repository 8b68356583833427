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

#include "lpf/numerics.hpp"

#include <numbers>

namespace lpf {

Matrix softmax_columns(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index c = 0; c < logits.cols(); ++c)
    out.col(c) = softmax(logits.col(c));
  return out;
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

std::uint64_t mix64(std::uint64_t x) noexcept {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

namespace {
constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
}

RandomStream::RandomStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed),
      stream_id_(stream_id),
      key_(mix64(seed + kGolden) ^ mix64(mix64(stream_id) + 0x632be59bd9b4e019ULL)) {}

std::uint64_t RandomStream::next_u64() {
  ++counter_;
  return mix64(key_ + counter_ * kGolden);
}

double RandomStream::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RandomStream::uniform_open() {
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double RandomStream::gaussian() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = uniform_open();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

std::uint64_t RandomStream::uniform_index(std::uint64_t n) {
  if (n == 0) throw DomainError("uniform_index: n must be positive");
  // Rejection sampling removes modulo bias.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

RandomStream RandomStream::split(std::uint64_t child_id) const {
  return RandomStream(seed_, mix64(stream_id_ ^ mix64(child_id + kGolden)));
}

Vector gaussian_draw(RandomStream& stream, Eigen::Index dim) {
  if (dim <= 0) throw DomainError("gaussian_draw: dim must be positive");
  Vector v(dim);
  for (Eigen::Index i = 0; i < dim; ++i) v(i) = stream.gaussian();
  return v;
}

Matrix gaussian_draw(RandomStream& stream, Eigen::Index rows, Eigen::Index cols) {
  if (rows <= 0 || cols <= 0) throw DomainError("gaussian_draw: empty shape");
  Matrix m(rows, cols);
  // Column-major fill keeps each column a contiguous draw sequence.
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = stream.gaussian();
  return m;
}

void adam_step(std::span<Matrix* const> params,
               std::span<const Matrix* const> grads, AdamState& state) {
  if (params.size() != grads.size())
    throw DomainError("adam_step: parameter/gradient count mismatch");
  if (state.first_moment.empty()) {
    for (const Matrix* p : params) {
      state.first_moment.push_back(Matrix::Zero(p->rows(), p->cols()));
      state.second_moment.push_back(Matrix::Zero(p->rows(), p->cols()));
    }
  }
  if (state.first_moment.size() != params.size())
    throw DomainError("adam_step: state does not match parameter list");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->rows() != grads[i]->rows() ||
        params[i]->cols() != grads[i]->cols() ||
        params[i]->rows() != state.first_moment[i].rows() ||
        params[i]->cols() != state.first_moment[i].cols())
      throw DomainError("adam_step: shape mismatch at tensor " + std::to_string(i));
  }

  const AdamOptions& o = state.options;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(o.beta1, t);
  const double bc2 = 1.0 - std::pow(o.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& m = state.first_moment[i];
    Matrix& v = state.second_moment[i];
    const Matrix& g = *grads[i];
    m = o.beta1 * m + (1.0 - o.beta1) * g;
    v = o.beta2 * v + (1.0 - o.beta2) * g.cwiseAbs2();
    params[i]->array() -= o.learning_rate * (m.array() / bc1) /
                          ((v.array() / bc2).sqrt() + o.epsilon);
  }
}

}  // namespace lpf
