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

#include <vector>

#include "lpf/numerics.hpp"

namespace lpf::nn {

enum class Mode { training, inference };
enum class Activation { identity, relu };

// Fully connected layer acting on column batches: y = act(W x + b).
struct DenseLayer {
  Matrix weight;  // out x in
  Matrix bias;    // out x 1
  Activation activation = Activation::identity;
  bool dropout = false;  // inverted dropout on the activated output

  DenseLayer() = default;
  DenseLayer(Eigen::Index in, Eigen::Index out, Activation act, bool drop);

  Eigen::Index in_dim() const { return weight.cols(); }
  Eigen::Index out_dim() const { return weight.rows(); }

  /// PyTorch-style U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weight and bias.
  void initialize(RandomStream& stream);
};

// Dropout is active only when a stream is supplied and the rate is positive.
struct DropoutContext {
  double rate = 0.0;
  RandomStream* stream = nullptr;

  bool active() const { return stream != nullptr && rate > 0.0; }
};

class Mlp {
 public:
  struct Cache {
    std::vector<Matrix> inputs;      // input to each layer
    std::vector<Matrix> pre;         // pre-activation of each layer
    std::vector<Matrix> masks;       // scaled dropout masks (empty if unused)
  };

  Mlp() = default;
  /// dims = {in, h1, ..., out}; hidden layers use ReLU, the last is linear
  /// unless relu_output is set. Dropout follows hidden layers listed in
  /// dropout_after (0-based layer indices).
  Mlp(const std::vector<Eigen::Index>& dims, bool relu_output,
      const std::vector<std::size_t>& dropout_after);

  void initialize(RandomStream& stream);
  void set_zero();

  Eigen::Index in_dim() const { return layers.front().in_dim(); }
  Eigen::Index out_dim() const { return layers.back().out_dim(); }

  Matrix forward(const Matrix& x, Cache* cache = nullptr,
                 const DropoutContext& dropout = {}) const;

  /// Back-propagates d_out; accumulates parameter gradients into grad when
  /// non-null and returns the gradient with respect to the input.
  Matrix backward(const Cache& cache, const Matrix& d_out, Mlp* grad) const;

  void collect_parameters(std::vector<Matrix*>& out);
  void collect_parameters(std::vector<const Matrix*>& out) const;

  std::vector<DenseLayer> layers;
};

}  // namespace lpf::nn
