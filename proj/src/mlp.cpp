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

#include "lpf/mlp.hpp"

#include <algorithm>

namespace lpf::nn {

DenseLayer::DenseLayer(Eigen::Index in, Eigen::Index out, Activation act, bool drop)
    : weight(Matrix::Zero(out, in)), bias(Matrix::Zero(out, 1)), activation(act), dropout(drop) {}

void DenseLayer::initialize(RandomStream& stream) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim()));
  for (Eigen::Index c = 0; c < weight.cols(); ++c)
    for (Eigen::Index r = 0; r < weight.rows(); ++r)
      weight(r, c) = (2.0 * stream.uniform() - 1.0) * bound;
  for (Eigen::Index r = 0; r < bias.rows(); ++r)
    bias(r, 0) = (2.0 * stream.uniform() - 1.0) * bound;
}

Mlp::Mlp(const std::vector<Eigen::Index>& dims, bool relu_output,
         const std::vector<std::size_t>& dropout_after) {
  if (dims.size() < 2) throw DomainError("Mlp: need at least input and output dims");
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const bool last = i + 2 == dims.size();
    const Activation act = (!last || relu_output) ? Activation::relu : Activation::identity;
    const bool drop =
        std::find(dropout_after.begin(), dropout_after.end(), i) != dropout_after.end();
    layers.emplace_back(dims[i], dims[i + 1], act, drop);
  }
}

void Mlp::initialize(RandomStream& stream) {
  for (auto& layer : layers) layer.initialize(stream);
}

void Mlp::set_zero() {
  for (auto& layer : layers) {
    layer.weight.setZero();
    layer.bias.setZero();
  }
}

Matrix Mlp::forward(const Matrix& x, Cache* cache, const DropoutContext& dropout) const {
  if (x.rows() != in_dim())
    throw DomainError("Mlp: input has " + std::to_string(x.rows()) + " rows, expected " +
                      std::to_string(in_dim()));
  if (cache) {
    cache->inputs.clear();
    cache->pre.clear();
    cache->masks.clear();
  }
  Matrix h = x;
  for (const auto& layer : layers) {
    Matrix pre = layer.weight * h;
    pre.colwise() += layer.bias.col(0);
    Matrix out = layer.activation == Activation::relu ? Matrix(pre.cwiseMax(0.0)) : pre;
    Matrix mask;
    if (layer.dropout && dropout.active()) {
      const double keep = 1.0 - dropout.rate;
      mask.resize(out.rows(), out.cols());
      for (Eigen::Index c = 0; c < mask.cols(); ++c)
        for (Eigen::Index r = 0; r < mask.rows(); ++r)
          mask(r, c) = dropout.stream->uniform() < dropout.rate ? 0.0 : 1.0 / keep;
      out.array() *= mask.array();
    }
    if (cache) {
      cache->inputs.push_back(std::move(h));
      cache->pre.push_back(std::move(pre));
      cache->masks.push_back(std::move(mask));
    }
    h = std::move(out);
  }
  return h;
}

Matrix Mlp::backward(const Cache& cache, const Matrix& d_out, Mlp* grad) const {
  Matrix d = d_out;
  for (std::size_t k = layers.size(); k-- > 0;) {
    const DenseLayer& layer = layers[k];
    if (cache.masks[k].size() > 0) d.array() *= cache.masks[k].array();
    if (layer.activation == Activation::relu)
      d.array() *= (cache.pre[k].array() > 0.0).cast<double>();
    if (grad) {
      grad->layers[k].weight.noalias() += d * cache.inputs[k].transpose();
      grad->layers[k].bias.col(0) += d.rowwise().sum();
    }
    d = layer.weight.transpose() * d;
  }
  return d;
}

void Mlp::collect_parameters(std::vector<Matrix*>& out) {
  for (auto& layer : layers) {
    out.push_back(&layer.weight);
    out.push_back(&layer.bias);
  }
}

void Mlp::collect_parameters(std::vector<const Matrix*>& out) const {
  for (const auto& layer : layers) {
    out.push_back(&layer.weight);
    out.push_back(&layer.bias);
  }
}

}  // namespace lpf::nn
