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

#include "lpf/neuralnets.hpp"

namespace lpf::nn {

DecoderModel::DecoderModel(const DecoderArch& arch, std::vector<PredicateSpec> predicates,
                           double dropout)
    : dropout_rate(dropout), arch_(arch), predicates_(std::move(predicates)) {
  if (arch.hidden.empty()) throw DomainError("DecoderModel: need at least one hidden layer");
  if (predicates_.empty()) throw DomainError("DecoderModel: empty predicate vocabulary");
  std::vector<Eigen::Index> dims{arch.latent_dim + arch.predicate_embedding_dim};
  dims.insert(dims.end(), arch.hidden.begin(), arch.hidden.end());
  std::vector<std::size_t> drop;
  for (std::size_t i = 0; i < arch.hidden.size(); ++i) drop.push_back(i);
  trunk = Mlp(dims, /*relu_output=*/true, drop);
  predicate_embeddings = Matrix::Zero(arch.predicate_embedding_dim,
                                      static_cast<Eigen::Index>(predicates_.size()));
  for (const auto& p : predicates_) {
    if (p.domain.empty()) throw DomainError("DecoderModel: predicate " + p.name + " has empty domain");
    heads.emplace_back(arch.hidden.back(), static_cast<Eigen::Index>(p.domain.size()),
                       Activation::identity, false);
  }
}

DecoderModel::DecoderModel(const DecoderArch& arch, std::vector<PredicateSpec> predicates,
                           double dropout, RandomStream& init)
    : DecoderModel(arch, std::move(predicates), dropout) {
  for (Eigen::Index c = 0; c < predicate_embeddings.cols(); ++c)
    for (Eigen::Index r = 0; r < predicate_embeddings.rows(); ++r)
      predicate_embeddings(r, c) = init.gaussian();
  trunk.initialize(init);
  for (auto& h : heads) h.initialize(init);
}

std::size_t DecoderModel::predicate_index(const std::string& predicate) const {
  for (std::size_t i = 0; i < predicates_.size(); ++i)
    if (predicates_[i].name == predicate) return i;
  throw UnknownPredicate(predicate);
}

bool DecoderModel::has_predicate(const std::string& predicate) const {
  for (const auto& p : predicates_)
    if (p.name == predicate) return true;
  return false;
}

const std::vector<std::string>& DecoderModel::domain(const std::string& predicate) const {
  return predicates_[predicate_index(predicate)].domain;
}

DecoderModel::Forward DecoderModel::forward(const Matrix& z, std::size_t predicate,
                                            RandomStream* dropout_stream) const {
  if (z.rows() != arch_.latent_dim) throw DomainError("decode: latent dimension mismatch");
  Forward f;
  f.predicate = predicate;
  Matrix input(arch_.latent_dim + arch_.predicate_embedding_dim, z.cols());
  input.topRows(arch_.latent_dim) = z;
  input.bottomRows(arch_.predicate_embedding_dim) =
      predicate_embeddings.col(static_cast<Eigen::Index>(predicate)).replicate(1, z.cols());
  DropoutContext ctx;
  if (mode == Mode::training) ctx = {dropout_rate, dropout_stream};
  f.hidden = trunk.forward(input, &f.trunk_cache, ctx);
  const DenseLayer& head = heads[predicate];
  f.logits = head.weight * f.hidden;
  f.logits.colwise() += head.bias.col(0);
  f.probs = softmax_columns(f.logits);
  return f;
}

Matrix DecoderModel::backward(const Forward& f, const Matrix& d_logits, DecoderModel* grad) const {
  const DenseLayer& head = heads[f.predicate];
  if (grad) {
    grad->heads[f.predicate].weight.noalias() += d_logits * f.hidden.transpose();
    grad->heads[f.predicate].bias.col(0) += d_logits.rowwise().sum();
  }
  const Matrix d_hidden = head.weight.transpose() * d_logits;
  const Matrix d_input = trunk.backward(f.trunk_cache, d_hidden, grad ? &grad->trunk : nullptr);
  if (grad)
    grad->predicate_embeddings.col(static_cast<Eigen::Index>(f.predicate)) +=
        d_input.bottomRows(arch_.predicate_embedding_dim).rowwise().sum();
  return d_input.topRows(arch_.latent_dim);
}

Vector DecoderModel::decode(const Vector& z, const std::string& predicate) const {
  const std::size_t p = predicate_index(predicate);
  if (z.size() != arch_.latent_dim) throw DomainError("decode: latent dimension mismatch");
  Vector input(arch_.latent_dim + arch_.predicate_embedding_dim);
  input << z, predicate_embeddings.col(static_cast<Eigen::Index>(p));
  const Matrix hidden = trunk.forward(input);
  const Vector logits = heads[p].weight * hidden.col(0) + heads[p].bias.col(0);
  return softmax(logits);
}

DecoderModel DecoderModel::zeros_like() const {
  DecoderModel z = *this;
  z.predicate_embeddings.setZero();
  z.trunk.set_zero();
  for (auto& h : z.heads) {
    h.weight.setZero();
    h.bias.setZero();
  }
  return z;
}

std::vector<Matrix*> DecoderModel::parameters() {
  std::vector<Matrix*> out{&predicate_embeddings};
  trunk.collect_parameters(out);
  for (auto& h : heads) {
    out.push_back(&h.weight);
    out.push_back(&h.bias);
  }
  return out;
}

std::vector<const Matrix*> DecoderModel::parameters() const {
  std::vector<const Matrix*> out{&predicate_embeddings};
  trunk.collect_parameters(out);
  for (const auto& h : heads) {
    out.push_back(&h.weight);
    out.push_back(&h.bias);
  }
  return out;
}

}  // namespace lpf::nn
