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

double confidence_from_sigma(const Vector& sigma) { return 1.0 / (1.0 + sigma.mean()); }

LatentPosterior make_posterior(std::string evidence_id, Vector mu, Vector sigma) {
  if (mu.size() != sigma.size() || mu.size() == 0)
    throw DomainError("make_posterior: mu and sigma must be nonempty and equal length");
  sigma = sigma.cwiseMax(kSigmaMin);
  LatentPosterior p{std::move(evidence_id), std::move(mu), std::move(sigma), 0.0};
  p.confidence = confidence_from_sigma(p.sigma);
  return p;
}

double kl_to_standard_normal(const LatentPosterior& posterior) {
  const auto s2 = posterior.sigma.array().square();
  return 0.5 * (s2 + posterior.mu.array().square() - 1.0 - s2.log()).sum();
}

Vector reparameterize(const LatentPosterior& posterior, RandomStream& stream) {
  const Vector eps = gaussian_draw(stream, posterior.mu.size());
  return posterior.mu + posterior.sigma.cwiseProduct(eps);
}

namespace {

Mlp make_trunk(Eigen::Index in, const std::vector<Eigen::Index>& hidden) {
  std::vector<Eigen::Index> dims{in};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  std::vector<std::size_t> drop;
  for (std::size_t i = 0; i < hidden.size(); ++i) drop.push_back(i);
  return Mlp(dims, /*relu_output=*/true, drop);
}

}  // namespace

EncoderModel::EncoderModel(const EncoderArch& arch, double dropout)
    : trunk(make_trunk(arch.input_dim, arch.hidden)),
      mu_head(arch.hidden.back(), arch.latent_dim, Activation::identity, false),
      log_sigma_head(arch.hidden.back(), arch.latent_dim, Activation::identity, false),
      dropout_rate(dropout),
      arch_(arch) {
  if (arch.hidden.empty()) throw DomainError("EncoderModel: need at least one hidden layer");
}

EncoderModel::EncoderModel(const EncoderArch& arch, double dropout, RandomStream& init)
    : EncoderModel(arch, dropout) {
  trunk.initialize(init);
  mu_head.initialize(init);
  log_sigma_head.initialize(init);
}

EncoderModel::Forward EncoderModel::forward(const Matrix& x, RandomStream* dropout_stream) const {
  Forward f;
  DropoutContext ctx;
  if (mode == Mode::training) ctx = {dropout_rate, dropout_stream};
  f.hidden = trunk.forward(x, &f.trunk_cache, ctx);
  f.mu = mu_head.weight * f.hidden;
  f.mu.colwise() += mu_head.bias.col(0);
  f.log_sigma = log_sigma_head.weight * f.hidden;
  f.log_sigma.colwise() += log_sigma_head.bias.col(0);
  f.sigma = f.log_sigma.array().exp().max(kSigmaMin).matrix();
  return f;
}

void EncoderModel::backward(const Forward& f, const Matrix& d_mu, const Matrix& d_sigma,
                            EncoderModel& grad) const {
  // d sigma / d log_sigma = sigma where unclipped, zero at the floor.
  const Matrix d_log_sigma =
      (d_sigma.array() * f.sigma.array() *
       (f.log_sigma.array().exp() > kSigmaMin).cast<double>())
          .matrix();
  grad.mu_head.weight.noalias() += d_mu * f.hidden.transpose();
  grad.mu_head.bias.col(0) += d_mu.rowwise().sum();
  grad.log_sigma_head.weight.noalias() += d_log_sigma * f.hidden.transpose();
  grad.log_sigma_head.bias.col(0) += d_log_sigma.rowwise().sum();
  const Matrix d_hidden =
      mu_head.weight.transpose() * d_mu + log_sigma_head.weight.transpose() * d_log_sigma;
  trunk.backward(f.trunk_cache, d_hidden, &grad.trunk);
}

LatentPosterior EncoderModel::encode(const Vector& embedding, const std::string& evidence_id) const {
  if (embedding.size() != arch_.input_dim)
    throw DomainError("encode: embedding has dimension " + std::to_string(embedding.size()) +
                      ", expected " + std::to_string(arch_.input_dim));
  if (!embedding.allFinite()) throw DomainError("encode: non-finite embedding");
  EncoderModel::Forward f;
  {
    // Inference never applies dropout, regardless of mode.
    Mlp::Cache cache;
    f.hidden = trunk.forward(embedding, &cache);
  }
  Vector mu = mu_head.weight * f.hidden.col(0) + mu_head.bias.col(0);
  Vector log_sigma = log_sigma_head.weight * f.hidden.col(0) + log_sigma_head.bias.col(0);
  return make_posterior(evidence_id, std::move(mu), log_sigma.array().exp().matrix());
}

EncoderModel EncoderModel::zeros_like() const {
  EncoderModel z = *this;
  z.trunk.set_zero();
  z.mu_head.weight.setZero();
  z.mu_head.bias.setZero();
  z.log_sigma_head.weight.setZero();
  z.log_sigma_head.bias.setZero();
  return z;
}

std::vector<Matrix*> EncoderModel::parameters() {
  std::vector<Matrix*> out;
  trunk.collect_parameters(out);
  out.push_back(&mu_head.weight);
  out.push_back(&mu_head.bias);
  out.push_back(&log_sigma_head.weight);
  out.push_back(&log_sigma_head.bias);
  return out;
}

std::vector<const Matrix*> EncoderModel::parameters() const {
  std::vector<const Matrix*> out;
  trunk.collect_parameters(out);
  out.push_back(&mu_head.weight);
  out.push_back(&mu_head.bias);
  out.push_back(&log_sigma_head.weight);
  out.push_back(&log_sigma_head.bias);
  return out;
}

}  // namespace lpf::nn
