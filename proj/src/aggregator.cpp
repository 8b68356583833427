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

namespace {

Mlp make_scorer(Eigen::Index in, const std::vector<Eigen::Index>& hidden, bool dropout_first) {
  std::vector<Eigen::Index> dims{in};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(1);
  std::vector<std::size_t> drop;
  if (dropout_first && !hidden.empty()) drop.push_back(0);
  return Mlp(dims, /*relu_output=*/false, drop);
}

struct PairIndex {
  Eigen::Index i, j;
};

std::vector<PairIndex> upper_pairs(Eigen::Index n) {
  std::vector<PairIndex> pairs;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) pairs.push_back({i, j});
  return pairs;
}

// Forward state shared by inference and training.
struct AggregatorPass {
  Mlp::Cache quality_cache, consistency_cache, weight_cache;
  std::vector<PairIndex> pairs;
  Matrix quality_pre, consistency_pre, weight_pre;
  LatentAggregation out;
};

AggregatorPass run_aggregator(const AggregatorModel& m, std::span<const LatentPosterior> posts,
                              RandomStream* dropout_stream) {
  const auto n = static_cast<Eigen::Index>(posts.size());
  if (n == 0) throw NoEvidence("aggregate: no posteriors");
  const Eigen::Index d = posts.front().mu.size();
  if (d != m.arch().latent_dim) throw DomainError("aggregate: latent dimension mismatch");
  DropoutContext ctx;
  if (m.mode == Mode::training) ctx = {m.dropout_rate, dropout_stream};

  AggregatorPass pass;
  Matrix qf(2 * d + 1, n);
  for (Eigen::Index i = 0; i < n; ++i) qf.col(i) = AggregatorModel::quality_features(posts[i]);
  pass.quality_pre = m.quality_net.forward(qf, &pass.quality_cache, ctx);
  pass.out.quality = pass.quality_pre.row(0).transpose().unaryExpr([](double x) { return sigmoid(x); });

  pass.out.consistency = Matrix::Identity(n, n);
  pass.pairs = upper_pairs(n);
  if (!pass.pairs.empty()) {
    Matrix cf(2 * d, static_cast<Eigen::Index>(pass.pairs.size()));
    for (std::size_t k = 0; k < pass.pairs.size(); ++k)
      cf.col(static_cast<Eigen::Index>(k)) =
          AggregatorModel::consistency_features(posts[pass.pairs[k].i], posts[pass.pairs[k].j]);
    pass.consistency_pre = m.consistency_net.forward(cf, &pass.consistency_cache, ctx);
    for (std::size_t k = 0; k < pass.pairs.size(); ++k) {
      const double c = sigmoid(pass.consistency_pre(0, static_cast<Eigen::Index>(k)));
      pass.out.consistency(pass.pairs[k].i, pass.pairs[k].j) = c;
      pass.out.consistency(pass.pairs[k].j, pass.pairs[k].i) = c;
    }
  }
  pass.out.mean_consistency = Vector::Ones(n);
  if (n > 1)
    pass.out.mean_consistency =
        ((pass.out.consistency.rowwise().sum().array() - 1.0) / static_cast<double>(n - 1)).matrix();

  Matrix wf(2, n);
  wf.row(0) = pass.out.quality.transpose();
  wf.row(1) = pass.out.mean_consistency.transpose();
  pass.weight_pre = m.weight_net.forward(wf, &pass.weight_cache);
  pass.out.raw_weights = pass.weight_pre.row(0).transpose().unaryExpr([](double x) { return softplus(x); });
  pass.out.weights = softmax(pass.out.raw_weights);

  pass.out.z = Vector::Zero(d);
  pass.out.log_variance = Vector::Zero(d);
  for (Eigen::Index i = 0; i < n; ++i) {
    pass.out.z += pass.out.weights(i) * posts[i].mu;
    pass.out.log_variance += pass.out.weights(i) * posts[i].log_variance();
  }
  return pass;
}

}  // namespace

AggregatorModel::AggregatorModel(const AggregatorArch& arch, double dropout)
    : quality_net(make_scorer(2 * arch.latent_dim + 1, arch.quality_hidden, true)),
      consistency_net(make_scorer(2 * arch.latent_dim, arch.consistency_hidden, true)),
      weight_net(make_scorer(2, arch.weight_hidden, false)),
      dropout_rate(dropout),
      arch_(arch) {}

AggregatorModel::AggregatorModel(const AggregatorArch& arch, double dropout, RandomStream& init)
    : AggregatorModel(arch, dropout) {
  quality_net.initialize(init);
  consistency_net.initialize(init);
  weight_net.initialize(init);
}

Vector AggregatorModel::quality_features(const LatentPosterior& p) {
  const Eigen::Index d = p.mu.size();
  Vector f(2 * d + 1);
  f << p.mu, p.log_sigma(), p.mean_sigma();
  return f;
}

Vector AggregatorModel::consistency_features(const LatentPosterior& a, const LatentPosterior& b) {
  const Eigen::Index d = a.mu.size();
  Vector f(2 * d);
  f << (a.mu - b.mu).cwiseAbs(), (a.log_variance() - b.log_variance()).cwiseAbs();
  return f;
}

double AggregatorModel::quality_score(const LatentPosterior& p) const {
  return sigmoid(quality_net.forward(quality_features(p))(0, 0));
}

double AggregatorModel::consistency_score(const LatentPosterior& a, const LatentPosterior& b) const {
  return sigmoid(consistency_net.forward(consistency_features(a, b))(0, 0));
}

LatentAggregation AggregatorModel::aggregate(std::span<const LatentPosterior> posteriors) const {
  return run_aggregator(*this, posteriors, nullptr).out;
}

double AggregatorModel::entity_loss(std::span<const LatentPosterior> posts, const DecoderModel& decoder,
                                    std::size_t predicate, int label, AggregatorModel* grad,
                                    RandomStream* dropout_stream, Vector* probs_out) const {
  AggregatorPass pass = run_aggregator(*this, posts, dropout_stream);
  const DecoderModel::Forward dec = decoder.forward(pass.out.z, predicate);
  const Eigen::Index k = dec.probs.rows();
  if (label < 0 || label >= k) throw DomainError("entity_loss: label outside domain");
  if (probs_out) *probs_out = dec.probs.col(0);
  const double loss = -std::log(std::max(dec.probs(label, 0), 1e-300));
  if (!grad) return loss;

  const auto n = static_cast<Eigen::Index>(posts.size());
  Matrix d_logits = dec.probs;
  d_logits(label, 0) -= 1.0;
  const Vector d_z = decoder.backward(dec, d_logits, nullptr).col(0);

  // z = sum w_i mu_i ; w = softmax(r) ; r = softplus(pre)
  Vector d_w(n);
  for (Eigen::Index i = 0; i < n; ++i) d_w(i) = d_z.dot(posts[i].mu);
  const Vector& w = pass.out.weights;
  const Vector d_r = w.cwiseProduct((d_w.array() - w.dot(d_w)).matrix());
  Matrix d_weight_pre(1, n);
  for (Eigen::Index i = 0; i < n; ++i) d_weight_pre(0, i) = d_r(i) * sigmoid(pass.weight_pre(0, i));
  const Matrix d_wf = weight_net.backward(pass.weight_cache, d_weight_pre, &grad->weight_net);

  Matrix d_quality_pre(1, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double q = pass.out.quality(i);
    d_quality_pre(0, i) = d_wf(0, i) * q * (1.0 - q);
  }
  quality_net.backward(pass.quality_cache, d_quality_pre, &grad->quality_net);

  if (!pass.pairs.empty()) {
    const double inv = 1.0 / static_cast<double>(n - 1);
    Matrix d_cons_pre(1, static_cast<Eigen::Index>(pass.pairs.size()));
    for (std::size_t p = 0; p < pass.pairs.size(); ++p) {
      const auto [i, j] = pass.pairs[p];
      const double c = pass.out.consistency(i, j);
      d_cons_pre(0, static_cast<Eigen::Index>(p)) = (d_wf(1, i) + d_wf(1, j)) * inv * c * (1.0 - c);
    }
    consistency_net.backward(pass.consistency_cache, d_cons_pre, &grad->consistency_net);
  }
  return loss;
}

AggregatorModel AggregatorModel::zeros_like() const {
  AggregatorModel z = *this;
  z.quality_net.set_zero();
  z.consistency_net.set_zero();
  z.weight_net.set_zero();
  return z;
}

std::vector<Matrix*> AggregatorModel::parameters() {
  std::vector<Matrix*> out;
  quality_net.collect_parameters(out);
  consistency_net.collect_parameters(out);
  weight_net.collect_parameters(out);
  return out;
}

std::vector<const Matrix*> AggregatorModel::parameters() const {
  std::vector<const Matrix*> out;
  quality_net.collect_parameters(out);
  consistency_net.collect_parameters(out);
  weight_net.collect_parameters(out);
  return out;
}

}  // namespace lpf::nn
