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


#include "lpf/pipeline.hpp"

namespace lpf {

UncertaintyDecomposition uncertainty_decompose(std::span<const nn::LatentPosterior> posteriors,
                                               const std::string& predicate,
                                               const nn::CategoricalDecoder& decoder, int n_samples,
                                               RandomStream& stream) {
  if (posteriors.empty()) throw NoEvidence("uncertainty_decompose: no posteriors");
  if (n_samples < 2) throw DomainError("uncertainty_decompose: need at least two samples");
  const auto k = static_cast<Eigen::Index>(decoder.domain(predicate).size());
  Matrix p(k, static_cast<Eigen::Index>(posteriors.size()) * n_samples);
  Eigen::Index col = 0;
  for (std::size_t i = 0; i < posteriors.size(); ++i) {
    RandomStream s = stream.split(i);
    for (int m = 0; m < n_samples; ++m) p.col(col++) = decoder.decode(nn::reparameterize(posteriors[i], s), predicate);
  }
  const double n = static_cast<double>(p.cols());
  const Vector mean = p.rowwise().sum() / n;
  UncertaintyDecomposition u;
  u.epistemic = (p.colwise() - mean).array().square().rowwise().sum().matrix() / n;
  u.aleatoric = (p.array() * (1.0 - p.array())).rowwise().sum().matrix() / n;
  // Bernoulli variance of the pooled predictive, computed independently of
  // the two components.
  u.total = (mean.array() * (1.0 - mean.array())).matrix();
  return u;
}

}  // namespace lpf
