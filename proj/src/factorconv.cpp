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


#include "lpf/factorconv.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace lpf {

Vector normalize(const Vector& v, double eps) {
  if (v.size() == 0) throw DomainError("normalize: empty vector");
  if ((v.array() < 0.0).any() || !v.allFinite()) throw DomainError("normalize: entries must be finite and nonnegative");
  return v / std::max(v.sum(), eps);
}

double calibration_weight(const Vector& sigma, double alpha) {
  if (sigma.size() == 0) throw DomainError("calibration_weight: empty sigma");
  if (alpha < 0.0) throw DomainError("calibration_weight: alpha must be nonnegative");
  return 1.0 / (1.0 + std::exp(alpha * sigma.mean()));
}

Vector temperature_scale(const Vector& dist, double temperature, double eps) {
  if (!(temperature > 0.0)) throw DomainError("temperature_scale: temperature must be positive");
  if (temperature == 1.0) return dist;
  const double top = dist.maxCoeff();
  if (!(top > 0.0)) throw DomainError("temperature_scale: distribution has no mass");
  // scaled by the largest entry so small temperatures cannot underflow the sum
  return normalize((dist / top).array().pow(1.0 / temperature).matrix(), eps);
}

Vector apply_weight(const Vector& dist, double weight, double eps) {
  if (!(weight > 0.0) || weight > 1.0) throw DomainError("apply_weight: weight must lie in (0, 1]");
  if (weight == 1.0) return dist;
  return normalize(dist.cwiseMax(kProbabilityFloor).array().pow(weight).matrix(), eps);
}

int mc_sample_size_for_error(double eps) {
  if (!(eps > 0.0)) throw DomainError("mc_sample_size_for_error: eps must be positive");
  return static_cast<int>(std::ceil(0.25 / (eps * eps)));
}

Vector mc_decode(const nn::LatentPosterior& posterior, const std::string& predicate,
                 const nn::CategoricalDecoder& decoder, int n_samples, RandomStream& stream) {
  if (n_samples < 1) throw DomainError("mc_decode: need at least one sample");
  const auto k = static_cast<Eigen::Index>(decoder.domain(predicate).size());
  Vector acc = Vector::Zero(k);
  for (int m = 0; m < n_samples; ++m) acc += decoder.decode(nn::reparameterize(posterior, stream), predicate);
  return acc / static_cast<double>(n_samples);
}

SoftFactor convert(const nn::LatentPosterior& posterior, const std::string& predicate,
                   const nn::CategoricalDecoder& decoder, const ConversionOptions& options,
                   RandomStream& stream) {
  if (!(options.temperature > 0.0)) throw DomainError("convert: temperature must be positive");
  SoftFactor f;
  f.evidence_id = posterior.evidence_id;
  f.variables = {predicate};
  f.domain = decoder.domain(predicate);
  const Vector mean = mc_decode(posterior, predicate, decoder, options.n_samples, stream);
  f.potential = normalize(temperature_scale(mean, options.temperature, options.epsilon_small),
                          options.epsilon_small);
  const double cw = calibration_weight(posterior.sigma, options.alpha);
  f.weight = options.weight_mode == WeightMode::confidence_times_calibration ? posterior.confidence * cw : cw;
  f.weight = std::clamp(f.weight, std::numeric_limits<double>::min(), 1.0);
  f.metadata = {options.n_samples, options.temperature, posterior.mean_sigma(), posterior.confidence};
  return f;
}

}  // namespace lpf
