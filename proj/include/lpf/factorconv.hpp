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


// Latent posterior -> weighted soft likelihood factor, by Monte Carlo
// decoding, optional temperature scaling and an uncertainty-penalized weight.

#pragma once

#include <string>
#include <vector>

#include "lpf/neuralnets.hpp"

namespace lpf {

inline constexpr double kEpsilonSmall = 1e-8;
inline constexpr double kProbabilityFloor = 1e-12;

enum class WeightMode {
  confidence_times_calibration,  // base confidence * 1/(1+exp(alpha*mean sigma))
  calibration_only,              // 1/(1+exp(alpha*mean sigma))
};

struct ConversionOptions {
  int n_samples = 16;
  double temperature = 1.0;
  double alpha = 2.0;
  double epsilon_small = kEpsilonSmall;
  WeightMode weight_mode = WeightMode::confidence_times_calibration;
};

struct FactorMetadata {
  int n_samples = 0;
  double temperature = 1.0;
  double mean_sigma = 0.0;
  double base_confidence = 0.0;
};

struct SoftFactor {
  std::string evidence_id;
  std::vector<std::string> variables;  // a single predicate in practice
  std::string factor_type = "likelihood";
  std::vector<std::string> domain;
  Vector potential;  // aligned with domain
  double weight = 1.0;
  FactorMetadata metadata;
};

/// v / max(sum v, eps); entries must be nonnegative.
Vector normalize(const Vector& v, double eps = kEpsilonSmall);

/// 1 / (1 + exp(alpha * mean(sigma))).
double calibration_weight(const Vector& sigma, double alpha);

/// p^(1/T) renormalized; identity at T = 1.
Vector temperature_scale(const Vector& dist, double temperature, double eps = kEpsilonSmall);

/// p^w renormalized after flooring entries at kProbabilityFloor; identity at w = 1.
Vector apply_weight(const Vector& dist, double weight, double eps = kEpsilonSmall);

/// ceil(0.25 / eps^2), the sample count whose worst-case standard error is eps.
int mc_sample_size_for_error(double eps);

/// Mean of n_samples decoded reparameterized draws, then temperature and weight.
SoftFactor convert(const nn::LatentPosterior& posterior, const std::string& predicate,
                   const nn::CategoricalDecoder& decoder, const ConversionOptions& options,
                   RandomStream& stream);

/// Decoded mean over n_samples draws, without temperature or weighting.
Vector mc_decode(const nn::LatentPosterior& posterior, const std::string& predicate,
                 const nn::CategoricalDecoder& decoder, int n_samples, RandomStream& stream);

}  // namespace lpf
