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


// The tax-compliance walkthrough: fixed factor table, aggregation weights and
// mock models that reproduce the illustrative encoder and decoder outputs.

#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "lpf/neuralnets.hpp"
#include "lpf/pipeline.hpp"

namespace lpf::worked {

struct Fixture {
  std::string entity_id = "C0001";
  std::vector<std::string> domain{"low", "medium", "high"};
  std::vector<std::string> evidence_ids{"e1", "e2", "e3", "e4", "e5"};
  std::vector<double> credibility{0.95, 0.91, 0.87, 0.85, 0.93};
  // Already weighted potentials, one row per evidence item.
  std::vector<std::vector<double>> factors{{0.100, 0.223, 0.677},
                                           {0.092, 0.211, 0.697},
                                           {0.112, 0.238, 0.650},
                                           {0.125, 0.251, 0.624},
                                           {0.085, 0.198, 0.717}};
  std::vector<double> factor_weights{0.70, 0.73, 0.68, 0.66, 0.75};
  std::vector<double> prior{1.0 / 3, 1.0 / 3, 1.0 / 3};
  std::vector<double> aggregation_weights{0.217, 0.209, 0.203, 0.185, 0.223};
  std::vector<double> mu_first{0.82, 0.78, 0.75, 0.71, 0.85};
  std::vector<double> mean_sigma{0.105, 0.095, 0.1325, 0.1525, 0.085};

  // Published results and tolerances.
  std::vector<double> expected_marginal{0.0001, 0.0047, 0.9952};
  double marginal_tolerance = 2e-3;
  double expected_z_first = 0.814;
  double z_tolerance = 5e-4;
  std::string expected_top = "high";
};

nlohmann::json to_json(const Fixture& f);
Fixture fixture_from_json(const nlohmann::json& j);

/// Posterior of prior times the product of potentials, by direct enumeration.
Vector enumerate_posterior(const Fixture& f);

/// Emits a 64-dim posterior per fixture evidence id; mu starts at mu_first.
class FixtureEncoder : public nn::PosteriorEncoder {
 public:
  explicit FixtureEncoder(const Fixture& f) : fixture_(f) {}
  nn::LatentPosterior encode(const Vector& embedding, const std::string& evidence_id) const override;

 private:
  Fixture fixture_;
};

/// Softmax of z[0] times the log of the first sample distribution, so that
/// z[0] = 0.82 decodes to {0.048, 0.155, 0.797}.
class FixtureDecoder : public nn::CategoricalDecoder {
 public:
  FixtureDecoder(std::string predicate, std::vector<std::string> domain);
  bool has_predicate(const std::string& predicate) const override { return predicate == predicate_; }
  const std::vector<std::string>& domain(const std::string& predicate) const override;
  Vector decode(const Vector& z, const std::string& predicate) const override;

 private:
  std::string predicate_;
  std::vector<std::string> domain_;
};

/// Returns the fixture aggregation weights for any evidence set of the same size.
class FixtureAggregator : public nn::LatentAggregator {
 public:
  explicit FixtureAggregator(std::vector<double> weights) : weights_(std::move(weights)) {}
  nn::LatentAggregation aggregate(std::span<const nn::LatentPosterior> posteriors) const override;

 private:
  std::vector<double> weights_;
};

struct Check {
  std::string name;
  bool ok = false;
  std::string detail;
};

struct Report {
  Vector spn_marginal;
  Vector oracle_marginal;
  double log_z = 0.0;
  double z_first = 0.0;
  std::string spn_top;
  std::string learned_top;
  double runtime_ms = 0.0;
  std::vector<Check> checks;
  bool ok() const;
};

/// Replays the SPN marginal, the latent aggregation coordinate and a full
/// query under both variants through the orchestrator with mock models.
Report replay(const Fixture& f);

std::string format_report(const Report& r);

}  // namespace lpf::worked
