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


#include <cmath>
#include <cstdio>
#include <map>

#include "lpf/pipeline.hpp"

namespace lpf {

EvaluationRun evaluate(const Orchestrator& orch, const data::Dataset& d, const std::vector<std::string>& entity_ids,
                       const QueryOptions& options, const ModelSet& models, const std::string& now,
                       bool with_baseline) {
  std::map<std::string, const data::SyntheticEntity*> by_id;
  for (const auto& e : d.entities) by_id[e.entity_id] = &e;
  std::map<std::string, double> credibility;
  for (const auto& r : d.evidence) credibility[r.evidence_id] = r.credibility;

  EvaluationRun run;
  std::vector<Prediction> baseline;
  std::vector<double> runtimes;
  std::size_t n_factors = 0;
  double weight_sum = 0.0, evidence_sum = 0.0;
  for (const auto& id : entity_ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw NotFound("evaluate: unknown entity " + id);
    const int label = it->second->label;
    const QueryResult r = orch.handle_query(id, data::kPredicate, options, now);
    run.predictions.push_back({r.distribution, label});
    runtimes.push_back(r.execution_time_ms);
    evidence_sum += static_cast<double>(r.evidence_chain.size());
    for (const auto& f : r.factors) {
      weight_sum += f.weight;
      ++n_factors;
    }
    double cred = 0.0;
    for (const auto& e : r.evidence_chain) cred += credibility.at(e);
    run.mean_credibility.push_back(r.evidence_chain.empty() ? 0.0 : cred / static_cast<double>(r.evidence_chain.size()));

    if (with_baseline) {
      if (r.source != ResultSource::inference) {
        baseline.push_back({r.distribution, label});
        continue;
      }
      std::vector<nn::LatentPosterior> posts;
      for (const auto& e : r.evidence_chain) posts.push_back(models.encoder->encode(orch.store().embedding(e), e));
      RandomStream s(options.seed, query_stream_id(id, data::kPredicate));
      baseline.push_back(
          {aggregate_vae_predictions(posts, data::kPredicate, *models.decoder, options.n_samples, s), label});
    }
  }
  run.metrics = compute_metrics(run.predictions, runtimes);
  if (with_baseline) run.baseline = compute_metrics(baseline);
  run.mean_factor_weight = n_factors ? weight_sum / static_cast<double>(n_factors) : 0.0;
  run.mean_evidence_used = entity_ids.empty() ? 0.0 : evidence_sum / static_cast<double>(entity_ids.size());
  return run;
}

std::string to_string(AblationAxis a) {
  switch (a) {
    case AblationAxis::n_samples: return "n_samples";
    case AblationAxis::temperature: return "temperature";
    case AblationAxis::alpha: return "alpha";
    case AblationAxis::top_k: return "top_k";
  }
  return "unknown";
}

AblationAxis parse_axis(const std::string& s) {
  for (auto a : {AblationAxis::n_samples, AblationAxis::temperature, AblationAxis::alpha, AblationAxis::top_k})
    if (to_string(a) == s) return a;
  throw DomainError("unknown ablation axis '" + s + "'");
}

std::vector<double> default_grid(AblationAxis a) {
  switch (a) {
    case AblationAxis::n_samples: return {4, 8, 16, 32};
    case AblationAxis::temperature: return {0.8, 1.0, 1.2, 1.5};
    case AblationAxis::alpha: return {0.1, 1.0, 2.0, 5.0};
    case AblationAxis::top_k: return {1, 3, 5, 10, 20};
  }
  return {};
}

namespace {

QueryOptions with_value(QueryOptions o, AblationAxis axis, double v) {
  switch (axis) {
    case AblationAxis::n_samples:
      if (v < 1 || v != std::floor(v)) throw DomainError("ablation: n_samples must be a positive integer");
      o.n_samples = static_cast<int>(v);
      break;
    case AblationAxis::temperature:
      if (!(v > 0)) throw DomainError("ablation: temperature must be positive");
      o.temperature = v;
      break;
    case AblationAxis::alpha:
      if (!(v >= 0)) throw DomainError("ablation: alpha must be nonnegative");
      o.alpha = v;
      break;
    case AblationAxis::top_k:
      if (v < 1 || v != std::floor(v)) throw DomainError("ablation: top_k must be a positive integer");
      o.top_k = static_cast<std::size_t>(v);
      break;
  }
  return o;
}

}  // namespace

std::vector<AblationRow> run_ablation(AblationAxis axis, const std::vector<double>& values, const QueryOptions& fixed,
                                      const Orchestrator& orch, const data::Dataset& d,
                                      const std::vector<std::string>& entity_ids, const ModelSet& models,
                                      const std::vector<std::uint64_t>& seeds, const std::string& now) {
  if (seeds.empty()) throw DomainError("ablation: empty seed list");
  std::vector<QueryOptions> grid;
  for (double v : values) grid.push_back(with_value(fixed, axis, v));
  std::vector<AblationRow> rows;
  for (std::size_t i = 0; i < values.size(); ++i)
    for (std::uint64_t seed : seeds) {
      QueryOptions o = grid[i];
      o.seed = seed;
      const EvaluationRun run = evaluate(orch, d, entity_ids, o, models, now, false);
      rows.push_back({values[i], seed, run.metrics, run.mean_factor_weight, run.mean_evidence_used});
    }
  return rows;
}

nlohmann::json ablation_json(AblationAxis axis, const std::vector<AblationRow>& rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows)
    arr.push_back({{"axis", to_string(axis)},
                   {"value", r.value},
                   {"seed", r.seed},
                   {"mean_factor_weight", r.mean_factor_weight},
                   {"mean_evidence_used", r.mean_evidence_used},
                   {"metrics", to_json(r.metrics)}});
  return arr;
}

std::string ablation_table(AblationAxis axis, const std::vector<AblationRow>& rows) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-12s %6s %9s %9s %9s %9s %9s %9s %9s\n", to_string(axis).c_str(), "seed",
                "accuracy", "macro_f1", "ece", "nll", "brier", "weight", "evidence");
  std::string out = buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-12g %6llu %9.4f %9.4f %9.4f %9.4f %9.4f %9.4f %9.2f\n", r.value,
                  static_cast<unsigned long long>(r.seed), r.metrics.accuracy, r.metrics.macro_f1, r.metrics.ece,
                  r.metrics.nll, r.metrics.brier, r.mean_factor_weight, r.mean_evidence_used);
    out += buf;
  }
  return out;
}

}  // namespace lpf
