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


// Query orchestration over both aggregation variants, predictive uncertainty
// decomposition, the synthetic compliance corpus, evaluation metrics and the
// ablation harness.

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lpf/evidence_store.hpp"
#include "lpf/factorconv.hpp"
#include "lpf/ledger.hpp"
#include "lpf/neuralnets.hpp"
#include "lpf/spn.hpp"

namespace lpf {

enum class Variant { spn, learned };

std::string to_string(Variant v);
/// Accepts "spn" and "learned"; throws DomainError otherwise.
Variant parse_variant(const std::string& s);

struct QueryOptions {
  std::size_t top_k = 5;
  int n_samples = 16;
  double temperature = 1.0;
  double alpha = 2.0;
  Variant variant = Variant::spn;
  std::uint64_t seed = 0;
  double staleness_days = 30.0;
  std::optional<std::string> query_text;
};

enum class ResultSource { canonical, inference, no_evidence };

std::string to_string(ResultSource s);

struct QueryResult {
  std::vector<std::string> domain;
  Vector distribution;
  std::string top_value;
  double confidence = 0.0;
  ResultSource source = ResultSource::no_evidence;
  std::vector<std::string> evidence_chain;
  std::string record_id;  // empty unless a ledger record was written
  double execution_time_ms = 0.0;
  std::vector<SoftFactor> factors;  // SPN variant
  Vector aggregation_weights;       // learned variant
  bool used_fallback = false;       // circuit did not cover the predicate
};

struct ModelSet {
  const nn::PosteriorEncoder* encoder = nullptr;
  const nn::CategoricalDecoder* decoder = nullptr;
  const nn::LatentAggregator* aggregator = nullptr;  // required for the learned variant
  std::map<std::string, std::string> versions;
};

/// Mean over evidence of each item's Monte Carlo decoded distribution.
Vector aggregate_vae_predictions(std::span<const nn::LatentPosterior> posteriors, const std::string& predicate,
                                 const nn::CategoricalDecoder& decoder, int n_samples, RandomStream& stream);

/// Stream id of a query, a hash of (entity, predicate).
std::uint64_t query_stream_id(const std::string& entity_id, const std::string& predicate);

class Orchestrator {
 public:
  /// Circuits are compiled once per prior; predicates without a circuit fall
  /// back to posterior averaging in the SPN variant.
  Orchestrator(const store::EvidenceStore& store, ModelSet models, std::vector<spn::PriorSpec> priors,
               ledger::Ledger* ledger = nullptr);

  QueryResult handle_query(const std::string& entity_id, const std::string& predicate,
                           const QueryOptions& options, const std::string& now) const;

  /// Inference on an explicit evidence list, without the canonical path or a
  /// ledger write.
  QueryResult infer(const std::string& entity_id, const std::string& predicate,
                    const std::vector<std::string>& evidence_ids, const QueryOptions& options) const;

  /// Re-executes a recorded query from its stored evidence chain and
  /// hyperparameters.
  QueryResult reexecute(const ledger::ProvenanceRecord& record) const;

  const spn::SpnCircuit* circuit(const std::string& predicate) const;
  const store::EvidenceStore& store() const { return store_; }

 private:
  const store::EvidenceStore& store_;
  ModelSet models_;
  std::map<std::string, spn::SpnCircuit> circuits_;
  ledger::Ledger* ledger_;
};

nlohmann::json hyperparameters_json(const QueryOptions& o, std::uint64_t stream_id);
QueryOptions options_from_hyperparameters(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Predictive uncertainty.

struct UncertaintyDecomposition {
  Vector total;      // per domain value
  Vector epistemic;  // variance of p_k across latent samples
  Vector aleatoric;  // mean of p_k (1 - p_k)
};

UncertaintyDecomposition uncertainty_decompose(std::span<const nn::LatentPosterior> posteriors,
                                               const std::string& predicate,
                                               const nn::CategoricalDecoder& decoder, int n_samples,
                                               RandomStream& stream);

// ---------------------------------------------------------------------------
// Synthetic compliance corpus.

namespace data {

inline const std::string kPredicate = "compliance_level";
inline const std::vector<std::string> kDomain{"low", "medium", "high"};

struct DatasetOptions {
  std::uint64_t seed = 42;
  std::size_t n_entities = 900;
  std::size_t evidence_per_entity = 5;
  double noise = 0.1;       // narrative evidence supporting an adjacent label
  double ambiguity = 0.2;   // narratives worded with a phrase shared by two adjacent labels
  double registry = 0.6;    // exact registry facts that rule out one extreme label
};

struct SyntheticEntity {
  std::string entity_id;
  int label = 0;  // index into kDomain
  int year = 2020;
  nlohmann::json attributes;  // compliance schema row
  std::vector<std::string> evidence_ids;
};

struct Dataset {
  DatasetOptions options;
  std::vector<SyntheticEntity> entities;
  std::vector<store::EvidenceRecord> evidence;
  std::vector<std::string> train, val, test;  // entity ids
};

Dataset generate_compliance_dataset(const DatasetOptions& options);

/// entities.jsonl, evidence.jsonl, splits.json in dir.
void write_dataset(const Dataset& d, const std::string& dir);
Dataset read_dataset(const std::string& dir);

/// Beta(a, b) for integer shape parameters via uniform order statistics.
double sample_beta_integer(int a, int b, RandomStream& stream);

}  // namespace data

// ---------------------------------------------------------------------------
// Metrics.

struct Prediction {
  Vector distribution;
  int label = 0;
};

struct SelectiveRow {
  double threshold = 0.0;
  std::size_t accepted = 0;
  double coverage = 0.0;
  double accuracy = 0.0;  // on accepted; 0 when none accepted
};

struct CredibilityStratum {
  std::string name;
  std::size_t count = 0;
  double accuracy = 0.0;
};

struct MetricsReport {
  std::size_t n = 0;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double weighted_f1 = 0.0;
  double nll = 0.0;
  double brier = 0.0;
  double ece = 0.0;
  int ece_bins = 10;
  Eigen::MatrixXi confusion;  // rows: true label, cols: predicted
  double confidence_mean = 0.0;
  double confidence_std = 0.0;
  std::vector<SelectiveRow> selective;
  double runtime_mean_ms = 0.0;
  double runtime_max_ms = 0.0;
};

inline constexpr double kNllClamp = 1e-12;

MetricsReport compute_metrics(std::span<const Prediction> predictions, std::span<const double> runtimes_ms = {},
                              int ece_bins = 10);

double expected_calibration_error(std::span<const Prediction> predictions, int bins = 10);

/// Accuracy within credibility bands >0.9, 0.7-0.9, <0.7 of mean evidence
/// credibility.
std::vector<CredibilityStratum> stratify_by_credibility(std::span<const Prediction> predictions,
                                                        std::span<const double> mean_credibility);

nlohmann::json to_json(const MetricsReport& m);

// ---------------------------------------------------------------------------
// Evaluation and ablation.

struct EvaluationRun {
  MetricsReport metrics;
  MetricsReport baseline;      // posterior averaging on the same models
  double mean_factor_weight = 0.0;
  double mean_evidence_used = 0.0;
  std::vector<Prediction> predictions;
  std::vector<double> mean_credibility;
};

/// Queries every entity in entity_ids; ledger appends happen in list order.
EvaluationRun evaluate(const Orchestrator& orch, const data::Dataset& d, const std::vector<std::string>& entity_ids,
                       const QueryOptions& options, const ModelSet& models, const std::string& now,
                       bool with_baseline = true);

enum class AblationAxis { n_samples, temperature, alpha, top_k };

std::string to_string(AblationAxis a);
AblationAxis parse_axis(const std::string& s);
/// Default grid for the axis.
std::vector<double> default_grid(AblationAxis a);

struct AblationRow {
  double value = 0.0;
  std::uint64_t seed = 0;
  MetricsReport metrics;
  double mean_factor_weight = 0.0;
  double mean_evidence_used = 0.0;
};

std::vector<AblationRow> run_ablation(AblationAxis axis, const std::vector<double>& values,
                                      const QueryOptions& fixed, const Orchestrator& orch, const data::Dataset& d,
                                      const std::vector<std::string>& entity_ids, const ModelSet& models,
                                      const std::vector<std::uint64_t>& seeds, const std::string& now);

nlohmann::json ablation_json(AblationAxis axis, const std::vector<AblationRow>& rows);
std::string ablation_table(AblationAxis axis, const std::vector<AblationRow>& rows);

// ---------------------------------------------------------------------------
// Experiment workflow shared by the command line and the acceptance run.

/// Per-evidence training examples labelled by supports_value, from the train
/// and validation entity splits.
nn::EvidenceSplits evidence_splits(const data::Dataset& d, const store::EvidenceStore& st);

/// Entity-level examples for the aggregator stage.
std::vector<nn::EntityExample> entity_examples(const data::Dataset& d, const store::EvidenceStore& st,
                                               const std::vector<std::string>& entity_ids);

struct CalibrationChoice {
  double alpha = 2.0;
  double temperature = 1.0;
  double val_ece = 0.0;
  double val_nll = 0.0;
};

/// Grid search over (alpha, temperature) minimizing validation ECE; ties keep
/// the earlier grid point (alphas outer, temperatures inner).
CalibrationChoice select_calibration(const Orchestrator& orch, const data::Dataset& d, const ModelSet& models,
                                     const QueryOptions& base, const std::vector<double>& alphas,
                                     const std::vector<double>& temperatures, const std::string& now);

nlohmann::json to_json(const CalibrationChoice& c);
CalibrationChoice calibration_from_json(const nlohmann::json& j);

}  // namespace lpf
