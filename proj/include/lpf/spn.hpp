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


// Sum-product network over categorical variables with weighted likelihood
// attachments and log-space marginal queries.

#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lpf/factorconv.hpp"

namespace lpf::spn {

enum class NodeKind { sum, product, leaf, likelihood };

struct SpnNode {
  NodeKind kind = NodeKind::leaf;
  std::vector<std::size_t> children;  // indices into the node table
  std::vector<double> weights;        // sum nodes only
  std::string variable;               // leaf / likelihood nodes
  Vector log_values;                  // leaf: log prior; likelihood: log potential
};

struct PriorSpec {
  std::string predicate;
  std::vector<std::string> domain;
  Vector probabilities;
};

PriorSpec uniform_prior(const std::string& predicate, std::vector<std::string> domain);

struct ValidationReport {
  bool ok = true;
  std::string message;
  std::vector<std::size_t> path;  // root to offending node
};

struct AttachedFactor {
  std::string evidence_id;
  std::string variable;
  double weight = 1.0;
  Vector raw_potential;
  Vector weighted_potential;
};

struct MarginalResult {
  std::vector<std::string> domain;
  Vector probabilities;
  double log_z = 0.0;              // log normalizer including the prior
  std::size_t operations = 0;      // scalar additions performed
};

// Immutable structure plus a per-view list of attachments and evidence. Every
// mutating operation returns a new view sharing the structure.
class SpnCircuit {
 public:
  using Registry = std::map<std::string, std::vector<std::string>>;

  SpnCircuit(std::vector<SpnNode> nodes, std::size_t root, Registry variables);

  const std::vector<SpnNode>& nodes() const { return structure_->nodes; }
  std::size_t root() const { return structure_->root; }
  const Registry& variables() const { return structure_->variables; }
  const ValidationReport& validation() const { return structure_->report; }
  const std::vector<AttachedFactor>& factors() const { return factors_; }
  const std::map<std::string, std::size_t>& evidence() const { return evidence_; }

 private:
  struct Structure {
    std::vector<SpnNode> nodes;
    std::size_t root = 0;
    Registry variables;
    ValidationReport report;
  };

  std::shared_ptr<const Structure> structure_;
  std::vector<AttachedFactor> factors_;
  std::map<std::string, Vector> log_likelihood_;  // summed weighted log potentials
  std::map<std::string, std::size_t> evidence_;
  std::size_t attach_operations_ = 0;

  friend SpnCircuit attach_likelihood(const SpnCircuit&, const SoftFactor&);
  friend SpnCircuit set_evidence(const SpnCircuit&, const std::string&, const std::string&);
  friend struct MarginalEngine;
  friend MarginalResult marginal(const SpnCircuit&, const std::string&);
};

/// Root(sum, 1.0) -> Product -> Leaf(prior).
SpnCircuit build_single_predicate(const PriorSpec& prior);

/// Root(sum, 1.0) -> Product -> one leaf per independent predicate.
SpnCircuit build_product(const std::vector<PriorSpec>& priors);

ValidationReport validate(const SpnCircuit& circuit);

/// Power-weights the potential and multiplies it into its variable.
SpnCircuit attach_likelihood(const SpnCircuit& circuit, const SoftFactor& factor);

SpnCircuit set_evidence(const SpnCircuit& circuit, const std::string& variable,
                        const std::string& value);

MarginalResult marginal(const SpnCircuit& circuit, const std::string& variable);

bool covers(const SpnCircuit& circuit, const std::string& predicate);

}  // namespace lpf::spn
