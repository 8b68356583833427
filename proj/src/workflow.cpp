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


#include <algorithm>
#include <map>

#include "lpf/pipeline.hpp"

namespace lpf {

namespace {

int domain_index(const std::string& value) {
  const auto it = std::find(data::kDomain.begin(), data::kDomain.end(), value);
  if (it == data::kDomain.end()) throw DomainError("unknown compliance value " + value);
  return static_cast<int>(it - data::kDomain.begin());
}

std::map<std::string, const data::SyntheticEntity*> entity_index(const data::Dataset& d) {
  std::map<std::string, const data::SyntheticEntity*> out;
  for (const auto& e : d.entities) out[e.entity_id] = &e;
  return out;
}

void append_evidence(const data::Dataset& d, const store::EvidenceStore& st, const std::vector<std::string>& ids,
                     std::vector<nn::EvidenceExample>& out) {
  const auto index = entity_index(d);
  for (const auto& id : ids) {
    const auto it = index.find(id);
    if (it == index.end()) throw NotFound("dataset: split lists unknown entity " + id);
    for (const auto& eid : it->second->evidence_ids) {
      const store::EvidenceRecord& r = st.record(eid);
      if (!r.supports_value) continue;
      out.push_back({st.embedding(eid), r.predicate, domain_index(*r.supports_value)});
    }
  }
}

}  // namespace

nn::EvidenceSplits evidence_splits(const data::Dataset& d, const store::EvidenceStore& st) {
  nn::EvidenceSplits sp;
  sp.predicates = {{data::kPredicate, data::kDomain}};
  append_evidence(d, st, d.train, sp.train);
  append_evidence(d, st, d.val, sp.val);
  return sp;
}

std::vector<nn::EntityExample> entity_examples(const data::Dataset& d, const store::EvidenceStore& st,
                                               const std::vector<std::string>& entity_ids) {
  const auto index = entity_index(d);
  std::vector<nn::EntityExample> out;
  for (const auto& id : entity_ids) {
    const auto it = index.find(id);
    if (it == index.end()) throw NotFound("dataset: split lists unknown entity " + id);
    nn::EntityExample e;
    e.predicate = data::kPredicate;
    e.label = it->second->label;
    for (const auto& eid : it->second->evidence_ids) e.embeddings.push_back(st.embedding(eid));
    out.push_back(std::move(e));
  }
  return out;
}

CalibrationChoice select_calibration(const Orchestrator& orch, const data::Dataset& d, const ModelSet& models,
                                     const QueryOptions& base, const std::vector<double>& alphas,
                                     const std::vector<double>& temperatures, const std::string& now) {
  if (alphas.empty() || temperatures.empty()) throw DomainError("select_calibration: empty grid");
  CalibrationChoice best;
  bool have = false;
  for (double a : alphas)
    for (double t : temperatures) {
      QueryOptions o = base;
      o.alpha = a;
      o.temperature = t;
      const EvaluationRun run = evaluate(orch, d, d.val, o, models, now, false);
      if (!have || run.metrics.ece < best.val_ece) {
        best = {a, t, run.metrics.ece, run.metrics.nll};
        have = true;
      }
    }
  return best;
}

nlohmann::json to_json(const CalibrationChoice& c) {
  return {{"alpha", c.alpha}, {"temperature", c.temperature}, {"val_ece", c.val_ece}, {"val_nll", c.val_nll}};
}

CalibrationChoice calibration_from_json(const nlohmann::json& j) {
  try {
    return {j.at("alpha").get<double>(), j.at("temperature").get<double>(), j.value("val_ece", 0.0),
            j.value("val_nll", 0.0)};
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(std::string("calibration: ") + e.what());
  }
}

}  // namespace lpf
