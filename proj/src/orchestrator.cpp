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
#include <chrono>

#include "lpf/digest.hpp"
#include "lpf/pipeline.hpp"

namespace lpf {

std::string to_string(Variant v) { return v == Variant::spn ? "spn" : "learned"; }

Variant parse_variant(const std::string& s) {
  if (s == "spn") return Variant::spn;
  if (s == "learned") return Variant::learned;
  throw DomainError("unknown variant '" + s + "' (expected spn or learned)");
}

std::string to_string(ResultSource s) {
  switch (s) {
    case ResultSource::canonical: return "canonical";
    case ResultSource::inference: return "inference";
    case ResultSource::no_evidence: return "no-evidence";
  }
  return "unknown";
}

std::uint64_t query_stream_id(const std::string& entity_id, const std::string& predicate) {
  return fnv1a64(entity_id + '\x1f' + predicate);
}

Vector aggregate_vae_predictions(std::span<const nn::LatentPosterior> posteriors, const std::string& predicate,
                                 const nn::CategoricalDecoder& decoder, int n_samples, RandomStream& stream) {
  if (posteriors.empty()) throw NoEvidence("aggregate_vae_predictions: no posteriors");
  Vector acc = Vector::Zero(static_cast<Eigen::Index>(decoder.domain(predicate).size()));
  for (std::size_t i = 0; i < posteriors.size(); ++i) {
    RandomStream s = stream.split(i);
    acc += mc_decode(posteriors[i], predicate, decoder, n_samples, s);
  }
  return normalize(acc / static_cast<double>(posteriors.size()));
}

nlohmann::json hyperparameters_json(const QueryOptions& o, std::uint64_t stream_id) {
  nlohmann::json j = {{"top_k", o.top_k},
                      {"n_samples", o.n_samples},
                      {"temperature", o.temperature},
                      {"alpha", o.alpha},
                      {"variant", to_string(o.variant)},
                      {"seed", o.seed},
                      {"stream_id", stream_id},
                      {"staleness_days", o.staleness_days}};
  if (o.query_text) j["query_text"] = *o.query_text;
  return j;
}

QueryOptions options_from_hyperparameters(const nlohmann::json& j) {
  try {
    QueryOptions o;
    o.top_k = j.at("top_k").get<std::size_t>();
    o.n_samples = j.at("n_samples").get<int>();
    o.temperature = j.at("temperature").get<double>();
    o.alpha = j.at("alpha").get<double>();
    o.variant = parse_variant(j.at("variant").get<std::string>());
    o.seed = j.at("seed").get<std::uint64_t>();
    o.staleness_days = j.value("staleness_days", 30.0);
    if (j.contains("query_text")) o.query_text = j.at("query_text").get<std::string>();
    return o;
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(std::string("hyperparameters: ") + e.what());
  }
}

Orchestrator::Orchestrator(const store::EvidenceStore& store, ModelSet models, std::vector<spn::PriorSpec> priors,
                           ledger::Ledger* ledger)
    : store_(store), models_(std::move(models)), ledger_(ledger) {
  if (!models_.encoder || !models_.decoder) throw DomainError("Orchestrator: encoder and decoder are required");
  for (const auto& p : priors) {
    if (models_.decoder->domain(p.predicate) != p.domain)
      throw DomainError("Orchestrator: prior domain for '" + p.predicate + "' differs from the decoder's");
    circuits_.emplace(p.predicate, spn::build_single_predicate(p));
  }
}

const spn::SpnCircuit* Orchestrator::circuit(const std::string& predicate) const {
  auto it = circuits_.find(predicate);
  return it == circuits_.end() ? nullptr : &it->second;
}

namespace {

void finish(QueryResult& r) {
  const Eigen::Index best = argmax(r.distribution);
  r.top_value = r.domain[static_cast<std::size_t>(best)];
  r.confidence = r.distribution(best);
}

std::map<std::string, double> as_map(const std::vector<std::string>& domain, const Vector& v) {
  std::map<std::string, double> m;
  for (std::size_t i = 0; i < domain.size(); ++i) m[domain[i]] = v(static_cast<Eigen::Index>(i));
  return m;
}

}  // namespace

QueryResult Orchestrator::infer(const std::string& entity_id, const std::string& predicate,
                                const std::vector<std::string>& evidence_ids, const QueryOptions& options) const {
  const nn::CategoricalDecoder& decoder = *models_.decoder;
  QueryResult r;
  r.domain = decoder.domain(predicate);
  r.evidence_chain = evidence_ids;
  if (evidence_ids.empty()) {
    r.source = ResultSource::no_evidence;
    const auto k = static_cast<Eigen::Index>(r.domain.size());
    r.distribution = Vector::Constant(k, 1.0 / static_cast<double>(k));
    finish(r);
    return r;
  }
  r.source = ResultSource::inference;

  std::vector<nn::LatentPosterior> posts;
  for (const auto& id : evidence_ids) posts.push_back(models_.encoder->encode(store_.embedding(id), id));
  RandomStream base(options.seed, query_stream_id(entity_id, predicate));

  if (options.variant == Variant::learned) {
    if (!models_.aggregator) throw DomainError("learned variant requires an aggregator model");
    const nn::LatentAggregation agg = models_.aggregator->aggregate(posts);
    r.distribution = decoder.decode(agg.z, predicate);
    r.aggregation_weights = agg.weights;
  } else if (const spn::SpnCircuit* c = circuit(predicate)) {
    ConversionOptions conv;
    conv.n_samples = options.n_samples;
    conv.temperature = options.temperature;
    conv.alpha = options.alpha;
    spn::SpnCircuit view = *c;
    for (std::size_t i = 0; i < posts.size(); ++i) {
      RandomStream s = base.split(i);
      r.factors.push_back(convert(posts[i], predicate, decoder, conv, s));
      view = spn::attach_likelihood(view, r.factors.back());
    }
    r.distribution = spn::marginal(view, predicate).probabilities;
  } else {
    r.used_fallback = true;
    r.distribution = aggregate_vae_predictions(posts, predicate, decoder, options.n_samples, base);
  }
  finish(r);
  return r;
}

QueryResult Orchestrator::handle_query(const std::string& entity_id, const std::string& predicate,
                                       const QueryOptions& options, const std::string& now) const {
  const auto t0 = std::chrono::steady_clock::now();
  if (!models_.decoder->has_predicate(predicate)) throw UnknownPredicate(predicate);
  const std::vector<std::string>& domain = models_.decoder->domain(predicate);

  if (auto fact = store_.canonical_get(entity_id, predicate, now, options.staleness_days)) {
    const auto pos = std::find(domain.begin(), domain.end(), fact->value);
    if (pos == domain.end())
      throw DomainError("canonical value '" + fact->value + "' is outside the domain of " + predicate);
    QueryResult r;
    r.domain = domain;
    r.source = ResultSource::canonical;
    r.distribution = Vector::Zero(static_cast<Eigen::Index>(domain.size()));
    r.distribution(pos - domain.begin()) = 1.0;
    finish(r);
    r.execution_time_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return r;
  }

  const std::vector<std::string> ids = store_.search(entity_id, predicate, options.top_k, options.query_text);
  QueryResult r = infer(entity_id, predicate, ids, options);
  r.execution_time_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  if (r.source != ResultSource::inference || !ledger_) return r;

  ledger::ProvenanceRecord rec;
  rec.entity_id = entity_id;
  rec.predicate = predicate;
  rec.distribution = as_map(r.domain, r.distribution);
  rec.top_value = r.top_value;
  rec.confidence = r.confidence;
  rec.evidence_chain = r.evidence_chain;
  if (!r.factors.empty()) {
    for (const auto& f : r.factors) rec.factor_metadata.push_back({f.evidence_id, f.weight, as_map(f.domain, f.potential)});
  } else if (r.aggregation_weights.size() > 0) {
    for (std::size_t i = 0; i < r.evidence_chain.size(); ++i)
      rec.factor_metadata.push_back({r.evidence_chain[i], r.aggregation_weights(static_cast<Eigen::Index>(i)), {}});
  }
  rec.model_versions = models_.versions;
  rec.hyperparameters = hyperparameters_json(options, query_stream_id(entity_id, predicate));
  rec.execution_time_ms = r.execution_time_ms;
  r.record_id = ledger_->append(std::move(rec)).record_id;
  return r;
}

QueryResult Orchestrator::reexecute(const ledger::ProvenanceRecord& record) const {
  return infer(record.entity_id, record.predicate, record.evidence_chain,
               options_from_hyperparameters(record.hyperparameters));
}

}  // namespace lpf
