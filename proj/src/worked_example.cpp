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


#include "lpf/worked_example.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "lpf/factorconv.hpp"
#include "lpf/spn.hpp"

namespace lpf::worked {

using nlohmann::json;

namespace {

constexpr Eigen::Index kLatentDim = 64;
const std::vector<double> kFirstSample{0.048, 0.155, 0.797};

Vector to_vector(const std::vector<double>& v) { return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())); }

std::string format_vector(const Vector& v) {
  std::string s = "{";
  char buf[32];
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%s%.7g", i ? ", " : "", v(i));
    s += buf;
  }
  return s + "}";
}

void require_sizes(const Fixture& f) {
  const std::size_t n = f.evidence_ids.size();
  if (n == 0) throw DomainError("fixture: no evidence");
  if (f.factors.size() != n || f.credibility.size() != n || f.factor_weights.size() != n ||
      f.aggregation_weights.size() != n || f.mu_first.size() != n || f.mean_sigma.size() != n)
    throw DomainError("fixture: per-evidence arrays differ in length");
  for (const auto& row : f.factors)
    if (row.size() != f.domain.size()) throw DomainError("fixture: factor row does not match domain");
  if (f.prior.size() != f.domain.size() || f.expected_marginal.size() != f.domain.size())
    throw DomainError("fixture: prior or expected marginal does not match domain");
}

}  // namespace

json to_json(const Fixture& f) {
  return {{"entity_id", f.entity_id},
          {"domain", f.domain},
          {"evidence_ids", f.evidence_ids},
          {"credibility", f.credibility},
          {"factors", f.factors},
          {"factor_weights", f.factor_weights},
          {"prior", f.prior},
          {"aggregation_weights", f.aggregation_weights},
          {"mu_first", f.mu_first},
          {"mean_sigma", f.mean_sigma},
          {"expected_marginal", f.expected_marginal},
          {"marginal_tolerance", f.marginal_tolerance},
          {"expected_z_first", f.expected_z_first},
          {"z_tolerance", f.z_tolerance},
          {"expected_top", f.expected_top}};
}

Fixture fixture_from_json(const json& j) {
  Fixture f;
  try {
    // Missing keys keep their defaults so a fixture file may override a subset.
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) j.at(key).get_to(field);
    };
    get("entity_id", f.entity_id);
    get("domain", f.domain);
    get("evidence_ids", f.evidence_ids);
    get("credibility", f.credibility);
    get("factors", f.factors);
    get("factor_weights", f.factor_weights);
    get("prior", f.prior);
    get("aggregation_weights", f.aggregation_weights);
    get("mu_first", f.mu_first);
    get("mean_sigma", f.mean_sigma);
    get("expected_marginal", f.expected_marginal);
    get("marginal_tolerance", f.marginal_tolerance);
    get("expected_z_first", f.expected_z_first);
    get("z_tolerance", f.z_tolerance);
    get("expected_top", f.expected_top);
  } catch (const json::exception& e) {
    throw DomainError(std::string("fixture: ") + e.what());
  }
  require_sizes(f);
  return f;
}

Vector enumerate_posterior(const Fixture& f) {
  require_sizes(f);
  const auto k = static_cast<Eigen::Index>(f.domain.size());
  Vector p(k);
  for (Eigen::Index y = 0; y < k; ++y) {
    double v = f.prior[static_cast<std::size_t>(y)];
    for (const auto& row : f.factors) v *= row[static_cast<std::size_t>(y)];
    p(y) = v;
  }
  return p / p.sum();
}

nn::LatentPosterior FixtureEncoder::encode(const Vector&, const std::string& evidence_id) const {
  for (std::size_t i = 0; i < fixture_.evidence_ids.size(); ++i) {
    if (fixture_.evidence_ids[i] != evidence_id) continue;
    Vector mu = Vector::Constant(kLatentDim, 0.45);
    mu(0) = fixture_.mu_first[i];
    mu(1) = -0.34;
    mu(2) = 1.21;
    return nn::make_posterior(evidence_id, mu, Vector::Constant(kLatentDim, fixture_.mean_sigma[i]));
  }
  throw NotFound("fixture encoder: unknown evidence " + evidence_id);
}

FixtureDecoder::FixtureDecoder(std::string predicate, std::vector<std::string> domain)
    : predicate_(std::move(predicate)), domain_(std::move(domain)) {
  if (domain_.size() != kFirstSample.size()) throw DomainError("fixture decoder: three-value domain expected");
}

const std::vector<std::string>& FixtureDecoder::domain(const std::string& predicate) const {
  if (predicate != predicate_) throw UnknownPredicate(predicate);
  return domain_;
}

Vector FixtureDecoder::decode(const Vector& z, const std::string& predicate) const {
  if (predicate != predicate_) throw UnknownPredicate(predicate);
  const Vector logits = to_vector(kFirstSample).array().log().matrix() * (z(0) / 0.82);
  return softmax(logits);
}

nn::LatentAggregation FixtureAggregator::aggregate(std::span<const nn::LatentPosterior> posteriors) const {
  if (posteriors.empty()) throw NoEvidence("fixture aggregator: no posteriors");
  if (posteriors.size() != weights_.size()) throw DomainError("fixture aggregator: evidence count mismatch");
  const auto n = static_cast<Eigen::Index>(posteriors.size());
  nn::LatentAggregation out;
  out.weights = to_vector(weights_);
  out.raw_weights = out.weights;
  out.quality = Vector::Ones(n);
  out.consistency = Matrix::Ones(n, n);
  out.mean_consistency = Vector::Ones(n);
  out.z = Vector::Zero(posteriors.front().mu.size());
  out.log_variance = Vector::Zero(out.z.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    out.z += out.weights(i) * posteriors[static_cast<std::size_t>(i)].mu;
    out.log_variance += out.weights(i) * posteriors[static_cast<std::size_t>(i)].log_variance();
  }
  return out;
}

bool Report::ok() const {
  for (const auto& c : checks)
    if (!c.ok) return false;
  return !checks.empty();
}

Report replay(const Fixture& f) {
  require_sizes(f);
  const std::string predicate = data::kPredicate;
  Report r;
  const auto t0 = std::chrono::steady_clock::now();

  spn::PriorSpec prior{predicate, f.domain, to_vector(f.prior)};
  spn::SpnCircuit circuit = spn::build_single_predicate(prior);
  for (std::size_t i = 0; i < f.factors.size(); ++i) {
    SoftFactor factor;
    factor.evidence_id = f.evidence_ids[i];
    factor.variables = {predicate};
    factor.domain = f.domain;
    factor.potential = to_vector(f.factors[i]);
    factor.weight = 1.0;  // potentials are already weighted
    circuit = spn::attach_likelihood(circuit, factor);
  }
  const spn::MarginalResult m = spn::marginal(circuit, predicate);
  r.runtime_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  r.spn_marginal = m.probabilities;
  r.log_z = m.log_z;
  r.oracle_marginal = enumerate_posterior(f);

  const Vector expected = to_vector(f.expected_marginal);
  const double reference_gap = (r.spn_marginal - expected).cwiseAbs().maxCoeff();
  const double oracle_gap = (r.spn_marginal - r.oracle_marginal).cwiseAbs().maxCoeff();
  std::ostringstream d1, d2, d3;
  d1 << "got " << format_vector(r.spn_marginal) << " expected " << format_vector(expected) << " max diff " << reference_gap;
  d2 << "oracle " << format_vector(r.oracle_marginal) << " max diff " << oracle_gap;
  d3 << r.runtime_ms << " ms";
  r.checks.push_back({"spn marginal vs published", reference_gap <= f.marginal_tolerance, d1.str()});
  r.checks.push_back({"spn marginal vs enumeration", oracle_gap <= 1e-9, d2.str()});
  r.checks.push_back({"spn runtime under 1 s", r.runtime_ms < 1000.0, d3.str()});

  r.z_first = 0.0;
  for (std::size_t i = 0; i < f.aggregation_weights.size(); ++i) r.z_first += f.aggregation_weights[i] * f.mu_first[i];
  std::ostringstream d4;
  d4 << "z[0] = " << r.z_first << " expected " << f.expected_z_first;
  r.checks.push_back({"aggregated first coordinate", std::abs(r.z_first - f.expected_z_first) <= f.z_tolerance, d4.str()});

  // Full queries through the orchestrator with the mock models.
  store::EvidenceStore st;
  std::vector<store::EvidenceRecord> records;
  for (std::size_t i = 0; i < f.evidence_ids.size(); ++i) {
    store::EvidenceRecord e;
    e.evidence_id = f.evidence_ids[i];
    e.entity_id = f.entity_id;
    e.predicate = predicate;
    e.text_content = "evidence " + f.evidence_ids[i] + " for " + f.entity_id;
    e.credibility = f.credibility[i];
    e.timestamp = "2024-01-01T00:00:00Z";
    e.evidence_type = "report";
    e.source = "fixture";
    records.push_back(e);
  }
  st.ingest(records);
  FixtureEncoder enc(f);
  FixtureDecoder dec(predicate, f.domain);
  FixtureAggregator agg(f.aggregation_weights);
  ModelSet models{&enc, &dec, &agg, {{"encoder", "fixture"}, {"decoder", "fixture"}}};
  Orchestrator orch(st, models, {prior});
  QueryOptions opts;
  opts.top_k = f.evidence_ids.size();
  opts.variant = Variant::spn;
  r.spn_top = orch.handle_query(f.entity_id, predicate, opts, "2024-06-01T00:00:00Z").top_value;
  opts.variant = Variant::learned;
  r.learned_top = orch.handle_query(f.entity_id, predicate, opts, "2024-06-01T00:00:00Z").top_value;
  r.checks.push_back({"spn variant top value", r.spn_top == f.expected_top, "top " + r.spn_top});
  r.checks.push_back({"learned variant top value", r.learned_top == f.expected_top, "top " + r.learned_top});
  return r;
}

std::string format_report(const Report& r) {
  std::ostringstream out;
  for (const auto& c : r.checks) out << (c.ok ? "PASS " : "FAIL ") << c.name << ": " << c.detail << '\n';
  out << "log Z " << r.log_z << " (Z = " << std::exp(r.log_z) << ")\n";
  out << (r.ok() ? "worked example: pass" : "worked example: FAIL") << '\n';
  return out.str();
}

}  // namespace lpf::worked
