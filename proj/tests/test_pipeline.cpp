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


#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "lpf/pipeline.hpp"
#include "lpf/worked_example.hpp"
#include "reference_metrics.hpp"
#include "scratch.hpp"

using namespace lpf;
using lpf::testing::ScratchDir;

namespace {

const std::string kNow = "2024-06-01T00:00:00Z";

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

// Returns the same distribution for every latent.
class ConstantDecoder : public nn::CategoricalDecoder {
 public:
  explicit ConstantDecoder(Vector p) : p_(std::move(p)) {}
  bool has_predicate(const std::string& p) const override { return p == "p"; }
  const std::vector<std::string>& domain(const std::string& p) const override {
    if (!has_predicate(p)) throw UnknownPredicate(p);
    return domain_;
  }
  Vector decode(const Vector&, const std::string& p) const override {
    if (!has_predicate(p)) throw UnknownPredicate(p);
    return p_;
  }

 private:
  Vector p_;
  std::vector<std::string> domain_{"a", "b", "c"};
};

// One-hot at argmax of the first three latent coordinates.
class HardDecoder : public nn::CategoricalDecoder {
 public:
  bool has_predicate(const std::string& p) const override { return p == "p"; }
  const std::vector<std::string>& domain(const std::string&) const override { return domain_; }
  Vector decode(const Vector& z, const std::string&) const override {
    Vector out = Vector::Zero(3);
    out(argmax(Vector(z.head(3)))) = 1.0;
    return out;
  }

 private:
  std::vector<std::string> domain_{"a", "b", "c"};
};

class SoftDecoder : public nn::CategoricalDecoder {
 public:
  bool has_predicate(const std::string& p) const override { return p == "p"; }
  const std::vector<std::string>& domain(const std::string&) const override { return domain_; }
  Vector decode(const Vector& z, const std::string&) const override { return softmax(Vector(z.head(3))); }

 private:
  std::vector<std::string> domain_{"a", "b", "c"};
};

struct SmallModels {
  nn::EncoderModel encoder;
  nn::DecoderModel decoder;
  nn::AggregatorModel aggregator;
  ModelSet set() const { return {&encoder, &decoder, &aggregator, {{"encoder", "test"}, {"decoder", "test"}}}; }
};

SmallModels small_models(std::uint64_t seed) {
  RandomStream init(seed, 0);
  SmallModels m;
  m.encoder = nn::EncoderModel({384, {16}, 8}, 0.0, init);
  m.decoder = nn::DecoderModel({8, 4, {8}}, {{data::kPredicate, data::kDomain}}, 0.0, init);
  m.aggregator = nn::AggregatorModel({8, {8}, {8}, {4}}, 0.0, init);
  return m;
}

struct Corpus {
  data::Dataset d;
  store::EvidenceStore st;
};

const Corpus& corpus() {
  static const Corpus c = [] {
    Corpus out;
    out.d = data::generate_compliance_dataset({});
    out.st.ingest(out.d.evidence);
    return out;
  }();
  return c;
}

std::vector<std::string> first_test(std::size_t n) {
  const auto& t = corpus().d.test;
  return {t.begin(), t.begin() + static_cast<std::ptrdiff_t>(std::min(n, t.size()))};
}

store::EvidenceRecord rec(const std::string& id, const std::string& entity) {
  store::EvidenceRecord r;
  r.evidence_id = id;
  r.entity_id = entity;
  r.predicate = "compliance_level";
  r.text_content = "evidence " + id;
  r.timestamp = "2024-01-01T00:00:00Z";
  return r;
}

}  // namespace

TEST_CASE("variant and source names") {
  CHECK(parse_variant("spn") == Variant::spn);
  CHECK(parse_variant("learned") == Variant::learned);
  CHECK_THROWS_AS(parse_variant("mlp"), DomainError);
  CHECK(to_string(ResultSource::no_evidence) == "no-evidence");
  CHECK(query_stream_id("C1", "p") == query_stream_id("C1", "p"));
  CHECK(query_stream_id("C1", "p") != query_stream_id("C1p", ""));
  const QueryOptions o;
  CHECK(o.top_k == 5);
  CHECK(o.n_samples == 16);
  CHECK(o.temperature == 1.0);
  CHECK(o.alpha == 2.0);
}

TEST_CASE("orchestrator on the worked-example fixture") {
  const worked::Fixture f;
  const std::string pred = "compliance_level";
  store::EvidenceStore st;
  std::vector<store::EvidenceRecord> rs;
  for (const auto& id : f.evidence_ids) rs.push_back(rec(id, f.entity_id));
  rs.push_back(rec("other1", "C0002"));
  st.ingest(rs);
  st.add_canonical({"C0003", pred, "low", 0.99, "2024-05-25T00:00:00Z"});
  worked::FixtureEncoder enc(f);
  worked::FixtureDecoder dec(pred, f.domain);
  worked::FixtureAggregator agg(f.aggregation_weights);
  ModelSet models{&enc, &dec, &agg, {{"encoder", "fixture"}}};
  ScratchDir dir("orch");
  ledger::Ledger led(dir.file("ledger.jsonl"));
  Orchestrator orch(st, models, {spn::uniform_prior(pred, f.domain)}, &led);
  QueryOptions o;

  SUBCASE("both variants pick high") {
    for (Variant v : {Variant::spn, Variant::learned}) {
      o.variant = v;
      const QueryResult r = orch.handle_query(f.entity_id, pred, o, kNow);
      CHECK(r.top_value == "high");
      CHECK(r.source == ResultSource::inference);
      CHECK(r.evidence_chain == f.evidence_ids);
      CHECK(r.confidence == r.distribution.maxCoeff());
      CHECK(std::abs(r.distribution.sum() - 1.0) <= 1e-9);
      CHECK_FALSE(r.record_id.empty());
      CHECK_FALSE(r.used_fallback);
    }
    CHECK(led.size() == 2);
  }
  SUBCASE("provenance matches the returned distribution") {
    const QueryResult r = orch.handle_query(f.entity_id, pred, o, kNow);
    const ledger::ProvenanceRecord p = ledger::replay(led.path(), r.record_id);
    for (std::size_t i = 0; i < r.domain.size(); ++i)
      CHECK(std::abs(p.distribution.at(r.domain[i]) - r.distribution(static_cast<Eigen::Index>(i))) <= 1e-11);
    CHECK(p.evidence_chain == r.evidence_chain);
    CHECK(p.factor_metadata.size() == 5);
    const QueryResult again = orch.reexecute(p);
    CHECK((again.distribution - r.distribution).cwiseAbs().maxCoeff() <= 1e-9);
    ledger::ProvenanceRecord perturbed = p;
    perturbed.hyperparameters["temperature"] = 1.5;
    CHECK((orch.reexecute(perturbed).distribution - r.distribution).cwiseAbs().maxCoeff() > 1e-6);
    CHECK(ledger::verify(led.path()).ok);
  }
  SUBCASE("canonical fast path") {
    const QueryResult r = orch.handle_query("C0003", pred, o, kNow);
    CHECK(r.source == ResultSource::canonical);
    CHECK(r.distribution == vec({1.0, 0.0, 0.0}));
    CHECK(r.top_value == "low");
    CHECK(r.confidence == 1.0);
    CHECK(r.record_id.empty());
    CHECK(led.size() == 0);
    // stale after 30 days: the entity has no evidence then
    const QueryResult stale = orch.handle_query("C0003", pred, o, "2024-07-30T00:00:00Z");
    CHECK(stale.source == ResultSource::no_evidence);
  }
  SUBCASE("no evidence") {
    const QueryResult r = orch.handle_query("C9999", pred, o, kNow);
    CHECK(r.source == ResultSource::no_evidence);
    CHECK((r.distribution.array() - 1.0 / 3).abs().maxCoeff() <= 1e-15);
    CHECK(r.top_value == "low");
    CHECK(led.size() == 0);
  }
  SUBCASE("unknown predicate") {
    CHECK_THROWS_AS(orch.handle_query(f.entity_id, "revenue_band", o, kNow), UnknownPredicate);
  }
  SUBCASE("determinism and top_k truncation") {
    const QueryResult a = orch.handle_query(f.entity_id, pred, o, kNow);
    const QueryResult b = orch.handle_query(f.entity_id, pred, o, kNow);
    CHECK(a.distribution == b.distribution);
    o.top_k = 2;
    CHECK(orch.handle_query(f.entity_id, pred, o, kNow).evidence_chain.size() == 2);
  }
  SUBCASE("fallback without a circuit") {
    Orchestrator bare(st, models, {});
    const QueryResult r = bare.handle_query(f.entity_id, pred, o, kNow);
    CHECK(r.used_fallback);
    CHECK(r.top_value == "high");
  }
}

TEST_CASE("single evidence with unit weight reproduces its potential") {
  const std::vector<std::string> dom{"a", "b", "c"};
  RandomStream s(3, 0);
  for (int t = 0; t < 50; ++t) {
    SoftFactor f;
    f.variables = {"p"};
    f.domain = dom;
    f.potential = softmax(gaussian_draw(s, 3));
    f.weight = 1.0;
    const spn::SpnCircuit c = spn::attach_likelihood(spn::build_single_predicate(spn::uniform_prior("p", dom)), f);
    CHECK((spn::marginal(c, "p").probabilities - f.potential).cwiseAbs().maxCoeff() <= 1e-15);
  }
}

TEST_CASE("aggregate_vae_predictions") {
  const auto p0 = nn::make_posterior("x", vec({5.0, 0.0, 0.0}), Vector::Constant(3, 1e-6));
  const auto p1 = nn::make_posterior("y", vec({0.0, 5.0, 0.0}), Vector::Constant(3, 1e-6));
  HardDecoder hard;
  RandomStream s(1, 0);
  const std::vector<nn::LatentPosterior> two{p0, p1};
  CHECK((aggregate_vae_predictions(two, "p", hard, 16, s) - vec({0.5, 0.5, 0.0})).cwiseAbs().maxCoeff() <= 1e-15);

  SoftDecoder soft;
  const auto q = nn::make_posterior("q", vec({0.2, -0.1, 0.4}), Vector::Constant(3, 0.5));
  // each item draws from its own split of the query stream, as factor conversion does
  RandomStream a(2, 0), b(2, 0);
  RandomStream item = b.split(0);
  CHECK((aggregate_vae_predictions(std::vector{q}, "p", soft, 16, a) - mc_decode(q, "p", soft, 16, item))
            .cwiseAbs()
            .maxCoeff() <= 1e-14);
  ConstantDecoder flat(vec({0.2, 0.3, 0.5}));
  RandomStream c(3, 0);
  CHECK((aggregate_vae_predictions(std::vector{q, q, q}, "p", flat, 8, c) - vec({0.2, 0.3, 0.5})).cwiseAbs().maxCoeff() <= 1e-15);
  RandomStream e(4, 0);
  CHECK_THROWS_AS(aggregate_vae_predictions(std::vector<nn::LatentPosterior>{}, "p", soft, 8, e), NoEvidence);
}

TEST_CASE("uncertainty decomposition") {
  SoftDecoder soft;
  RandomStream s(5, 0);
  for (int t = 0; t < 50; ++t) {
    std::vector<nn::LatentPosterior> ps;
    const std::size_t n = 1 + s.uniform_index(5);
    for (std::size_t i = 0; i < n; ++i)
      ps.push_back(nn::make_posterior("e", gaussian_draw(s, 3), gaussian_draw(s, 3).array().exp().matrix()));
    const UncertaintyDecomposition u = uncertainty_decompose(ps, "p", soft, 2 + static_cast<int>(s.uniform_index(30)), s);
    CHECK((u.total - u.epistemic - u.aleatoric).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK((u.epistemic.array() >= 0).all());
    CHECK((u.aleatoric.array() >= 0).all());
  }
  const auto tight = nn::make_posterior("t", vec({0.3, 0.1, -0.2}), Vector::Zero(3));
  RandomStream a(6, 0);
  CHECK(uncertainty_decompose(std::vector{tight}, "p", soft, 32, a).epistemic.maxCoeff() <= 1e-6);
  HardDecoder hard;
  const auto wide = nn::make_posterior("w", Vector::Zero(3), Vector::Ones(3));
  RandomStream b(7, 0);
  const UncertaintyDecomposition h = uncertainty_decompose(std::vector{wide}, "p", hard, 64, b);
  CHECK(h.aleatoric.cwiseAbs().maxCoeff() == 0.0);
  CHECK((h.total - h.epistemic).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("synthetic compliance corpus") {
  const data::Dataset& d = corpus().d;
  CHECK(d.entities.size() == 900);
  CHECK(d.evidence.size() == 4500);
  CHECK(d.train.size() == 630);
  CHECK(d.val.size() == 135);
  CHECK(d.test.size() == 135);
  int counts[3] = {0, 0, 0};
  for (const auto& e : d.entities) {
    ++counts[e.label];
    CHECK(e.evidence_ids.size() == 5);
  }
  CHECK(counts[0] == 270);
  CHECK(counts[1] == 360);
  CHECK(counts[2] == 270);
  double mean = 0.0;
  for (const auto& r : d.evidence) {
    CHECK(r.credibility >= 0.65);
    CHECK(r.credibility <= 0.98);
    mean += r.credibility;
  }
  mean /= 4500.0;
  CHECK(std::abs(mean - 0.925) <= 0.01);

  std::set<std::string> tr(d.train.begin(), d.train.end()), va(d.val.begin(), d.val.end()), te(d.test.begin(), d.test.end());
  for (const auto& id : d.val) CHECK_FALSE(tr.count(id));
  for (const auto& id : d.test) CHECK_FALSE(tr.count(id) + va.count(id));

  ScratchDir dir("corpus");
  data::write_dataset(d, dir.file("a"));
  data::write_dataset(data::generate_compliance_dataset({}), dir.file("b"));
  for (const char* f : {"entities.jsonl", "evidence.jsonl", "splits.json"})
    CHECK(lpf::testing::slurp(dir.file(std::string("a/") + f)) == lpf::testing::slurp(dir.file(std::string("b/") + f)));
  const data::Dataset back = data::read_dataset(dir.file("a"));
  CHECK(back.evidence == d.evidence);
  CHECK(back.test == d.test);
  data::DatasetOptions other;
  other.seed = 7;
  CHECK(data::generate_compliance_dataset(other).evidence != d.evidence);
}

TEST_CASE("beta sampler moments") {
  RandomStream s(11, 0);
  double m = 0.0, m2 = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double x = data::sample_beta_integer(10, 2, s);
    m += x;
    m2 += x * x;
  }
  m /= n;
  CHECK(std::abs(m - 10.0 / 12.0) <= 0.005);
  CHECK(std::abs(m2 / n - m * m - 10.0 * 2.0 / (144.0 * 13.0)) <= 0.001);
}

TEST_CASE("metric examples") {
  std::vector<Prediction> perfect{{vec({1, 0, 0}), 0}, {vec({0, 1, 0}), 1}, {vec({0, 0, 1}), 2}};
  const MetricsReport m = compute_metrics(perfect);
  CHECK(m.accuracy == 1.0);
  CHECK(m.nll == 0.0);
  CHECK(m.brier == 0.0);
  CHECK(m.ece == 0.0);
  CHECK(m.macro_f1 == 1.0);

  std::vector<Prediction> coin{{vec({0.5, 0.5}), 0}, {vec({0.5, 0.5}), 1}, {vec({0.5, 0.5}), 0}, {vec({0.5, 0.5}), 1}};
  const MetricsReport c = compute_metrics(coin);
  CHECK(c.accuracy == 0.5);
  CHECK(c.ece == 0.0);

  std::vector<Prediction> four{{vec({0.95, 0.05}), 0}, {vec({0.95, 0.05}), 1}, {vec({0.55, 0.45}), 0}, {vec({0.55, 0.45}), 0}};
  CHECK(std::abs(expected_calibration_error(four, 10) - 0.45) <= 1e-12);
  CHECK_THROWS_AS(compute_metrics(std::vector<Prediction>{}), DomainError);
}

TEST_CASE("metrics match a brute-force reference") {
  RandomStream s(21, 0);
  for (int t = 0; t < 40; ++t) {
    const std::size_t n = 1 + s.uniform_index(1000);
    const Eigen::Index k = 2 + static_cast<Eigen::Index>(s.uniform_index(4));
    std::vector<Prediction> ps;
    for (std::size_t i = 0; i < n; ++i) {
      Vector p = softmax(gaussian_draw(s, k) * 2.0);
      if (s.uniform() < 0.05) p = Vector::Unit(k, 0);  // confidence exactly 1
      ps.push_back({p, static_cast<int>(s.uniform_index(static_cast<std::uint64_t>(k)))});
    }
    const MetricsReport m = compute_metrics(ps);
    const lpf::testing::ReferenceMetrics r = lpf::testing::reference_metrics(ps, 10);
    CHECK(std::abs(m.nll - static_cast<double>(r.nll)) <= 1e-12 * std::max(1.0, m.nll));
    CHECK(std::abs(m.brier - static_cast<double>(r.brier)) <= 1e-12);
    CHECK(std::abs(m.ece - static_cast<double>(r.ece)) <= 1e-12);
    CHECK(std::abs(m.accuracy - static_cast<double>(r.accuracy)) <= 1e-12);
    CHECK(std::abs(m.macro_f1 - static_cast<double>(r.macro_f1)) <= 1e-12);
    CHECK(m.ece >= 0.0);
    CHECK(m.ece <= 1.0);
    CHECK(m.brier <= 2.0);
    CHECK(m.macro_f1 >= 0.0);
    CHECK(m.macro_f1 <= 1.0);

    std::vector<int> support(static_cast<std::size_t>(k));
    for (const auto& p : ps) ++support[static_cast<std::size_t>(p.label)];
    REQUIRE(m.confusion.rows() == k);
    for (Eigen::Index row = 0; row < k; ++row) CHECK(m.confusion.row(row).sum() == support[static_cast<std::size_t>(row)]);

    REQUIRE(m.selective.size() == 5);
    for (const auto& row : m.selective) {
      std::size_t accepted = 0, correct = 0;
      for (const auto& p : ps) {
        const double conf = p.distribution.maxCoeff();
        if (conf > row.threshold) {
          ++accepted;
          correct += argmax(p.distribution) == p.label;
        }
      }
      CHECK(row.accepted == accepted);
      CHECK(row.coverage * static_cast<double>(n) == doctest::Approx(static_cast<double>(accepted)).epsilon(1e-15));
      if (accepted) CHECK(row.accuracy == doctest::Approx(static_cast<double>(correct) / accepted).epsilon(1e-15));
    }
  }
}

TEST_CASE("credibility strata") {
  std::vector<Prediction> ps{{vec({1, 0}), 0}, {vec({1, 0}), 1}, {vec({0, 1}), 1}, {vec({0, 1}), 1}};
  const std::vector<double> cred{0.95, 0.8, 0.6, 0.91};
  const auto strata = stratify_by_credibility(ps, cred);
  REQUIRE(strata.size() == 3);
  CHECK(strata[0].count == 2);
  CHECK(strata[0].accuracy == 1.0);
  CHECK(strata[1].count == 1);
  CHECK(strata[1].accuracy == 0.0);
  CHECK(strata[2].count == 1);
}

TEST_CASE("evaluation and ablation") {
  const Corpus& c = corpus();
  const SmallModels m = small_models(3);
  const ModelSet models = m.set();
  Orchestrator orch(c.st, models, {spn::uniform_prior(data::kPredicate, data::kDomain)});
  const auto ids = first_test(20);
  QueryOptions o;
  o.n_samples = 4;

  SUBCASE("single-value grid equals a direct evaluation") {
    const auto rows = run_ablation(AblationAxis::temperature, {1.0}, o, orch, c.d, ids, models, {0}, kNow);
    REQUIRE(rows.size() == 1);
    const EvaluationRun direct = evaluate(orch, c.d, ids, o, models, kNow, false);
    CHECK(rows[0].metrics.accuracy == direct.metrics.accuracy);
    CHECK(rows[0].metrics.nll == direct.metrics.nll);
    CHECK(rows[0].metrics.ece == direct.metrics.ece);
    CHECK(rows[0].mean_factor_weight == direct.mean_factor_weight);
  }
  SUBCASE("top_k is truncated to the available evidence") {
    const auto rows = run_ablation(AblationAxis::top_k, {1, 3, 20}, o, orch, c.d, ids, models, {0}, kNow);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].mean_evidence_used == 1.0);
    CHECK(rows[1].mean_evidence_used == 3.0);
    CHECK(rows[2].mean_evidence_used == 5.0);
  }
  SUBCASE("factor weight decreases along alpha") {
    const auto rows = run_ablation(AblationAxis::alpha, default_grid(AblationAxis::alpha), o, orch, c.d, ids, models,
                                   {0}, kNow);
    REQUIRE(rows.size() == 4);
    for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i].mean_factor_weight < rows[i - 1].mean_factor_weight);
    const auto j = ablation_json(AblationAxis::alpha, rows);
    CHECK(j.dump().find("mean_factor_weight") != std::string::npos);
    CHECK(ablation_table(AblationAxis::alpha, rows).find("alpha") != std::string::npos);
  }
  SUBCASE("grid validation") {
    CHECK_THROWS_AS(run_ablation(AblationAxis::top_k, {2.5}, o, orch, c.d, ids, models, {0}, kNow), DomainError);
    CHECK(parse_axis("n_samples") == AblationAxis::n_samples);
    CHECK_THROWS_AS(parse_axis("beta"), DomainError);
    CHECK(default_grid(AblationAxis::n_samples) == std::vector<double>{4, 8, 16, 32});
  }
  SUBCASE("evaluation is deterministic and includes the baseline") {
    const EvaluationRun a = evaluate(orch, c.d, ids, o, models, kNow);
    const EvaluationRun b = evaluate(orch, c.d, ids, o, models, kNow);
    CHECK(a.metrics.nll == b.metrics.nll);
    CHECK(a.baseline.n == ids.size());
    CHECK(a.mean_evidence_used == 5.0);
    CHECK(a.mean_credibility.size() == ids.size());
  }
}

TEST_CASE("calibration choice round trip") {
  CalibrationChoice c{0.1, 0.8, 0.12, 0.4};
  const CalibrationChoice back = calibration_from_json(to_json(c));
  CHECK(back.alpha == 0.1);
  CHECK(back.temperature == 0.8);
  CHECK(back.val_ece == 0.12);
  QueryOptions q;
  q.top_k = 3;
  q.temperature = 1.2;
  q.variant = Variant::learned;
  q.seed = 9;
  const QueryOptions r = options_from_hyperparameters(hyperparameters_json(q, 17));
  CHECK(r.top_k == 3);
  CHECK(r.temperature == 1.2);
  CHECK(r.variant == Variant::learned);
  CHECK(r.seed == 9);
}
