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
#include <numeric>

#include "lpf/spn.hpp"

using namespace lpf;
using namespace lpf::spn;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

std::vector<std::string> domain_of(Eigen::Index k) {
  std::vector<std::string> d;
  for (Eigen::Index i = 0; i < k; ++i) d.push_back("v" + std::to_string(i));
  return d;
}

SoftFactor factor(const std::string& var, const std::vector<std::string>& domain, Vector potential,
                  double weight = 1.0, const std::string& id = "e") {
  SoftFactor f;
  f.evidence_id = id;
  f.variables = {var};
  f.domain = domain;
  f.potential = std::move(potential);
  f.weight = weight;
  return f;
}

// Prior times weighted potentials, normalized in long double.
Vector brute_force(const Vector& prior, const std::vector<SoftFactor>& factors) {
  const Eigen::Index k = prior.size();
  std::vector<long double> mass(static_cast<std::size_t>(k));
  for (Eigen::Index y = 0; y < k; ++y) {
    long double m = prior(y);
    for (const auto& f : factors) {
      const Vector w = apply_weight(f.potential, f.weight);
      m *= static_cast<long double>(w(y));
    }
    mass[static_cast<std::size_t>(y)] = m;
  }
  const long double z = std::accumulate(mass.begin(), mass.end(), 0.0L);
  Vector out(k);
  for (Eigen::Index y = 0; y < k; ++y) out(y) = static_cast<double>(mass[static_cast<std::size_t>(y)] / z);
  return out;
}

}  // namespace

TEST_CASE("build_single_predicate") {
  const SpnCircuit u = build_single_predicate(uniform_prior("p", {"a", "b", "c"}));
  CHECK(u.validation().ok);
  CHECK(validate(u).ok);
  const SpnNode& root = u.nodes()[u.root()];
  CHECK(root.kind == NodeKind::sum);
  CHECK(root.weights == std::vector<double>{1.0});
  const SpnNode& prod = u.nodes()[root.children[0]];
  CHECK(prod.kind == NodeKind::product);
  const SpnNode& leaf = u.nodes()[prod.children[0]];
  CHECK(leaf.kind == NodeKind::leaf);
  for (Eigen::Index i = 0; i < 3; ++i) CHECK(leaf.log_values(i) == doctest::Approx(std::log(1.0 / 3)));

  const SpnCircuit c = build_single_predicate({"p", {"a", "b", "c"}, vec({0.5, 0.3, 0.2})});
  const SpnNode& l2 = c.nodes()[c.nodes()[c.nodes()[c.root()].children[0]].children[0]];
  CHECK(l2.log_values(0) == doctest::Approx(std::log(0.5)));
  CHECK(l2.log_values(1) == doctest::Approx(std::log(0.3)));
  CHECK(l2.log_values(2) == doctest::Approx(std::log(0.2)));

  CHECK_THROWS_AS(build_single_predicate({"p", {"a", "b"}, vec({0.5, 0.6})}), DomainError);
  CHECK_THROWS_AS(build_single_predicate({"p", {"a", "b"}, vec({1.0})}), DomainError);
}

TEST_CASE("validate") {
  SpnCircuit::Registry reg{{"a", {"0", "1"}}, {"b", {"0", "1"}}};
  SpnNode la{NodeKind::leaf, {}, {}, "a", vec({std::log(0.5), std::log(0.5)})};
  SpnNode lb{NodeKind::leaf, {}, {}, "b", vec({std::log(0.5), std::log(0.5)})};

  const SpnCircuit single({la}, 0, {{"a", {"0", "1"}}});
  CHECK(validate(single).ok);

  SpnNode sum{NodeKind::sum, {0, 1}, {0.5, 0.5}, "", {}};
  const SpnCircuit incomplete({la, lb, sum}, 2, reg);
  CHECK_FALSE(validate(incomplete).ok);
  CHECK(validate(incomplete).message.find("complete") != std::string::npos);
  CHECK(validate(incomplete).path == std::vector<std::size_t>{2});

  SpnNode prod{NodeKind::product, {0, 1}, {}, "", {}};
  const SpnCircuit overlap({la, la, prod}, 2, {{"a", {"0", "1"}}});
  CHECK_FALSE(validate(overlap).ok);
  CHECK(validate(overlap).message.find("decompos") != std::string::npos);

  SpnNode bad_weights{NodeKind::sum, {0, 1}, {0.7, 0.7}, "", {}};
  CHECK_FALSE(validate(SpnCircuit({la, la, bad_weights}, 2, {{"a", {"0", "1"}}})).ok);

  SpnNode loop{NodeKind::product, {1}, {}, "", {}};
  SpnNode back{NodeKind::product, {0}, {}, "", {}};
  CHECK_FALSE(validate(SpnCircuit({loop, back}, 0, {})).ok);

  const SpnCircuit good({la, lb, prod}, 2, reg);
  prod.children = {0, 1};
  CHECK(validate(SpnCircuit({la, lb, prod}, 2, reg)).ok);
  CHECK_THROWS_AS(marginal(incomplete, "a"), DomainError);
  (void)good;
}

TEST_CASE("attach_likelihood") {
  const auto dom = domain_of(3);
  const SpnCircuit base = build_single_predicate({"p", dom, vec({0.2, 0.5, 0.3})});
  const Vector prior_only = marginal(base, "p").probabilities;
  CHECK((prior_only - vec({0.2, 0.5, 0.3})).cwiseAbs().maxCoeff() <= 1e-12);

  const SpnCircuit uni = attach_likelihood(base, factor("p", dom, Vector::Constant(3, 1.0 / 3), 0.6));
  CHECK((marginal(uni, "p").probabilities - prior_only).cwiseAbs().maxCoeff() <= 1e-12);

  const Vector pot = vec({0.1, 0.6, 0.3});
  const SpnCircuit once = attach_likelihood(base, factor("p", dom, pot, 1.0));
  CHECK(once.factors().front().weighted_potential == pot);
  CHECK(base.factors().empty());  // views are independent

  const SpnCircuit twice = attach_likelihood(once, factor("p", dom, pot, 1.0));
  const Vector sq = pot.cwiseProduct(pot) / pot.squaredNorm();
  const SpnCircuit squared = attach_likelihood(base, factor("p", dom, sq, 1.0));
  CHECK((marginal(twice, "p").probabilities - marginal(squared, "p").probabilities).cwiseAbs().maxCoeff() <= 1e-12);

  CHECK_THROWS_AS(attach_likelihood(base, factor("q", dom, pot)), DomainError);
  CHECK_THROWS_AS(attach_likelihood(base, factor("p", domain_of(2), vec({0.5, 0.5}))), DomainError);
}

TEST_CASE("set_evidence") {
  const auto dom = domain_of(3);
  const SpnCircuit c = build_single_predicate({"p", dom, vec({0.7, 0.2, 0.1})});
  const MarginalResult m = marginal(set_evidence(c, "p", "v2"), "p");
  CHECK((m.probabilities - vec({0.0, 0.0, 1.0})).cwiseAbs().maxCoeff() <= 1e-300);
  CHECK_THROWS_AS(set_evidence(c, "p", "nope"), DomainError);
  CHECK_THROWS_AS(set_evidence(c, "nope", "v0"), DomainError);

  const SpnCircuit two = build_product({{"a", dom, vec({0.7, 0.2, 0.1})}, {"b", domain_of(2), vec({0.4, 0.6})}});
  const SpnCircuit with = attach_likelihood(two, factor("b", domain_of(2), vec({0.9, 0.1})));
  const Vector before = marginal(with, "b").probabilities;
  const SpnCircuit fixed = set_evidence(with, "a", "v1");
  CHECK((marginal(fixed, "b").probabilities - before).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((marginal(fixed, "a").probabilities - vec({0.0, 1.0, 0.0})).cwiseAbs().maxCoeff() <= 1e-300);
}

TEST_CASE("marginal examples") {
  const std::vector<std::string> dom{"low", "medium", "high"};
  const SpnCircuit c = build_single_predicate(uniform_prior("compliance_level", dom));
  const MarginalResult m0 = marginal(c, "compliance_level");
  CHECK((m0.probabilities.array() - 1.0 / 3).abs().maxCoeff() <= 1e-12);
  CHECK_THROWS_AS(marginal(c, "other"), DomainError);

  const std::vector<Vector> pots{vec({0.100, 0.223, 0.677}), vec({0.092, 0.211, 0.697}), vec({0.112, 0.238, 0.650}),
                                 vec({0.125, 0.251, 0.624}), vec({0.085, 0.198, 0.717})};
  SpnCircuit w = c;
  std::vector<SoftFactor> fs;
  for (const auto& p : pots) {
    fs.push_back(factor("compliance_level", dom, p));
    w = attach_likelihood(w, fs.back());
  }
  const MarginalResult m = marginal(w, "compliance_level");
  const Vector published = vec({0.0001, 0.0047, 0.9952});
  CHECK((m.probabilities - published).cwiseAbs().maxCoeff() <= 2e-3);
  const Vector oracle = vec({7.945183e-5, 0.004038986, 0.99588156});
  CHECK((m.probabilities - oracle).cwiseAbs().maxCoeff() <= 1e-8);
  CHECK((m.probabilities - brute_force(Vector::Constant(3, 1.0 / 3), fs)).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(std::exp(m.log_z) == doctest::Approx(0.0459314).epsilon(1e-6));

  SpnCircuit unanimous = c;
  for (int i = 0; i < 50; ++i)
    unanimous = attach_likelihood(unanimous, factor("compliance_level", dom, vec({0.004, 0.006, 0.99})));
  CHECK(marginal(unanimous, "compliance_level").probabilities(2) >= 1.0 - 1e-6);
}

TEST_CASE("covers") {
  const SpnCircuit c = build_single_predicate(uniform_prior("compliance_level", {"a", "b"}));
  CHECK(covers(c, "compliance_level"));
  CHECK_FALSE(covers(c, "other"));
  const SpnCircuit two = build_product({uniform_prior("x", {"a"}), uniform_prior("y", {"a", "b"})});
  CHECK(covers(two, "x"));
  CHECK(covers(two, "y"));
}

TEST_CASE("marginal matches enumeration and ignores attachment order") {
  RandomStream s(17, 0);
  for (int t = 0; t < 300; ++t) {
    const Eigen::Index k = 2 + static_cast<Eigen::Index>(s.uniform_index(9));
    const auto dom = domain_of(k);
    const Vector prior = softmax(gaussian_draw(s, k));
    const SpnCircuit c = build_single_predicate({"v", dom, prior});
    std::vector<SoftFactor> fs;
    const std::size_t n = s.uniform_index(21);
    for (std::size_t i = 0; i < n; ++i)
      fs.push_back(factor("v", dom, softmax(gaussian_draw(s, k) * 2.0), 0.05 + 0.95 * s.uniform()));
    SpnCircuit a = c;
    for (const auto& f : fs) a = attach_likelihood(a, f);
    std::vector<SoftFactor> rev(fs.rbegin(), fs.rend());
    shuffle(rev, s);
    SpnCircuit b = c;
    for (const auto& f : rev) b = attach_likelihood(b, f);
    const Vector pa = marginal(a, "v").probabilities;
    CHECK((pa - brute_force(prior, fs)).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK((pa - marginal(b, "v").probabilities).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(std::abs(pa.sum() - 1.0) <= 1e-9);
  }
}

TEST_CASE("operation count is linear in factors times domain") {
  auto ops = [](Eigen::Index k, int n) {
    const auto dom = domain_of(k);
    SpnCircuit c = build_single_predicate(uniform_prior("v", dom));
    for (int i = 0; i < n; ++i) c = attach_likelihood(c, factor("v", dom, Vector::Constant(k, 1.0 / k), 0.5));
    return static_cast<long>(marginal(c, "v").operations);
  };
  for (Eigen::Index k : {2, 5, 10}) {
    const long step = ops(k, 20) - ops(k, 10);
    CHECK(ops(k, 40) - ops(k, 20) == 2 * step);
    CHECK(step == 10 * k);
  }
}

TEST_CASE("underflowing products stay normalized") {
  const auto dom = domain_of(3);
  SpnCircuit c = build_single_predicate(uniform_prior("v", dom));
  for (int i = 0; i < 1000; ++i) c = attach_likelihood(c, factor("v", dom, vec({0.5, 0.3, 0.2})));
  const MarginalResult m = marginal(c, "v");
  CHECK(std::isfinite(m.log_z));
  CHECK(m.log_z < -600.0);
  CHECK(std::abs(m.probabilities.sum() - 1.0) <= 1e-9);
  CHECK(m.probabilities(0) == doctest::Approx(1.0));
}
