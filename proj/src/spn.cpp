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


#include "lpf/spn.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <set>

namespace lpf::spn {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::string path_string(const std::vector<std::size_t>& path) {
  std::string s;
  for (std::size_t i = 0; i < path.size(); ++i) s += (i ? "/" : "") + std::to_string(path[i]);
  return s;
}

ValidationReport check_structure(const std::vector<SpnNode>& nodes, std::size_t root,
                                 const SpnCircuit::Registry& vars) {
  ValidationReport rep;
  auto fail = [&rep](std::string msg, std::vector<std::size_t> path) {
    rep.ok = false;
    rep.message = std::move(msg) + " at node path " + path_string(path);
    rep.path = std::move(path);
  };
  if (root >= nodes.size()) {
    fail("root index out of range", {});
    return rep;
  }

  // 0 = unvisited, 1 = on stack, 2 = done.
  std::vector<int> state(nodes.size(), 0);
  std::vector<std::set<std::string>> scope(nodes.size());
  std::vector<std::size_t> path;

  std::function<bool(std::size_t)> visit = [&](std::size_t id) -> bool {
    path.push_back(id);
    if (state[id] == 1) {
      fail("cycle", path);
      return false;
    }
    if (state[id] == 2) {
      path.pop_back();
      return true;
    }
    state[id] = 1;
    const SpnNode& n = nodes[id];
    switch (n.kind) {
      case NodeKind::leaf:
      case NodeKind::likelihood: {
        auto it = vars.find(n.variable);
        if (it == vars.end()) {
          fail("unregistered variable '" + n.variable + "'", path);
          return false;
        }
        if (n.log_values.size() != static_cast<Eigen::Index>(it->second.size())) {
          fail("value table size differs from domain of '" + n.variable + "'", path);
          return false;
        }
        if (!n.children.empty()) {
          fail("terminal node with children", path);
          return false;
        }
        if (n.kind == NodeKind::leaf &&
            std::abs(n.log_values.array().exp().sum() - 1.0) > 1e-9) {
          fail("leaf prior does not sum to 1", path);
          return false;
        }
        scope[id] = {n.variable};
        break;
      }
      case NodeKind::sum:
      case NodeKind::product: {
        if (n.children.empty()) {
          fail("internal node without children", path);
          return false;
        }
        for (std::size_t c : n.children) {
          if (c >= nodes.size()) {
            fail("child index out of range", path);
            return false;
          }
          if (!visit(c)) return false;
        }
        if (n.kind == NodeKind::sum) {
          if (n.weights.size() != n.children.size()) {
            fail("sum node weight count differs from child count", path);
            return false;
          }
          double total = 0.0;
          for (double w : n.weights) {
            if (!(w >= 0.0)) {
              fail("negative sum-node weight", path);
              return false;
            }
            total += w;
          }
          if (std::abs(total - 1.0) > 1e-9) {
            fail("sum-node weights do not sum to 1", path);
            return false;
          }
          for (std::size_t c : n.children)
            if (scope[c] != scope[n.children.front()]) {
              fail("completeness violated: sum-node children have different scopes", path);
              return false;
            }
          scope[id] = scope[n.children.front()];
        } else {
          for (std::size_t c : n.children)
            for (const auto& v : scope[c])
              if (!scope[id].insert(v).second) {
                fail("decomposability violated: variable '" + v + "' shared by product-node children",
                     path);
                return false;
              }
        }
        break;
      }
    }
    state[id] = 2;
    path.pop_back();
    return true;
  };
  if (!visit(root)) return rep;
  for (const auto& [name, domain] : vars)
    if (!scope[root].count(name)) {
      fail("registered variable '" + name + "' is outside the root scope", {root});
      break;
    }
  return rep;
}

}  // namespace

SpnCircuit::SpnCircuit(std::vector<SpnNode> nodes, std::size_t root, Registry variables) {
  auto s = std::make_shared<Structure>();
  s->report = check_structure(nodes, root, variables);
  s->nodes = std::move(nodes);
  s->root = root;
  s->variables = std::move(variables);
  structure_ = std::move(s);
}

PriorSpec uniform_prior(const std::string& predicate, std::vector<std::string> domain) {
  if (domain.empty()) throw DomainError("uniform_prior: empty domain");
  const auto k = static_cast<Eigen::Index>(domain.size());
  return {predicate, std::move(domain), Vector::Constant(k, 1.0 / static_cast<double>(k))};
}

namespace {

void check_prior(const PriorSpec& p) {
  if (p.domain.empty()) throw DomainError("prior for '" + p.predicate + "' has empty domain");
  if (p.probabilities.size() != static_cast<Eigen::Index>(p.domain.size()))
    throw DomainError("prior for '" + p.predicate + "' has wrong length");
  if ((p.probabilities.array() < 0.0).any() || std::abs(p.probabilities.sum() - 1.0) > 1e-9)
    throw DomainError("prior for '" + p.predicate + "' is not a distribution");
  if (std::set<std::string>(p.domain.begin(), p.domain.end()).size() != p.domain.size())
    throw DomainError("prior for '" + p.predicate + "' has duplicate domain values");
}

}  // namespace

SpnCircuit build_product(const std::vector<PriorSpec>& priors) {
  if (priors.empty()) throw DomainError("build_product: no predicates");
  std::vector<SpnNode> nodes(2);
  nodes[0].kind = NodeKind::sum;
  nodes[0].children = {1};
  nodes[0].weights = {1.0};
  nodes[1].kind = NodeKind::product;
  SpnCircuit::Registry vars;
  for (const auto& p : priors) {
    check_prior(p);
    if (!vars.emplace(p.predicate, p.domain).second)
      throw DomainError("build_product: duplicate predicate '" + p.predicate + "'");
    SpnNode leaf;
    leaf.kind = NodeKind::leaf;
    leaf.variable = p.predicate;
    leaf.log_values = p.probabilities.array().log().matrix();
    nodes[1].children.push_back(nodes.size());
    nodes.push_back(std::move(leaf));
  }
  SpnCircuit c(std::move(nodes), 0, std::move(vars));
  if (!c.validation().ok) throw DomainError("build_product: " + c.validation().message);
  return c;
}

SpnCircuit build_single_predicate(const PriorSpec& prior) { return build_product({prior}); }

ValidationReport validate(const SpnCircuit& circuit) { return circuit.validation(); }

bool covers(const SpnCircuit& circuit, const std::string& predicate) {
  return circuit.variables().count(predicate) > 0;
}

SpnCircuit attach_likelihood(const SpnCircuit& circuit, const SoftFactor& factor) {
  if (factor.variables.size() != 1)
    throw DomainError("attach_likelihood: only single-variable factors are supported");
  const std::string& var = factor.variables.front();
  auto it = circuit.variables().find(var);
  if (it == circuit.variables().end()) throw DomainError("attach_likelihood: unknown variable '" + var + "'");
  if (factor.domain != it->second)
    throw DomainError("attach_likelihood: factor domain does not match variable '" + var + "'");
  if (factor.potential.size() != static_cast<Eigen::Index>(it->second.size()))
    throw DomainError("attach_likelihood: potential length does not match domain");

  SpnCircuit out = circuit;
  AttachedFactor a;
  a.evidence_id = factor.evidence_id;
  a.variable = var;
  a.weight = factor.weight;
  a.raw_potential = factor.potential;
  a.weighted_potential = apply_weight(factor.potential, factor.weight);
  const Vector log_p = a.weighted_potential.cwiseMax(kProbabilityFloor).array().log().matrix();
  auto [slot, inserted] = out.log_likelihood_.try_emplace(var, Vector::Zero(log_p.size()));
  slot->second += log_p;
  out.attach_operations_ += static_cast<std::size_t>(log_p.size());
  out.factors_.push_back(std::move(a));
  return out;
}

SpnCircuit set_evidence(const SpnCircuit& circuit, const std::string& variable, const std::string& value) {
  auto it = circuit.variables().find(variable);
  if (it == circuit.variables().end()) throw DomainError("set_evidence: unknown variable '" + variable + "'");
  const auto& dom = it->second;
  const auto pos = std::find(dom.begin(), dom.end(), value);
  if (pos == dom.end()) throw DomainError("set_evidence: '" + value + "' not in domain of '" + variable + "'");
  SpnCircuit out = circuit;
  out.evidence_[variable] = static_cast<std::size_t>(pos - dom.begin());
  return out;
}

struct MarginalEngine {
  const SpnCircuit& c;
  std::map<std::string, std::size_t> fixed;
  std::vector<double> memo;
  std::vector<bool> done;
  std::size_t ops = 0;

  double eval(std::size_t id) {
    if (done[id]) return memo[id];
    const SpnNode& n = c.nodes()[id];
    double v = kNegInf;
    switch (n.kind) {
      case NodeKind::leaf:
      case NodeKind::likelihood: {
        Vector vals = n.log_values;
        if (n.kind == NodeKind::leaf) {
          auto ll = c.log_likelihood_.find(n.variable);
          if (ll != c.log_likelihood_.end()) {
            vals += ll->second;
            ops += static_cast<std::size_t>(vals.size());
          }
        }
        auto f = fixed.find(n.variable);
        if (f != fixed.end()) {
          v = vals(static_cast<Eigen::Index>(f->second));
        } else {
          v = logsumexp(vals);
          ops += static_cast<std::size_t>(vals.size());
        }
        break;
      }
      case NodeKind::sum: {
        Vector terms(static_cast<Eigen::Index>(n.children.size()));
        for (std::size_t i = 0; i < n.children.size(); ++i)
          terms(static_cast<Eigen::Index>(i)) =
              n.weights[i] > 0.0 ? std::log(n.weights[i]) + eval(n.children[i]) : kNegInf;
        v = logsumexp(terms);
        ops += 2 * n.children.size();
        break;
      }
      case NodeKind::product: {
        v = 0.0;
        for (std::size_t ch : n.children) v += eval(ch);
        ops += n.children.size();
        break;
      }
    }
    done[id] = true;
    memo[id] = v;
    return v;
  }

  double run() {
    memo.assign(c.nodes().size(), kNegInf);
    done.assign(c.nodes().size(), false);
    return eval(c.root());
  }
};

MarginalResult marginal(const SpnCircuit& circuit, const std::string& variable) {
  if (!circuit.validation().ok) throw DomainError("marginal: invalid circuit: " + circuit.validation().message);
  auto it = circuit.variables().find(variable);
  if (it == circuit.variables().end()) throw DomainError("marginal: unknown variable '" + variable + "'");
  MarginalResult r;
  r.domain = it->second;
  const auto k = static_cast<Eigen::Index>(r.domain.size());
  Vector log_joint(k);
  MarginalEngine engine{circuit, circuit.evidence_, {}, {}, 0};
  const auto ev = circuit.evidence_.find(variable);
  for (Eigen::Index y = 0; y < k; ++y) {
    if (ev != circuit.evidence_.end() && ev->second != static_cast<std::size_t>(y)) {
      log_joint(y) = kNegInf;
      continue;
    }
    engine.fixed[variable] = static_cast<std::size_t>(y);
    log_joint(y) = engine.run();
  }
  r.log_z = logsumexp(log_joint);
  if (!std::isfinite(r.log_z)) throw DomainError("marginal: evidence has zero probability");
  r.probabilities = (log_joint.array() - r.log_z).exp().matrix();
  r.operations = engine.ops + circuit.attach_operations_ + 2 * static_cast<std::size_t>(k);
  return r;
}

}  // namespace lpf::spn
