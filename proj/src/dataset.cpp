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
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "lpf/clock.hpp"
#include "lpf/pipeline.hpp"

namespace lpf::data {

using nlohmann::json;

namespace {

enum Stream : std::uint64_t {
  kLabelStream = 11,
  kSplitStream = 12,
  kEvidenceStream = 13,
  kCredibilityStream = 14,
  kAttributeStream = 15,
};

// Narrative phrases per label (audit reports, financial reviews).
const std::vector<std::string> kStrong[3] = {
    {"auditors found repeated late filings and unpaid assessments",
     "material misstatements were identified in several tax returns",
     "penalties were issued for substantially underreported income",
     "payroll withholding was not remitted for multiple quarters",
     "the review flagged serious and recurring reporting violations",
     "estimated payments were missed and arrears keep growing"},
    {"minor filing delays were corrected after a reminder notice",
     "a few reconciliation gaps were noted and partly resolved",
     "documentation was adequate with modest discrepancies in schedules",
     "one late payment was followed by prompt remediation",
     "controls are in place but testing showed occasional exceptions",
     "small adjustments were required after the desk review"},
    {"all returns were filed on time with no exceptions noted",
     "the auditor issued a clean opinion with complete documentation",
     "tax positions are well supported and consistently reported",
     "withholding and remittances matched ledgers in every period",
     "the review found exemplary controls and zero adjustments",
     "filings were accurate and fully reconciled across entities"},
};

// Narrative phrases shared by two adjacent labels: index 0 low/medium, 1 medium/high.
const std::vector<std::string> kShared[2] = {
    {"several irregularities remain under review by the examiner",
     "filing discrepancies are pending resolution with the authority",
     "the examiner requested further support for deductions claimed",
     "reporting quality was uneven across the fiscal year"},
    {"filings were generally timely with a handful of clarifications",
     "records were mostly complete and questions were answered quickly",
     "the company cooperated fully and few follow ups were needed",
     "reporting was largely consistent with prior periods"},
};

// Registry facts. Index 0 rules out "high", index 1 rules out "low".
const std::vector<std::string> kRegistry[2] = {
    {"the registry lists an open assessment notice for this taxpayer",
     "an outstanding finding is recorded with the tax authority",
     "a penalty notice was logged during the current cycle",
     "the application for a compliance certificate was declined"},
    {"the registry shows no outstanding liens or enforcement actions",
     "a certificate of good standing is on file with the authority",
     "no penalty notices are recorded for the current cycle",
     "payroll remittance status is confirmed current by the registry"},
};

const char* kNarrativeTypes[2] = {"audit_report", "financial_review"};
const char* kRegistryTypes[2] = {"regulatory_filing", "certification"};
const char* kIndustries[] = {"Finance", "Retail", "Manufacturing", "Technology", "Healthcare", "Energy"};
const char* kCountries[] = {"US", "UK", "DE", "CA", "SG"};
const char* kNameHeads[] = {"Tech", "Global", "Northern", "Summit", "Blue", "Apex", "Harbor", "Pioneer"};
const char* kNameTails[] = {"Industries Inc", "Holdings Ltd", "Partners LLC", "Group", "Systems Corp", "Trading Co"};

template <typename T, std::size_t N>
const T& pick(const T (&arr)[N], RandomStream& s) {
  return arr[s.uniform_index(N)];
}

const std::string& pick(const std::vector<std::string>& v, RandomStream& s) { return v[s.uniform_index(v.size())]; }

int adjacent_label(int label, RandomStream& s) {
  if (label != 1) return 1;
  return s.uniform() < 0.5 ? 0 : 2;
}

// Largest-remainder apportionment of `count` items over fractions.
std::vector<std::size_t> apportion(std::size_t count, const std::vector<double>& fractions) {
  std::vector<std::size_t> out(fractions.size());
  std::vector<std::pair<double, std::size_t>> rem;
  std::size_t used = 0;
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    const double q = fractions[i] * static_cast<double>(count);
    out[i] = static_cast<std::size_t>(q);
    used += out[i];
    rem.emplace_back(q - static_cast<double>(out[i]), i);
  }
  std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; used < count; ++i, ++used) ++out[rem[i % rem.size()].second];
  return out;
}

// Class x split table whose rows sum to class sizes and columns to the
// global split sizes, by largest remainder.
std::vector<std::vector<std::size_t>> stratified_counts(const std::vector<std::size_t>& class_sizes,
                                                        const std::vector<double>& fractions) {
  std::size_t total = std::accumulate(class_sizes.begin(), class_sizes.end(), std::size_t{0});
  std::vector<std::size_t> col_target = apportion(total, fractions);
  std::vector<std::vector<std::size_t>> cell(class_sizes.size(), std::vector<std::size_t>(fractions.size()));
  struct Rem {
    double r;
    std::size_t c, s;
  };
  std::vector<Rem> rems;
  std::vector<std::size_t> row_left(class_sizes), col_left(col_target);
  for (std::size_t c = 0; c < class_sizes.size(); ++c)
    for (std::size_t s = 0; s < fractions.size(); ++s) {
      const double q = fractions[s] * static_cast<double>(class_sizes[c]);
      cell[c][s] = static_cast<std::size_t>(q);
      row_left[c] -= cell[c][s];
      col_left[s] -= cell[c][s];
      rems.push_back({q - static_cast<double>(cell[c][s]), c, s});
    }
  std::stable_sort(rems.begin(), rems.end(), [](const Rem& a, const Rem& b) { return a.r > b.r; });
  for (const Rem& r : rems)
    if (row_left[r.c] > 0 && col_left[r.s] > 0) {
      ++cell[r.c][r.s];
      --row_left[r.c];
      --col_left[r.s];
    }
  for (std::size_t c = 0; c < class_sizes.size(); ++c)
    for (std::size_t s = 0; s < fractions.size() && row_left[c] > 0; ++s)
      while (row_left[c] > 0 && col_left[s] > 0) {
        ++cell[c][s];
        --row_left[c];
        --col_left[s];
      }
  return cell;
}

std::string evidence_text(int supports, int kind, const std::string& company, int year, RandomStream& s,
                          std::string& type) {
  std::string body;
  if (kind == 2) {
    // Registry facts: "low" rules out high, "high" rules out low, "medium" either.
    int bank = supports == 0 ? 0 : supports == 2 ? 1 : static_cast<int>(s.uniform_index(2));
    body = pick(kRegistry[bank], s);
    type = pick(kRegistryTypes, s);
  } else {
    if (kind == 1) {
      const int other = adjacent_label(supports, s);
      body = pick(kShared[std::min(supports, other)], s);
    } else {
      body = pick(kStrong[supports], s);
    }
    type = pick(kNarrativeTypes, s);
  }
  std::string prefix = type == "audit_report"        ? "Audit report"
                       : type == "financial_review"  ? "Financial review"
                       : type == "regulatory_filing" ? "Regulatory filing"
                                                     : "Certification record";
  return prefix + " " + std::to_string(year) + " for " + company + ": " + body + ".";
}

}  // namespace

double sample_beta_integer(int a, int b, RandomStream& stream) {
  if (a < 1 || b < 1) throw DomainError("sample_beta_integer: shapes must be positive integers");
  std::vector<double> u(static_cast<std::size_t>(a + b - 1));
  for (auto& x : u) x = stream.uniform_open();
  std::nth_element(u.begin(), u.begin() + (a - 1), u.end());
  return u[static_cast<std::size_t>(a - 1)];
}

Dataset generate_compliance_dataset(const DatasetOptions& opt) {
  if (opt.n_entities == 0 || opt.evidence_per_entity == 0) throw DomainError("dataset: sizes must be positive");
  if (opt.noise < 0.0 || opt.noise > 1.0 || opt.ambiguity < 0.0 || opt.registry < 0.0 ||
      opt.ambiguity + opt.registry > 1.0)
    throw DomainError("dataset: mixture fractions out of range");
  Dataset d;
  d.options = opt;
  RandomStream label_stream(opt.seed, kLabelStream);
  RandomStream split_stream(opt.seed, kSplitStream);
  RandomStream ev_stream(opt.seed, kEvidenceStream);
  RandomStream cred_stream(opt.seed, kCredibilityStream);
  RandomStream attr_stream(opt.seed, kAttributeStream);

  // 30 / 40 / 30 by largest remainder, ties to medium.
  const std::size_t n = opt.n_entities;
  std::size_t n_low = static_cast<std::size_t>(0.3 * static_cast<double>(n) + 0.5);
  std::size_t n_high = n_low;
  if (n_low + n_high > n) n_low = n_high = n / 2;
  std::vector<int> labels;
  labels.insert(labels.end(), n_low, 0);
  labels.insert(labels.end(), n - n_low - n_high, 1);
  labels.insert(labels.end(), n_high, 2);
  shuffle(labels, label_stream);

  std::size_t counter = 0;
  for (std::size_t i = 0; i < n; ++i) {
    SyntheticEntity e;
    char id[32];
    std::snprintf(id, sizeof id, "C%04zu", i + 1);
    e.entity_id = id;
    e.label = labels[i];
    e.year = 2020 + static_cast<int>(i % 3);
    const std::string company =
        std::string(pick(kNameHeads, attr_stream)) + " " + pick(kNameTails, attr_stream);

    static const double kBand[3][2] = {{0.20, 0.50}, {0.50, 0.75}, {0.75, 0.98}};
    const double score = kBand[e.label][0] + (kBand[e.label][1] - kBand[e.label][0]) * attr_stream.uniform();
    const double revenue = 1e7 + 2e9 * attr_stream.uniform();
    const double profit = revenue * (0.05 + 0.25 * attr_stream.uniform());
    const int violations = e.label == 0 ? 2 + static_cast<int>(attr_stream.uniform_index(4))
                           : e.label == 1 ? static_cast<int>(attr_stream.uniform_index(3))
                                          : 0;
    e.attributes = {{"company_id", e.entity_id},
                    {"company_name", company},
                    {"year", e.year},
                    {"industry", pick(kIndustries, attr_stream)},
                    {"country", pick(kCountries, attr_stream)},
                    {"revenue", std::round(revenue * 100.0) / 100.0},
                    {"profit", std::round(profit * 100.0) / 100.0},
                    {"tax_paid", std::round(profit * (0.1 + 0.15 * score) * 100.0) / 100.0},
                    {"num_employees", 20 + attr_stream.uniform_index(5000)},
                    {"subsidiaries", attr_stream.uniform_index(8)},
                    {"on_time_filing", e.label != 0},
                    {"accurate_reporting", e.label == 2 || (e.label == 1 && attr_stream.uniform() < 0.5)},
                    {"past_violations", violations},
                    {"audit_score", std::round(score * 10000.0) / 100.0},
                    {kPredicate, kDomain[static_cast<std::size_t>(e.label)]},
                    {"compliance_score", std::round(score * 1000.0) / 1000.0}};

    for (std::size_t j = 0; j < opt.evidence_per_entity; ++j) {
      ++counter;
      store::EvidenceRecord r;
      char eid[64];
      std::snprintf(eid, sizeof eid, "%s_E%03zu", id, counter);
      r.evidence_id = eid;
      r.entity_id = e.entity_id;
      r.predicate = kPredicate;

      // Registry facts are exact; narratives flip to an adjacent label with
      // probability `noise`.
      const double u = ev_stream.uniform();
      const int kind = u < opt.registry ? 2 : u < opt.registry + opt.ambiguity ? 1 : 0;
      int supports = e.label;
      if (kind != 2 && ev_stream.uniform() < opt.noise) supports = adjacent_label(e.label, ev_stream);
      r.text_content = evidence_text(supports, kind, company, e.year, ev_stream, r.evidence_type);
      r.supports_value = kDomain[static_cast<std::size_t>(supports)];
      r.source = kind == 2 ? "tax_authority_registry" : "external_auditor";
      r.credibility = 0.65 + 0.33 * sample_beta_integer(10, 2, cred_stream);
      r.credibility = std::round(r.credibility * 1e6) / 1e6;
      const std::int64_t day = 1 + static_cast<std::int64_t>(ev_stream.uniform_index(360));
      r.timestamp = format_iso8601(parse_iso8601(std::to_string(e.year) + "-01-01") + (day - 1) * 86400);
      r.embedding_id = static_cast<std::int64_t>(counter - 1);
      e.evidence_ids.push_back(r.evidence_id);
      d.evidence.push_back(std::move(r));
    }
    d.entities.push_back(std::move(e));
  }

  // Entity-stratified 70 / 15 / 15 split.
  std::vector<std::vector<std::size_t>> by_class(3);
  for (std::size_t i = 0; i < n; ++i) by_class[static_cast<std::size_t>(d.entities[i].label)].push_back(i);
  const auto cells = stratified_counts({by_class[0].size(), by_class[1].size(), by_class[2].size()},
                                       {0.70, 0.15, 0.15});
  std::vector<std::string>* targets[3] = {&d.train, &d.val, &d.test};
  for (std::size_t c = 0; c < 3; ++c) {
    shuffle(by_class[c], split_stream);
    std::size_t pos = 0;
    for (std::size_t s = 0; s < 3; ++s)
      for (std::size_t k = 0; k < cells[c][s]; ++k) targets[s]->push_back(d.entities[by_class[c][pos++]].entity_id);
  }
  for (auto* t : targets) std::sort(t->begin(), t->end());
  return d;
}

void write_dataset(const Dataset& d, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw std::runtime_error("cannot create dataset directory " + dir);
  auto open = [&dir](const char* name) {
    std::ofstream out(fs::path(dir) / name, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + (fs::path(dir) / name).string());
    return out;
  };
  {
    std::ofstream out = open("entities.jsonl");
    for (const auto& e : d.entities) {
      json row = e.attributes;
      row["entity_id"] = e.entity_id;
      row["evidence_ids"] = e.evidence_ids;
      out << row.dump() << '\n';
    }
  }
  {
    std::ofstream out = open("evidence.jsonl");
    for (const auto& r : d.evidence) out << store::to_json(r).dump() << '\n';
  }
  {
    std::ofstream out = open("splits.json");
    const json opts = {{"seed", d.options.seed},
                       {"n_entities", d.options.n_entities},
                       {"evidence_per_entity", d.options.evidence_per_entity},
                       {"noise", d.options.noise},
                       {"ambiguity", d.options.ambiguity},
                       {"registry", d.options.registry}};
    out << json{{"train", d.train}, {"val", d.val}, {"test", d.test}, {"options", opts}}.dump(1) << '\n';
  }
}

Dataset read_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  auto open = [&dir](const char* name) {
    std::ifstream in(fs::path(dir) / name);
    if (!in) throw NotFound("dataset file missing: " + (fs::path(dir) / name).string());
    return in;
  };
  Dataset d;
  try {
    std::ifstream in = open("entities.jsonl");
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      json row = json::parse(line);
      SyntheticEntity e;
      e.entity_id = row.at("entity_id").get<std::string>();
      const auto label = row.at(kPredicate).get<std::string>();
      e.label = static_cast<int>(std::find(kDomain.begin(), kDomain.end(), label) - kDomain.begin());
      if (e.label >= 3) throw DomainError("unknown label " + label);
      e.year = row.value("year", 2020);
      e.evidence_ids = row.at("evidence_ids").get<std::vector<std::string>>();
      row.erase("entity_id");
      row.erase("evidence_ids");
      e.attributes = std::move(row);
      d.entities.push_back(std::move(e));
    }
    std::ifstream ev = open("evidence.jsonl");
    while (std::getline(ev, line))
      if (!line.empty()) d.evidence.push_back(store::record_from_json(json::parse(line)));
    std::ifstream sp = open("splits.json");
    const json s = json::parse(sp);
    d.train = s.at("train").get<std::vector<std::string>>();
    d.val = s.at("val").get<std::vector<std::string>>();
    d.test = s.at("test").get<std::vector<std::string>>();
    if (s.contains("options")) {
      const json& o = s.at("options");
      d.options.seed = o.value("seed", d.options.seed);
      d.options.n_entities = o.value("n_entities", d.options.n_entities);
      d.options.evidence_per_entity = o.value("evidence_per_entity", d.options.evidence_per_entity);
      d.options.noise = o.value("noise", d.options.noise);
      d.options.ambiguity = o.value("ambiguity", d.options.ambiguity);
      d.options.registry = o.value("registry", d.options.registry);
    }
  } catch (const json::exception& e) {
    throw DomainError("dataset in " + dir + " is malformed: " + e.what());
  }
  return d;
}

}  // namespace lpf::data
