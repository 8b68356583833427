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


#include "lpf/ledger.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "lpf/clock.hpp"
#include "lpf/digest.hpp"
#include "lpf/numerics.hpp"

namespace lpf::ledger {

using nlohmann::json;

namespace {

void dump_string(const std::string& s, std::string& out) {
  // nlohmann's escaping is deterministic; reuse it for strings.
  out += json(s).dump();
}

void dump_value(const json& j, std::string& out) {
  switch (j.type()) {
    case json::value_t::object: {
      // nlohmann's default object type is a std::map, so iteration is sorted.
      out.push_back('{');
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out.push_back(',');
        first = false;
        dump_string(it.key(), out);
        out.push_back(':');
        dump_value(it.value(), out);
      }
      out.push_back('}');
      break;
    }
    case json::value_t::array: {
      out.push_back('[');
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) out.push_back(',');
        dump_value(j[i], out);
      }
      out.push_back(']');
      break;
    }
    case json::value_t::number_float: {
      double v = j.get<double>();
      if (!std::isfinite(v)) throw DomainError("ledger: non-finite number cannot be serialized");
      if (v == 0.0) v = 0.0;  // drop the sign of -0
      char buf[40];
      std::snprintf(buf, sizeof buf, "%.12g", v);
      out += buf;
      break;
    }
    case json::value_t::string:
      dump_string(j.get_ref<const std::string&>(), out);
      break;
    case json::value_t::discarded:
      throw DomainError("ledger: cannot serialize a discarded value");
    default:
      out += j.dump();
  }
}

}  // namespace

std::string canonical_dump(const json& j) {
  std::string out;
  dump_value(j, out);
  return out;
}

std::string format_record_id(std::uint64_t n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "INF%08llu", static_cast<unsigned long long>(n));
  return buf;
}

json to_json(const ProvenanceRecord& r) {
  json factors = json::array();
  for (const auto& f : r.factor_metadata)
    factors.push_back({{"evidence_id", f.evidence_id}, {"weight", f.weight}, {"potential", f.potential}});
  return {{"record_id", r.record_id},
          {"timestamp", r.timestamp},
          {"entity_id", r.entity_id},
          {"predicate", r.predicate},
          {"distribution", r.distribution},
          {"top_value", r.top_value},
          {"confidence", r.confidence},
          {"evidence_chain", r.evidence_chain},
          {"factor_metadata", factors},
          {"model_versions", r.model_versions},
          {"hyperparameters", r.hyperparameters},
          {"execution_time_ms", r.execution_time_ms},
          {"prev_hash", r.prev_hash},
          {"hash", r.hash}};
}

ProvenanceRecord record_from_json(const json& j) {
  try {
    ProvenanceRecord r;
    r.record_id = j.at("record_id").get<std::string>();
    r.timestamp = j.at("timestamp").get<std::string>();
    r.entity_id = j.at("entity_id").get<std::string>();
    r.predicate = j.at("predicate").get<std::string>();
    r.distribution = j.at("distribution").get<std::map<std::string, double>>();
    r.top_value = j.at("top_value").get<std::string>();
    r.confidence = j.at("confidence").get<double>();
    r.evidence_chain = j.at("evidence_chain").get<std::vector<std::string>>();
    for (const auto& f : j.at("factor_metadata"))
      r.factor_metadata.push_back({f.at("evidence_id").get<std::string>(), f.at("weight").get<double>(),
                                   f.at("potential").get<std::map<std::string, double>>()});
    r.model_versions = j.at("model_versions").get<std::map<std::string, std::string>>();
    r.hyperparameters = j.at("hyperparameters");
    if (!r.hyperparameters.is_object()) throw DomainError("hyperparameters must be an object");
    r.execution_time_ms = j.at("execution_time_ms").get<double>();
    r.prev_hash = j.at("prev_hash").get<std::string>();
    r.hash = j.at("hash").get<std::string>();
    return r;
  } catch (const json::exception& e) {
    throw DomainError(std::string("provenance record: ") + e.what());
  }
}

std::string record_hash(const ProvenanceRecord& r) {
  json j = to_json(r);
  j.erase("hash");
  return sha256_hex(canonical_dump(j));
}

Ledger::Ledger(std::string path, Clock clock) : path_(std::move(path)), clock_(std::move(clock)) {
  if (!clock_) clock_ = now_iso8601;
  std::ifstream in(path_);
  if (!in) return;
  std::string line, last;
  while (std::getline(in, line))
    if (!line.empty()) {
      last = line;
      ++count_;
    }
  if (count_ > 0) last_hash_ = record_from_json(json::parse(last)).hash;
}

AppendResult Ledger::append(ProvenanceRecord r) {
  r.record_id = format_record_id(count_ + 1);
  r.timestamp = clock_();
  r.prev_hash = last_hash_;
  r.hash.clear();
  r.hash = record_hash(r);
  // Serialize fully before touching the file so a failure writes nothing.
  const std::string line = canonical_dump(to_json(r)) + "\n";
  std::ofstream out(path_, std::ios::binary | std::ios::app);
  if (!out) throw std::runtime_error("ledger: cannot open " + path_);
  out << line;
  out.flush();
  if (!out) throw std::runtime_error("ledger: write failed for " + path_);
  ++count_;
  last_hash_ = r.hash;
  return {r.record_id, r.hash};
}

VerifyReport verify(const std::string& path) {
  VerifyReport rep;
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    rep.ok = false;
    rep.message = "cannot open " + path;
    return rep;
  }
  std::string prev = kGenesisHash;
  std::string line;
  std::size_t n = 0;
  auto fail = [&](std::string id, std::string msg) {
    rep.ok = false;
    rep.failed_line = n;
    rep.failed_record_id = std::move(id);
    rep.message = std::move(msg);
  };
  while (std::getline(in, line)) {
    ++n;
    ProvenanceRecord r;
    json j;
    try {
      j = json::parse(line);
      r = record_from_json(j);
    } catch (const std::exception& e) {
      fail("", "line " + std::to_string(n) + ": unparseable record: " + e.what());
      return rep;
    }
    const std::string id = r.record_id;
    if (canonical_dump(j) != line) {
      fail(id, "record " + id + " is not in canonical form");
      return rep;
    }
    if (r.record_id != format_record_id(n)) {
      fail(id, "record " + id + " out of sequence at line " + std::to_string(n));
      return rep;
    }
    if (r.prev_hash != prev) {
      fail(id, "record " + id + " does not chain to its predecessor");
      return rep;
    }
    if (record_hash(r) != r.hash) {
      fail(id, "record " + id + " hash mismatch");
      return rep;
    }
    prev = r.hash;
    ++rep.records;
  }
  return rep;
}

std::vector<ProvenanceRecord> read_all(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw NotFound("ledger not found: " + path);
  std::vector<ProvenanceRecord> out;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(record_from_json(json::parse(line)));
  return out;
}

ProvenanceRecord replay(const std::string& path, const std::string& record_id) {
  for (auto& r : read_all(path))
    if (r.record_id == record_id) return r;
  throw NotFound("no ledger record " + record_id);
}

}  // namespace lpf::ledger
