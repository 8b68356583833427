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


#include "lpf/evidence_store.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "lpf/clock.hpp"

namespace lpf::store {

using nlohmann::json;

json to_json(const EvidenceRecord& r) {
  json j = {{"evidence_id", r.evidence_id},     {"entity_id", r.entity_id},
            {"predicate", r.predicate},         {"text_content", r.text_content},
            {"embedding_id", r.embedding_id},   {"credibility", r.credibility},
            {"timestamp", r.timestamp},         {"evidence_type", r.evidence_type},
            {"source", r.source}};
  j["supports_value"] = r.supports_value ? json(*r.supports_value) : json(nullptr);
  return j;
}

EvidenceRecord record_from_json(const json& j) {
  try {
    EvidenceRecord r;
    r.evidence_id = j.at("evidence_id").get<std::string>();
    r.entity_id = j.at("entity_id").get<std::string>();
    r.predicate = j.at("predicate").get<std::string>();
    r.text_content = j.at("text_content").get<std::string>();
    r.credibility = j.at("credibility").get<double>();
    r.timestamp = j.at("timestamp").get<std::string>();
    r.evidence_type = j.value("evidence_type", std::string());
    r.source = j.value("source", std::string());
    if (j.contains("embedding_id") && !j.at("embedding_id").is_null())
      r.embedding_id = j.at("embedding_id").get<std::int64_t>();
    if (j.contains("supports_value") && !j.at("supports_value").is_null())
      r.supports_value = j.at("supports_value").get<std::string>();
    return r;
  } catch (const json::exception& e) {
    throw DomainError(std::string("evidence record: ") + e.what());
  }
}

std::optional<std::string> EvidenceStore::add(const EvidenceRecord& in, IngestStats& stats) {
  if (in.evidence_id.empty()) return "empty evidence_id";
  if (by_id_.count(in.evidence_id)) return "duplicate evidence_id";
  if (!(in.credibility >= 0.0 && in.credibility <= 1.0)) return "credibility outside [0, 1]";
  try {
    parse_iso8601(in.timestamp);
  } catch (const DomainError& e) {
    return e.what();
  }
  EvidenceRecord r = in;
  if (r.embedding_id < 0) r.embedding_id = next_embedding_id_;
  if (!embeddings_.count(r.embedding_id)) {
    embeddings_[r.embedding_id] = embed_text(r.text_content);
    ++stats.embedded;
  }
  next_embedding_id_ = std::max(next_embedding_id_, r.embedding_id + 1);
  by_id_[r.evidence_id] = records_.size();
  index_[{r.entity_id, r.predicate}].push_back(r.evidence_id);
  records_.push_back(std::move(r));
  ++stats.accepted;
  return std::nullopt;
}

IngestStats EvidenceStore::ingest(const std::vector<EvidenceRecord>& records) {
  IngestStats stats;
  for (const auto& r : records)
    if (auto err = add(r, stats)) stats.rejected.push_back({0, r.evidence_id, *err});
  stats.pairs = index_.size();
  return stats;
}

IngestStats EvidenceStore::ingest_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw NotFound("evidence file not found: " + path);
  IngestStats stats;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    EvidenceRecord r;
    try {
      r = record_from_json(json::parse(line));
    } catch (const std::exception& e) {
      stats.rejected.push_back({n, "", std::string("malformed row: ") + e.what()});
      continue;
    }
    if (auto err = add(r, stats)) stats.rejected.push_back({n, r.evidence_id, *err});
  }
  stats.pairs = index_.size();
  return stats;
}

void EvidenceStore::save_jsonl(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& r : records_) out << to_json(r).dump() << '\n';
}

std::size_t EvidenceStore::import_embeddings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw NotFound("embedding file not found: " + path);
  std::size_t applied = 0;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      const auto id = j.at("evidence_id").get<std::string>();
      const auto values = j.at("embedding").get<std::vector<double>>();
      if (static_cast<Eigen::Index>(values.size()) != kEmbeddingDim)
        throw DomainError("expected " + std::to_string(kEmbeddingDim) + " values");
      auto it = by_id_.find(id);
      if (it == by_id_.end()) continue;
      embeddings_[records_[it->second].embedding_id] = Eigen::Map<const Vector>(values.data(), kEmbeddingDim);
      ++applied;
    } catch (const std::exception& e) {
      throw DomainError(path + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return applied;
}

const EvidenceRecord& EvidenceStore::record(const std::string& evidence_id) const {
  auto it = by_id_.find(evidence_id);
  if (it == by_id_.end()) throw NotFound("unknown evidence id " + evidence_id);
  return records_[it->second];
}

const Vector& EvidenceStore::embedding(const std::string& evidence_id) const {
  return embeddings_.at(record(evidence_id).embedding_id);
}

std::vector<std::string> EvidenceStore::lookup(const std::string& entity_id, const std::string& predicate) const {
  auto it = index_.find({entity_id, predicate});
  return it == index_.end() ? std::vector<std::string>{} : it->second;
}

std::vector<std::string> EvidenceStore::search(const std::string& entity_id, const std::string& predicate,
                                               std::size_t top_k,
                                               const std::optional<std::string>& query_text) const {
  if (top_k == 0) throw DomainError("search: top_k must be at least 1");
  std::vector<std::string> ids = lookup(entity_id, predicate);
  if (query_text) {
    const Vector q = embed_text(*query_text);
    std::vector<std::pair<double, std::string>> scored;
    for (auto& id : ids) scored.emplace_back(q.dot(embedding(id)), std::move(id));
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    ids.clear();
    for (auto& s : scored) ids.push_back(std::move(s.second));
  }
  if (ids.size() > top_k) ids.resize(top_k);
  return ids;
}

void EvidenceStore::add_canonical(CanonicalFact fact) {
  parse_iso8601(fact.timestamp);
  Key k{fact.entity_id, fact.predicate};
  canonical_[k] = std::move(fact);
}

std::size_t EvidenceStore::load_canonical_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw NotFound("canonical file not found: " + path);
  std::size_t n_loaded = 0;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      add_canonical({j.at("entity_id").get<std::string>(), j.at("predicate").get<std::string>(),
                     j.at("value").get<std::string>(), j.at("confidence").get<double>(),
                     j.at("timestamp").get<std::string>()});
      ++n_loaded;
    } catch (const std::exception& e) {
      throw DomainError(path + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return n_loaded;
}

void EvidenceStore::save_canonical_jsonl(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& [k, f] : canonical_)
    out << json{{"entity_id", f.entity_id},
                {"predicate", f.predicate},
                {"value", f.value},
                {"confidence", f.confidence},
                {"timestamp", f.timestamp}}
               .dump()
        << '\n';
}

std::optional<CanonicalFact> EvidenceStore::canonical_get(const std::string& entity_id,
                                                          const std::string& predicate,
                                                          const std::string& now,
                                                          double staleness_days) const {
  const std::int64_t now_s = parse_iso8601(now);
  auto it = canonical_.find({entity_id, predicate});
  if (it == canonical_.end()) return std::nullopt;
  const CanonicalFact& f = it->second;
  if (f.confidence < kCanonicalMinConfidence) return std::nullopt;
  const double age_days = static_cast<double>(now_s - parse_iso8601(f.timestamp)) / 86400.0;
  if (age_days > staleness_days) return std::nullopt;
  return f;
}

}  // namespace lpf::store
