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


// Evidence ingestion and retrieval: a feature-hash text embedder, an
// (entity, predicate) hash index with exact cosine reranking, JSONL
// persistence, and the canonical-fact table.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lpf/numerics.hpp"

namespace lpf::store {

inline constexpr Eigen::Index kEmbeddingDim = 384;

/// Lowercased alphanumeric tokens, each hashed to an index and a sign;
/// L2-normalized. The zero vector when there are no tokens.
Vector embed_text(std::string_view text, Eigen::Index dim = kEmbeddingDim);

std::vector<std::string> tokenize(std::string_view text);

struct EvidenceRecord {
  std::string evidence_id;
  std::string entity_id;
  std::string predicate;
  std::string text_content;
  double credibility = 1.0;
  std::string timestamp;
  std::string evidence_type;
  std::string source;
  std::int64_t embedding_id = -1;  // -1: assigned at ingestion
  std::optional<std::string> supports_value;

  bool operator==(const EvidenceRecord&) const = default;
};

nlohmann::json to_json(const EvidenceRecord& r);
/// Throws DomainError on missing or mistyped fields.
EvidenceRecord record_from_json(const nlohmann::json& j);

struct CanonicalFact {
  std::string entity_id;
  std::string predicate;
  std::string value;
  double confidence = 1.0;
  std::string timestamp;

  bool operator==(const CanonicalFact&) const = default;
};

inline constexpr double kCanonicalMinConfidence = 0.95;

struct IngestIssue {
  std::size_t line = 0;  // 1-based; 0 for in-memory input
  std::string evidence_id;
  std::string message;
};

struct IngestStats {
  std::size_t accepted = 0;
  std::size_t embedded = 0;  // texts embedded during this ingestion
  std::size_t pairs = 0;     // distinct (entity, predicate) keys after ingestion
  std::vector<IngestIssue> rejected;
};

class EvidenceStore {
 public:
  IngestStats ingest(const std::vector<EvidenceRecord>& records);
  IngestStats ingest_jsonl(const std::string& path);
  void save_jsonl(const std::string& path) const;

  /// Sidecar rows {evidence_id, embedding: [dim floats]}; returns rows applied.
  std::size_t import_embeddings(const std::string& path);

  std::size_t size() const { return records_.size(); }
  bool contains(const std::string& evidence_id) const { return by_id_.count(evidence_id) > 0; }
  /// Throws NotFound.
  const EvidenceRecord& record(const std::string& evidence_id) const;
  const Vector& embedding(const std::string& evidence_id) const;
  const std::vector<EvidenceRecord>& records() const { return records_; }

  /// Ingestion-order evidence for the pair.
  std::vector<std::string> lookup(const std::string& entity_id, const std::string& predicate) const;

  /// Exact lookup, optional cosine rerank against the query text (ties by
  /// evidence_id ascending), truncated to top_k.
  std::vector<std::string> search(const std::string& entity_id, const std::string& predicate,
                                  std::size_t top_k,
                                  const std::optional<std::string>& query_text = std::nullopt) const;

  void add_canonical(CanonicalFact fact);
  std::size_t load_canonical_jsonl(const std::string& path);
  void save_canonical_jsonl(const std::string& path) const;
  std::optional<CanonicalFact> canonical_get(const std::string& entity_id, const std::string& predicate,
                                             const std::string& now, double staleness_days = 30.0) const;

 private:
  using Key = std::pair<std::string, std::string>;

  std::optional<std::string> add(const EvidenceRecord& r, IngestStats& stats);

  std::vector<EvidenceRecord> records_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::map<Key, std::vector<std::string>> index_;
  std::map<std::int64_t, Vector> embeddings_;
  std::int64_t next_embedding_id_ = 0;
  std::map<Key, CanonicalFact> canonical_;
};

}  // namespace lpf::store
