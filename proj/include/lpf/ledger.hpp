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


// Append-only, hash-chained provenance ledger stored as JSONL. Each line is
// the canonical serialization of one record: sorted keys, no whitespace,
// floats at 12 significant digits. The hash covers every other field.

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace lpf::ledger {

inline const std::string kGenesisHash(64, '0');

struct FactorEntry {
  std::string evidence_id;
  double weight = 1.0;
  std::map<std::string, double> potential;
};

struct ProvenanceRecord {
  std::string record_id;
  std::string timestamp;
  std::string entity_id;
  std::string predicate;
  std::map<std::string, double> distribution;
  std::string top_value;
  double confidence = 0.0;
  std::vector<std::string> evidence_chain;
  std::vector<FactorEntry> factor_metadata;
  std::map<std::string, std::string> model_versions;
  nlohmann::json hyperparameters = nlohmann::json::object();
  double execution_time_ms = 0.0;
  std::string prev_hash;
  std::string hash;
};

nlohmann::json to_json(const ProvenanceRecord& r);
ProvenanceRecord record_from_json(const nlohmann::json& j);

/// Sorted keys, no whitespace, floats as %.12g. Throws DomainError on
/// non-finite numbers.
std::string canonical_dump(const nlohmann::json& j);

/// SHA-256 hex of the canonical form of every field except "hash".
std::string record_hash(const ProvenanceRecord& r);

std::string format_record_id(std::uint64_t n);

struct AppendResult {
  std::string record_id;
  std::string hash;
};

class Ledger {
 public:
  using Clock = std::function<std::string()>;

  /// Opens (or creates on first append) the file and resumes the chain.
  explicit Ledger(std::string path, Clock clock = {});

  /// Fills record_id, timestamp, prev_hash and hash; writes one line.
  AppendResult append(ProvenanceRecord fields);

  const std::string& path() const { return path_; }
  std::uint64_t size() const { return count_; }
  const std::string& last_hash() const { return last_hash_; }

 private:
  std::string path_;
  Clock clock_;
  std::uint64_t count_ = 0;
  std::string last_hash_ = kGenesisHash;
};

struct VerifyReport {
  bool ok = true;
  std::size_t records = 0;     // records checked successfully
  std::size_t failed_line = 0;  // 1-based line of the first failure
  std::string failed_record_id;
  std::string message;
};

VerifyReport verify(const std::string& path);

std::vector<ProvenanceRecord> read_all(const std::string& path);

/// Throws NotFound for an unknown id.
ProvenanceRecord replay(const std::string& path, const std::string& record_id);

}  // namespace lpf::ledger
