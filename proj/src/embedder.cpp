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


#include <cctype>

#include "lpf/digest.hpp"
#include "lpf/evidence_store.hpp"

namespace lpf::store {

namespace {

// Second token hash, independent of FNV-1a: a multiplicative rolling hash
// finished with a 64-bit avalanche.
std::uint64_t sign_hash(std::string_view token) {
  std::uint64_t h = 0x243f6a8885a308d3ULL;
  for (const char c : token) {
    h ^= static_cast<unsigned char>(c);
    h *= 0xff51afd7ed558ccdULL;
    h = (h << 31) | (h >> 33);
  }
  return mix64(h);
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (const char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

Vector embed_text(std::string_view text, Eigen::Index dim) {
  if (dim <= 0) throw DomainError("embed_text: dimension must be positive");
  Vector v = Vector::Zero(dim);
  for (const auto& tok : tokenize(text)) {
    const auto idx = static_cast<Eigen::Index>(fnv1a64(tok) % static_cast<std::uint64_t>(dim));
    v(idx) += (sign_hash(tok) >> 63) ? -1.0 : 1.0;
  }
  const double n = v.norm();
  if (n > 0.0) v /= n;
  return v;
}

}  // namespace lpf::store
