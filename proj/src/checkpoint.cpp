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

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "lpf/digest.hpp"
#include "lpf/neuralnets.hpp"

namespace lpf::nn {

using nlohmann::json;

namespace {

constexpr const char* kFormat = "lpf-checkpoint-v1";

// nlohmann writes doubles in shortest round-trip form, so tensors reload
// bit-exactly.
json tensors_to_json(const std::vector<const Matrix*>& params) {
  json arr = json::array();
  for (const Matrix* m : params) {
    std::vector<double> data(m->data(), m->data() + m->size());
    arr.push_back({{"rows", m->rows()}, {"cols", m->cols()}, {"data", data}});
  }
  return arr;
}

void tensors_from_json(const json& arr, const std::vector<Matrix*>& params, const char* what) {
  if (!arr.is_array() || arr.size() != params.size())
    throw DomainError(std::string("checkpoint: ") + what + " tensor count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto rows = arr[i].at("rows").get<Eigen::Index>();
    const auto cols = arr[i].at("cols").get<Eigen::Index>();
    const auto data = arr[i].at("data").get<std::vector<double>>();
    if (rows != params[i]->rows() || cols != params[i]->cols() ||
        static_cast<Eigen::Index>(data.size()) != rows * cols)
      throw DomainError(std::string("checkpoint: ") + what + " tensor " + std::to_string(i) +
                        " has inconsistent dimensions");
    *params[i] = Eigen::Map<const Matrix>(data.data(), rows, cols);
  }
}

}  // namespace

void save_checkpoint(const ModelBundle& b, const std::string& path) {
  json j;
  j["format"] = kFormat;
  j["seed"] = b.seed;
  const EncoderArch& ea = b.encoder.arch();
  j["encoder"] = {{"input_dim", ea.input_dim},
                  {"hidden", ea.hidden},
                  {"latent_dim", ea.latent_dim},
                  {"dropout", b.encoder.dropout_rate},
                  {"tensors", tensors_to_json(b.encoder.parameters())}};
  const DecoderArch& da = b.decoder.arch();
  json preds = json::array();
  for (const auto& p : b.decoder.predicates()) preds.push_back({{"name", p.name}, {"domain", p.domain}});
  j["decoder"] = {{"latent_dim", da.latent_dim},
                  {"predicate_embedding_dim", da.predicate_embedding_dim},
                  {"hidden", da.hidden},
                  {"predicates", preds},
                  {"dropout", b.decoder.dropout_rate},
                  {"tensors", tensors_to_json(b.decoder.parameters())}};
  if (b.aggregator) {
    const AggregatorArch& aa = b.aggregator->arch();
    j["aggregator"] = {{"latent_dim", aa.latent_dim},
                       {"quality_hidden", aa.quality_hidden},
                       {"consistency_hidden", aa.consistency_hidden},
                       {"weight_hidden", aa.weight_hidden},
                       {"dropout", b.aggregator->dropout_rate},
                       {"tensors", tensors_to_json(b.aggregator->parameters())}};
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  out << j.dump() << '\n';
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

ModelBundle load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFound("checkpoint: cannot open " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw DomainError("checkpoint: malformed file " + path + ": " + e.what());
  }
  try {
    if (j.at("format") != kFormat) throw DomainError("checkpoint: unsupported format");
    ModelBundle b;
    b.seed = j.at("seed").get<std::uint64_t>();

    const json& je = j.at("encoder");
    EncoderArch ea;
    ea.input_dim = je.at("input_dim").get<Eigen::Index>();
    ea.hidden = je.at("hidden").get<std::vector<Eigen::Index>>();
    ea.latent_dim = je.at("latent_dim").get<Eigen::Index>();
    b.encoder = EncoderModel(ea, je.at("dropout").get<double>());
    tensors_from_json(je.at("tensors"), b.encoder.parameters(), "encoder");

    const json& jd = j.at("decoder");
    DecoderArch da;
    da.latent_dim = jd.at("latent_dim").get<Eigen::Index>();
    da.predicate_embedding_dim = jd.at("predicate_embedding_dim").get<Eigen::Index>();
    da.hidden = jd.at("hidden").get<std::vector<Eigen::Index>>();
    if (da.latent_dim != ea.latent_dim) throw DomainError("checkpoint: encoder/decoder latent dims differ");
    std::vector<PredicateSpec> preds;
    for (const auto& p : jd.at("predicates"))
      preds.push_back({p.at("name").get<std::string>(), p.at("domain").get<std::vector<std::string>>()});
    b.decoder = DecoderModel(da, std::move(preds), jd.at("dropout").get<double>());
    tensors_from_json(jd.at("tensors"), b.decoder.parameters(), "decoder");

    if (j.contains("aggregator")) {
      const json& ja = j.at("aggregator");
      AggregatorArch aa;
      aa.latent_dim = ja.at("latent_dim").get<Eigen::Index>();
      aa.quality_hidden = ja.at("quality_hidden").get<std::vector<Eigen::Index>>();
      aa.consistency_hidden = ja.at("consistency_hidden").get<std::vector<Eigen::Index>>();
      aa.weight_hidden = ja.at("weight_hidden").get<std::vector<Eigen::Index>>();
      if (aa.latent_dim != ea.latent_dim) throw DomainError("checkpoint: aggregator latent dim differs");
      AggregatorModel agg(aa, ja.at("dropout").get<double>());
      tensors_from_json(ja.at("tensors"), agg.parameters(), "aggregator");
      b.aggregator = std::move(agg);
    }
    return b;
  } catch (const json::exception& e) {
    throw DomainError("checkpoint: missing or mistyped field in " + path + ": " + e.what());
  }
}

std::string parameter_digest(std::span<const Matrix* const> params) {
  std::string bytes;
  for (const Matrix* m : params) {
    const std::int64_t dims[2] = {m->rows(), m->cols()};
    bytes.append(reinterpret_cast<const char*>(dims), sizeof dims);
    bytes.append(reinterpret_cast<const char*>(m->data()), sizeof(double) * static_cast<std::size_t>(m->size()));
  }
  return sha256_hex(bytes).substr(0, 16);
}

}  // namespace lpf::nn
