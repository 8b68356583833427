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


#include "run_config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace lpf::cli {

namespace {

const std::vector<std::pair<std::string, std::string>> kDefaults{
    {"paths.data_dir", "data"},
    {"paths.model_dir", "models"},
    {"paths.ledger", "ledger.jsonl"},
    {"paths.output_dir", "results"},
    {"data.seed", "42"},
    {"data.n_entities", "900"},
    {"data.evidence_per_entity", "5"},
    {"data.noise", "0.1"},
    {"data.ambiguity", "0.2"},
    {"data.registry", "0.6"},
    {"train.seeds", "1,2,3"},
    {"train.lr", "0.001"},
    {"train.batch_size", "64"},
    {"train.beta", "0.01"},
    {"train.patience", "5"},
    {"train.max_epochs", "100"},
    {"train.dropout", "0.1"},
    {"train.aggregator_epochs", "30"},
    {"train.aggregator_lr", "0.001"},
    {"train.aggregator_batch_size", "32"},
    {"calibration.alphas", "0.1,1,2,5"},
    {"calibration.temperatures", "0.8,1,1.2,1.5"},
    {"query.top_k", "5"},
    {"query.n_samples", "16"},
    {"query.temperature", "1.0"},
    {"query.alpha", "2.0"},
    {"query.variant", "spn"},
    {"query.seed", "0"},
    {"query.staleness_days", "30"},
    {"query.calibration", "fixed"},
    {"query.now", ""},
    {"metrics.ece_bins", "10"},
};

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void require_range(const std::string& key, double v, double lo, double hi) {
  if (!(v >= lo && v <= hi))
    throw ConfigError(key + " = " + std::to_string(v) + " outside [" + std::to_string(lo) + ", " +
                      std::to_string(hi) + "]");
}

}  // namespace

RunConfig::RunConfig() {
  for (const auto& [k, v] : kDefaults) assign(k, v, "default");
}

void RunConfig::assign(const std::string& key, const std::string& value, const std::string& origin) {
  values_[key] = value;
  origins_[key] = origin;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!values_.count(key)) throw ConfigError("unknown config key " + key);
  assign(key, value, "flag");
}

void RunConfig::set_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got " + assignment);
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void RunConfig::load_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(origin + ":" + std::to_string(n) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (!values_.count(key)) throw ConfigError(origin + ":" + std::to_string(n) + ": unknown key " + key);
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    assign(key, value, origin);
  }
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  load_text(ss.str(), path);
}

std::string RunConfig::env_name(const std::string& key) {
  std::string out = "LPF_";
  for (char c : key) out += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

void RunConfig::apply_environment(const std::function<std::optional<std::string>(const std::string&)>& getenv) {
  for (auto& [key, value] : values_)
    if (auto v = getenv(env_name(key))) {
      value = *v;
      origins_[key] = "env";
    }
}

void RunConfig::apply_environment() {
  apply_environment([](const std::string& name) -> std::optional<std::string> {
    if (const char* v = std::getenv(name.c_str())) return std::string(v);
    return std::nullopt;
  });
}

const std::string& RunConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key " + key);
  return it->second;
}

double RunConfig::number(const std::string& key) const {
  const std::string& s = get(key);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || *end != '\0') throw ConfigError(key + ": expected a number, got '" + s + "'");
  return v;
}

std::int64_t RunConfig::integer(const std::string& key) const {
  const std::string& s = get(key);
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ConfigError(key + ": expected an integer, got '" + s + "'");
  return v;
}

std::vector<double> RunConfig::numbers(const std::string& key) const {
  std::vector<double> out;
  for (const auto& item : split_list(get(key))) {
    char* end = nullptr;
    const double v = std::strtod(item.c_str(), &end);
    if (*end != '\0') throw ConfigError(key + ": expected numbers, got '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

std::vector<std::uint64_t> RunConfig::seeds(const std::string& key) const {
  std::vector<std::uint64_t> out;
  for (const auto& item : split_list(get(key))) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || ptr != item.data() + item.size())
      throw ConfigError(key + ": expected seeds, got '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError(key + ": empty seed list");
  return out;
}

std::string RunConfig::dump() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

data::DatasetOptions RunConfig::dataset_options() const {
  data::DatasetOptions o;
  o.seed = static_cast<std::uint64_t>(integer("data.seed"));
  const auto n = integer("data.n_entities");
  const auto per = integer("data.evidence_per_entity");
  if (n <= 0 || per <= 0) throw ConfigError("data.n_entities and data.evidence_per_entity must be positive");
  o.n_entities = static_cast<std::size_t>(n);
  o.evidence_per_entity = static_cast<std::size_t>(per);
  o.noise = number("data.noise");
  o.ambiguity = number("data.ambiguity");
  o.registry = number("data.registry");
  require_range("data.noise", o.noise, 0.0, 1.0);
  require_range("data.ambiguity", o.ambiguity, 0.0, 1.0);
  require_range("data.registry", o.registry, 0.0, 1.0);
  return o;
}

nn::TrainOptions RunConfig::train_options() const {
  nn::TrainOptions o;
  o.learning_rate = number("train.lr");
  require_range("train.lr", o.learning_rate, 1e-6, 1.0);
  const auto batch = integer("train.batch_size");
  if (batch <= 0) throw ConfigError("train.batch_size must be positive");
  o.batch_size = static_cast<std::size_t>(batch);
  o.beta = number("train.beta");
  require_range("train.beta", o.beta, 0.0, 10.0);
  o.patience = static_cast<int>(integer("train.patience"));
  o.max_epochs = static_cast<int>(integer("train.max_epochs"));
  if (o.patience < 1 || o.max_epochs < 1) throw ConfigError("train.patience and train.max_epochs must be positive");
  o.dropout = number("train.dropout");
  require_range("train.dropout", o.dropout, 0.0, 0.9);
  return o;
}

nn::AggregatorTrainOptions RunConfig::aggregator_options() const {
  nn::AggregatorTrainOptions o;
  o.epochs = static_cast<int>(integer("train.aggregator_epochs"));
  if (o.epochs < 1) throw ConfigError("train.aggregator_epochs must be positive");
  o.learning_rate = number("train.aggregator_lr");
  require_range("train.aggregator_lr", o.learning_rate, 1e-6, 1.0);
  const auto batch = integer("train.aggregator_batch_size");
  if (batch <= 0) throw ConfigError("train.aggregator_batch_size must be positive");
  o.batch_size = static_cast<std::size_t>(batch);
  o.dropout = number("train.dropout");
  return o;
}

QueryOptions RunConfig::query_options() const {
  QueryOptions o;
  const auto k = integer("query.top_k");
  if (k < 1) throw ConfigError("query.top_k must be at least 1");
  o.top_k = static_cast<std::size_t>(k);
  o.n_samples = static_cast<int>(integer("query.n_samples"));
  if (o.n_samples < 1) throw ConfigError("query.n_samples must be at least 1");
  o.temperature = number("query.temperature");
  require_range("query.temperature", o.temperature, 1e-3, 100.0);
  o.alpha = number("query.alpha");
  require_range("query.alpha", o.alpha, 0.0, 100.0);
  try {
    o.variant = parse_variant(get("query.variant"));
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  o.seed = static_cast<std::uint64_t>(integer("query.seed"));
  o.staleness_days = number("query.staleness_days");
  const std::string& cal = get("query.calibration");
  if (cal != "fixed" && cal != "selected") throw ConfigError("query.calibration must be fixed or selected");
  return o;
}

}  // namespace lpf::cli
