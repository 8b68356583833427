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


// Flat dotted-key run configuration. Values resolve in order: built-in
// defaults, config file, LPF_ environment variables, command-line flags.

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lpf/neuralnets.hpp"
#include "lpf/pipeline.hpp"

namespace lpf::cli {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class RunConfig {
 public:
  RunConfig();

  /// "key = value" lines; '#' starts a comment. Unknown keys are rejected.
  void load_file(const std::string& path);
  void load_text(const std::string& text, const std::string& origin = "<text>");
  /// LPF_TRAIN_MAX_EPOCHS overrides train.max_epochs, and so on.
  void apply_environment(const std::function<std::optional<std::string>(const std::string&)>& getenv);
  void apply_environment();
  void set(const std::string& key, const std::string& value);
  /// "key=value".
  void set_assignment(const std::string& assignment);

  const std::string& get(const std::string& key) const;
  double number(const std::string& key) const;
  std::int64_t integer(const std::string& key) const;
  std::vector<double> numbers(const std::string& key) const;
  std::vector<std::uint64_t> seeds(const std::string& key) const;

  const std::map<std::string, std::string>& values() const { return values_; }
  /// Where each value came from: default, file path, env or flag.
  const std::map<std::string, std::string>& origins() const { return origins_; }
  std::string dump() const;

  static std::string env_name(const std::string& key);

  // Typed views.
  data::DatasetOptions dataset_options() const;
  nn::TrainOptions train_options() const;
  nn::AggregatorTrainOptions aggregator_options() const;
  QueryOptions query_options() const;

 private:
  void assign(const std::string& key, const std::string& value, const std::string& origin);
  std::map<std::string, std::string> values_;
  std::map<std::string, std::string> origins_;
};

}  // namespace lpf::cli
