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


#include <doctest.h>

#include "run_config.hpp"
#include "scratch.hpp"

using namespace lpf;
using lpf::cli::ConfigError;
using lpf::cli::RunConfig;

TEST_CASE("defaults") {
  const RunConfig c;
  CHECK(c.get("paths.data_dir") == "data");
  CHECK(c.integer("data.n_entities") == 900);
  CHECK(c.seeds("train.seeds") == std::vector<std::uint64_t>{1, 2, 3});
  CHECK(c.numbers("calibration.alphas") == std::vector<double>{0.1, 1, 2, 5});
  const QueryOptions q = c.query_options();
  CHECK(q.top_k == 5);
  CHECK(q.n_samples == 16);
  CHECK(q.temperature == 1.0);
  CHECK(q.alpha == 2.0);
  CHECK(q.variant == Variant::spn);
  CHECK(c.dataset_options().n_entities == 900);
  CHECK(c.train_options().patience == 5);
  CHECK(c.aggregator_options().epochs == 30);
  CHECK(c.origins().at("query.alpha") == "default");
  CHECK_THROWS_AS(c.get("query.nope"), ConfigError);
}

TEST_CASE("file, environment and flag precedence") {
  RunConfig c;
  c.load_text(
      "# comment\n"
      "query.alpha = 0.5   # trailing\n"
      "query.top_k=3\n"
      "paths.ledger = \"audit log.jsonl\"\n"
      "\n",
      "run.conf");
  CHECK(c.number("query.alpha") == 0.5);
  CHECK(c.get("paths.ledger") == "audit log.jsonl");
  CHECK(c.origins().at("query.top_k") == "run.conf");

  CHECK(RunConfig::env_name("train.max_epochs") == "LPF_TRAIN_MAX_EPOCHS");
  c.apply_environment([](const std::string& name) -> std::optional<std::string> {
    if (name == "LPF_QUERY_ALPHA") return "1.5";
    if (name == "LPF_QUERY_VARIANT") return "learned";
    return std::nullopt;
  });
  CHECK(c.number("query.alpha") == 1.5);
  CHECK(c.query_options().variant == Variant::learned);
  CHECK(c.query_options().top_k == 3);

  c.set_assignment("query.alpha=5");
  CHECK(c.number("query.alpha") == 5.0);
  CHECK(c.dump().find("query.alpha") != std::string::npos);
}

TEST_CASE("errors") {
  RunConfig c;
  CHECK_THROWS_AS(c.load_text("query.unknown = 1\n"), ConfigError);
  CHECK_THROWS_AS(c.load_text("no equals sign\n"), ConfigError);
  CHECK_THROWS_AS(c.set_assignment("query.alpha"), ConfigError);
  CHECK_THROWS_AS(c.load_file("/nonexistent/lpf.conf"), ConfigError);
  c.set("query.top_k", "zero");
  CHECK_THROWS_AS(c.query_options(), ConfigError);
  c.set("query.top_k", "0");
  CHECK_THROWS(c.query_options());
  c.set("query.top_k", "5");
  c.set("query.temperature", "-1");
  CHECK_THROWS(c.query_options());
  c.set("query.temperature", "1");
  c.set("query.variant", "mlp");
  CHECK_THROWS(c.query_options());
}

TEST_CASE("config file on disk") {
  lpf::testing::ScratchDir dir("config");
  lpf::testing::spit(dir.file("lpf.conf"), "data.seed = 7\ntrain.seeds = 4, 5\n");
  RunConfig c;
  c.load_file(dir.file("lpf.conf"));
  CHECK(c.dataset_options().seed == 7);
  CHECK(c.seeds("train.seeds") == std::vector<std::uint64_t>{4, 5});
}
