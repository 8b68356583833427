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


// lpf: dataset generation, training, inference, evaluation, ablations and
// ledger checks from one binary.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "lpf/clock.hpp"
#include "lpf/ledger.hpp"
#include "lpf/neuralnets.hpp"
#include "lpf/pipeline.hpp"
#include "lpf/worked_example.hpp"
#include "run_config.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace lpf::cli {
namespace {

// Exit codes.
constexpr int kOk = 0;
constexpr int kFailed = 1;
constexpr int kUsage = 2;

struct Flags {
  std::string config_path;
  std::vector<std::string> assignments;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> variant;
  std::optional<std::size_t> top_k;
  std::optional<int> n_samples;
  std::optional<double> temperature;
  std::optional<double> alpha;
};

class Timer {
 public:
  Timer() : started_(now_iso8601()), t0_(std::chrono::steady_clock::now()) {}
  double elapsed_ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0_).count();
  }
  const std::string& started() const { return started_; }

 private:
  std::string started_;
  std::chrono::steady_clock::time_point t0_;
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path);
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw NotFound("cannot read " + path);
  return json::parse(in);
}

// Wall-clock facts go to a sidecar so primary outputs stay byte-stable.
void append_run_log(const std::string& dir, const std::string& command, const Timer& t, json extra = json::object()) {
  extra["command"] = command;
  extra["started"] = t.started();
  extra["finished"] = now_iso8601();
  extra["elapsed_ms"] = t.elapsed_ms();
  std::ofstream out(fs::path(dir) / "run_log.jsonl", std::ios::app);
  if (out) out << extra.dump() << '\n';
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw std::runtime_error("cannot create directory " + dir);
}

void strip_runtime(json& j) {
  if (j.is_object()) {
    j.erase("runtime_mean_ms");
    j.erase("runtime_max_ms");
    for (auto& [k, v] : j.items()) strip_runtime(v);
  } else if (j.is_array()) {
    for (auto& v : j) strip_runtime(v);
  }
}

RunConfig resolve_config(const Flags& f, const std::string& seed_key) {
  RunConfig cfg;
  if (!f.config_path.empty()) cfg.load_file(f.config_path);
  cfg.apply_environment();
  for (const auto& a : f.assignments) cfg.set_assignment(a);
  if (f.seed) {
    // train takes a seed list; a single --seed trains one seed.
    cfg.set(seed_key, std::to_string(*f.seed));
  }
  if (f.variant) cfg.set("query.variant", *f.variant);
  if (f.top_k) cfg.set("query.top_k", std::to_string(*f.top_k));
  if (f.n_samples) cfg.set("query.n_samples", std::to_string(*f.n_samples));
  if (f.temperature) cfg.set("query.temperature", std::to_string(*f.temperature));
  if (f.alpha) cfg.set("query.alpha", std::to_string(*f.alpha));
  return cfg;
}

void add_common(CLI::App* cmd, Flags& f, bool query_flags) {
  cmd->add_option("-c,--config", f.config_path, "Flat key = value config file");
  cmd->add_option("--set", f.assignments, "Override a config key (key=value)");
  cmd->add_option("--seed", f.seed, "Random seed");
  if (!query_flags) return;
  cmd->add_option("--variant", f.variant, "Aggregation variant")->check(CLI::IsMember({"spn", "learned"}));
  cmd->add_option("--top-k", f.top_k, "Evidence items retrieved per query");
  cmd->add_option("--n-samples", f.n_samples, "Monte Carlo samples per factor");
  cmd->add_option("--temperature", f.temperature, "Factor temperature");
  cmd->add_option("--alpha", f.alpha, "Credibility weight penalty");
}

// ---------------------------------------------------------------------------
// Loaded state for the commands that query models.

struct Session {
  data::Dataset dataset;
  store::EvidenceStore store;
  nn::ModelBundle bundle;
  ModelSet models;
  std::vector<spn::PriorSpec> priors;
  std::optional<CalibrationChoice> calibration;
};

std::unique_ptr<Session> open_session(const RunConfig& cfg, bool need_dataset) {
  auto s = std::make_unique<Session>();
  const std::string data_dir = cfg.get("paths.data_dir");
  if (need_dataset) {
    s->dataset = data::read_dataset(data_dir);
    s->store.ingest(s->dataset.evidence);
  } else {
    const fs::path ev = fs::path(data_dir) / "evidence.jsonl";
    if (!fs::exists(ev)) throw NotFound("no evidence file at " + ev.string());
    const store::IngestStats st = s->store.ingest_jsonl(ev.string());
    if (!st.rejected.empty())
      std::cerr << "warning: " << st.rejected.size() << " evidence rows rejected, first: line "
                << st.rejected.front().line << ": " << st.rejected.front().message << '\n';
  }
  const fs::path canonical = fs::path(data_dir) / "canonical.jsonl";
  if (fs::exists(canonical)) s->store.load_canonical_jsonl(canonical.string());

  const fs::path model_dir = cfg.get("paths.model_dir");
  s->bundle = nn::load_checkpoint((model_dir / "checkpoint.json").string());
  s->models.encoder = &s->bundle.encoder;
  s->models.decoder = &s->bundle.decoder;
  s->models.versions["encoder"] = nn::parameter_digest(s->bundle.encoder.parameters());
  s->models.versions["decoder"] = nn::parameter_digest(s->bundle.decoder.parameters());
  if (s->bundle.aggregator) {
    s->models.aggregator = &*s->bundle.aggregator;
    s->models.versions["aggregator"] = nn::parameter_digest(s->bundle.aggregator->parameters());
  }
  for (const auto& p : s->bundle.decoder.predicates()) s->priors.push_back(spn::uniform_prior(p.name, p.domain));
  const fs::path cal = model_dir / "calibration.json";
  if (fs::exists(cal)) s->calibration = calibration_from_json(read_json(cal.string()));
  return s;
}

QueryOptions effective_options(const RunConfig& cfg, const Session& s) {
  QueryOptions o = cfg.query_options();
  if (cfg.get("query.calibration") == "selected") {
    if (!s.calibration) throw NotFound("query.calibration = selected but the model directory has no calibration.json");
    if (cfg.origins().at("query.alpha") != "flag") o.alpha = s.calibration->alpha;
    if (cfg.origins().at("query.temperature") != "flag") o.temperature = s.calibration->temperature;
  }
  if (o.variant == Variant::learned && !s.models.aggregator)
    throw DomainError("the learned variant needs a checkpoint with an aggregator");
  return o;
}

std::string reference_time(const RunConfig& cfg) {
  const std::string& t = cfg.get("query.now");
  if (t.empty()) return now_iso8601();
  parse_iso8601(t);
  return t;
}

const std::vector<std::string>& split_ids(const data::Dataset& d, const std::string& split) {
  if (split == "train") return d.train;
  if (split == "val") return d.val;
  if (split == "test") return d.test;
  throw DomainError("unknown split " + split);
}

json distribution_json(const std::vector<std::string>& domain, const Vector& p) {
  json j = json::object();
  for (std::size_t i = 0; i < domain.size(); ++i) j[domain[i]] = p(static_cast<Eigen::Index>(i));
  return j;
}

// ---------------------------------------------------------------------------
// Commands.

int cmd_gen_data(const RunConfig& cfg) {
  Timer t;
  const data::DatasetOptions opt = cfg.dataset_options();
  const data::Dataset d = data::generate_compliance_dataset(opt);
  const std::string dir = cfg.get("paths.data_dir");
  data::write_dataset(d, dir);
  double cred = 0.0;
  for (const auto& e : d.evidence) cred += e.credibility;
  cred /= static_cast<double>(d.evidence.size());
  std::cout << "entities: " << d.entities.size() << ", evidence: " << d.evidence.size() << '\n';
  std::cout << "splits: train " << d.train.size() << ", val " << d.val.size() << ", test " << d.test.size() << '\n';
  std::cout << "mean credibility: " << cred << '\n';
  std::cout << "written to " << dir << '\n';
  append_run_log(dir, "gen-data", t);
  return kOk;
}

int cmd_train(const RunConfig& cfg) {
  Timer t;
  const std::string data_dir = cfg.get("paths.data_dir");
  const data::Dataset d = data::read_dataset(data_dir);
  store::EvidenceStore st;
  st.ingest(d.evidence);
  const nn::TrainOptions topt = cfg.train_options();
  const std::vector<std::uint64_t> seeds = cfg.seeds("train.seeds");
  const QueryOptions qopt = cfg.query_options();
  const auto alphas = cfg.numbers("calibration.alphas");
  const auto temps = cfg.numbers("calibration.temperatures");
  const std::string model_dir = cfg.get("paths.model_dir");
  ensure_dir(model_dir);

  const nn::EvidenceSplits splits = evidence_splits(d, st);
  std::cout << "training " << seeds.size() << " seed(s) on " << splits.train.size() << " evidence items\n";
  nn::SeedSearchResult search = nn::seed_search(splits, topt, seeds);
  for (const auto& r : search.reports)
    std::cout << "  seed " << r.seed << ": best val accuracy " << r.best_val_accuracy << " at epoch " << r.best_epoch
              << " of " << r.epochs_run << '\n';

  const auto train_entities = entity_examples(d, st, d.train);
  const auto val_entities = entity_examples(d, st, d.val);
  nn::TrainedAggregator agg = nn::train_aggregator(search.best.encoder, search.best.decoder, train_entities,
                                                   val_entities, cfg.aggregator_options(),
                                                   search.summary.best_seed);

  nn::ModelBundle bundle;
  bundle.seed = search.summary.best_seed;
  bundle.encoder = std::move(search.best.encoder);
  bundle.decoder = std::move(search.best.decoder);
  bundle.aggregator = std::move(agg.model);
  nn::save_checkpoint(bundle, (fs::path(model_dir) / "checkpoint.json").string());

  ModelSet models{&bundle.encoder, &bundle.decoder, &*bundle.aggregator, {}};
  Orchestrator orch(st, models, {spn::uniform_prior(data::kPredicate, data::kDomain)});
  QueryOptions base = qopt;
  base.variant = Variant::spn;
  const CalibrationChoice cal = select_calibration(orch, d, models, base, alphas, temps, reference_time(cfg));
  write_text((fs::path(model_dir) / "calibration.json").string(), to_json(cal).dump(2) + "\n");

  json per_seed = json::array();
  for (const auto& r : search.reports)
    per_seed.push_back({{"seed", r.seed},
                        {"best_val_accuracy", r.best_val_accuracy},
                        {"best_val_loss", r.best_val_loss},
                        {"best_epoch", r.best_epoch},
                        {"epochs_run", r.epochs_run},
                        {"converged", r.converged}});
  const auto& ah = agg.report.history;
  json summary = {{"seeds", seeds},
                  {"per_seed", per_seed},
                  {"best_seed", search.summary.best_seed},
                  {"mean_best_val_accuracy", search.summary.mean_best_val_accuracy},
                  {"std_best_val_accuracy", search.summary.std_best_val_accuracy},
                  {"aggregator",
                   {{"epochs", agg.report.epochs_run},
                    {"skipped_entities", agg.report.skipped},
                    {"final_val_accuracy", ah.empty() ? 0.0 : ah.back().val_accuracy},
                    {"final_val_loss", ah.empty() ? 0.0 : ah.back().val_loss}}},
                  {"calibration", to_json(cal)},
                  {"versions",
                   {{"encoder", nn::parameter_digest(bundle.encoder.parameters())},
                    {"decoder", nn::parameter_digest(bundle.decoder.parameters())},
                    {"aggregator", nn::parameter_digest(bundle.aggregator->parameters())}}}};
  write_text((fs::path(model_dir) / "train_summary.json").string(), summary.dump(2) + "\n");

  std::cout << "best seed " << search.summary.best_seed << ", val accuracy " << search.summary.mean_best_val_accuracy
            << " +- " << search.summary.std_best_val_accuracy << " across seeds\n";
  std::cout << "aggregator final val accuracy " << (ah.empty() ? 0.0 : ah.back().val_accuracy) << '\n';
  std::cout << "calibration: alpha " << cal.alpha << ", temperature " << cal.temperature << " (val ECE " << cal.val_ece
            << ")\n";
  std::cout << "checkpoint written to " << model_dir << '\n';
  append_run_log(model_dir, "train", t);
  return kOk;
}

int cmd_infer(const RunConfig& cfg, const std::string& entity, const std::string& predicate) {
  auto s = open_session(cfg, false);
  const QueryOptions opts = effective_options(cfg, *s);
  ledger::Ledger ledger(cfg.get("paths.ledger"));
  Orchestrator orch(s->store, s->models, s->priors, &ledger);
  const QueryResult r = orch.handle_query(entity, predicate, opts, reference_time(cfg));
  json out = {{"entity_id", entity},
              {"predicate", predicate},
              {"variant", to_string(opts.variant)},
              {"source", to_string(r.source)},
              {"distribution", distribution_json(r.domain, r.distribution)},
              {"top_value", r.top_value},
              {"confidence", r.confidence},
              {"evidence_chain", r.evidence_chain},
              {"record_id", r.record_id},
              {"execution_time_ms", r.execution_time_ms}};
  if (r.used_fallback) out["fallback"] = "posterior averaging";
  std::cout << out.dump(2) << '\n';
  return kOk;
}

int cmd_eval(const RunConfig& cfg, const std::string& split, bool record) {
  Timer t;
  auto s = open_session(cfg, true);
  const QueryOptions opts = effective_options(cfg, *s);
  std::optional<ledger::Ledger> ledger;
  if (record) ledger.emplace(cfg.get("paths.ledger"));
  Orchestrator orch(s->store, s->models, s->priors, ledger ? &*ledger : nullptr);
  const auto& ids = split_ids(s->dataset, split);
  const EvaluationRun run = evaluate(orch, s->dataset, ids, opts, s->models, reference_time(cfg),
                                     opts.variant == Variant::spn);
  const auto bins = static_cast<int>(cfg.integer("metrics.ece_bins"));
  MetricsReport m = run.metrics;
  if (bins != m.ece_bins) {
    m.ece = expected_calibration_error(run.predictions, bins);
    m.ece_bins = bins;
  }
  json strata = json::array();
  for (const auto& c : stratify_by_credibility(run.predictions, run.mean_credibility))
    strata.push_back({{"stratum", c.name}, {"count", c.count}, {"accuracy", c.accuracy}});
  json report = {{"split", split},
                 {"variant", to_string(opts.variant)},
                 {"options", hyperparameters_json(opts, 0)},
                 {"metrics", to_json(m)},
                 {"mean_factor_weight", run.mean_factor_weight},
                 {"mean_evidence_used", run.mean_evidence_used},
                 {"credibility_strata", strata}};
  report["options"].erase("stream_id");
  if (opts.variant == Variant::spn) report["baseline"] = to_json(run.baseline);
  strip_runtime(report);

  const std::string out_dir = cfg.get("paths.output_dir");
  ensure_dir(out_dir);
  const std::string path = (fs::path(out_dir) / ("metrics_" + split + "_" + to_string(opts.variant) + ".json")).string();
  write_text(path, report.dump(2) + "\n");
  std::cout << split << " (" << to_string(opts.variant) << ", n=" << m.n << "): accuracy " << m.accuracy
            << ", macro F1 " << m.macro_f1 << ", NLL " << m.nll << ", Brier " << m.brier << ", ECE " << m.ece << '\n';
  if (opts.variant == Variant::spn)
    std::cout << "averaging baseline: accuracy " << run.baseline.accuracy << ", ECE " << run.baseline.ece << '\n';
  for (const auto& row : m.selective)
    std::cout << "  confidence > " << row.threshold << ": coverage " << row.coverage << ", accuracy "
              << row.accuracy << '\n';
  std::cout << "report written to " << path << '\n';
  append_run_log(out_dir, "eval", t,
                 {{"split", split}, {"runtime_mean_ms", m.runtime_mean_ms}, {"runtime_max_ms", m.runtime_max_ms}});
  return kOk;
}

int cmd_ablate(const RunConfig& cfg, const std::string& axis_name, const std::vector<double>& values_flag,
               const std::string& split, const std::vector<std::uint64_t>& seeds_flag) {
  Timer t;
  const AblationAxis axis = parse_axis(axis_name);
  auto s = open_session(cfg, true);
  const QueryOptions opts = effective_options(cfg, *s);
  Orchestrator orch(s->store, s->models, s->priors);
  const std::vector<double> values = values_flag.empty() ? default_grid(axis) : values_flag;
  const std::vector<std::uint64_t> seeds = seeds_flag.empty() ? std::vector<std::uint64_t>{opts.seed} : seeds_flag;
  const auto rows = run_ablation(axis, values, opts, orch, s->dataset, split_ids(s->dataset, split), s->models, seeds,
                                 reference_time(cfg));
  json j = ablation_json(axis, rows);
  strip_runtime(j);
  const std::string table = ablation_table(axis, rows);
  const std::string out_dir = cfg.get("paths.output_dir");
  ensure_dir(out_dir);
  const fs::path base = fs::path(out_dir) / ("ablation_" + to_string(axis));
  write_text(base.string() + ".json", j.dump(2) + "\n");
  write_text(base.string() + ".txt", table);
  std::cout << table << "written to " << base.string() << ".{json,txt}\n";
  append_run_log(out_dir, "ablate", t, {{"axis", to_string(axis)}});
  return kOk;
}

int cmd_verify_ledger(const RunConfig& cfg, const std::string& path_flag, bool replay) {
  const std::string path = path_flag.empty() ? cfg.get("paths.ledger") : path_flag;
  const ledger::VerifyReport rep = ledger::verify(path);
  if (!rep.ok) {
    std::cout << "ledger verification FAILED";
    if (rep.failed_line) std::cout << " at record index " << rep.failed_line - 1 << " (line " << rep.failed_line << ")";
    if (!rep.failed_record_id.empty()) std::cout << " [" << rep.failed_record_id << "]";
    std::cout << ": " << rep.message << '\n';
    return kFailed;
  }
  std::cout << "ledger ok: " << rep.records << " records\n";
  if (!replay) return kOk;

  auto s = open_session(cfg, false);
  Orchestrator orch(s->store, s->models, s->priors);
  std::size_t mismatches = 0;
  for (const auto& rec : ledger::read_all(path)) {
    const QueryResult r = orch.reexecute(rec);
    double gap = 0.0;
    for (std::size_t i = 0; i < r.domain.size(); ++i) {
      const auto it = rec.distribution.find(r.domain[i]);
      gap = std::max(gap, it == rec.distribution.end() ? 1.0
                                                       : std::abs(it->second - r.distribution(static_cast<Eigen::Index>(i))));
    }
    if (gap > 1e-9) {
      ++mismatches;
      std::cout << "replay mismatch " << rec.record_id << ": max diff " << gap << '\n';
    }
  }
  std::cout << "replayed " << rep.records << " records, " << mismatches << " mismatches\n";
  return mismatches == 0 ? kOk : kFailed;
}

int cmd_replay_worked_example(const std::string& fixture_path, const std::string& dump_path) {
  worked::Fixture f;
  if (!fixture_path.empty()) f = worked::fixture_from_json(read_json(fixture_path));
  if (!dump_path.empty()) {
    write_text(dump_path, worked::to_json(f).dump(2) + "\n");
    std::cout << "fixture written to " << dump_path << '\n';
    return kOk;
  }
  const worked::Report r = worked::replay(f);
  std::cout << worked::format_report(r);
  return r.ok() ? kOk : kFailed;
}

}  // namespace
}  // namespace lpf::cli

int main(int argc, char** argv) {
  using namespace lpf::cli;
  CLI::App app{"Latent posterior factors: evidence aggregation with calibrated uncertainty"};
  app.require_subcommand(1);

  Flags f;
  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic compliance corpus");
  add_common(gen, f, false);

  auto* train = app.add_subcommand("train", "Seed search, aggregator training and calibration selection");
  add_common(train, f, false);

  std::string entity, predicate = lpf::data::kPredicate;
  auto* infer = app.add_subcommand("infer", "Answer one query and append it to the ledger");
  add_common(infer, f, true);
  infer->add_option("entity", entity, "Entity id")->required();
  infer->add_option("predicate", predicate, "Predicate");

  std::string split = "test";
  bool record = false;
  auto* eval = app.add_subcommand("eval", "Evaluate a split and write a metrics report");
  add_common(eval, f, true);
  eval->add_option("--split", split, "Dataset split")->check(CLI::IsMember({"train", "val", "test"}));
  eval->add_flag("--record", record, "Append every query to the ledger");

  std::string axis;
  std::vector<double> values;
  std::vector<std::uint64_t> ablate_seeds;
  auto* ablate = app.add_subcommand("ablate", "Sweep one hyperparameter");
  add_common(ablate, f, true);
  ablate->add_option("--axis", axis, "n_samples, temperature, alpha or top_k")->required();
  ablate->add_option("--values", values, "Grid values (default: the standard grid)")->delimiter(',');
  ablate->add_option("--seeds", ablate_seeds, "Query seeds")->delimiter(',');
  ablate->add_option("--split", split, "Dataset split")->check(CLI::IsMember({"train", "val", "test"}));

  std::string ledger_path;
  bool replay = false;
  auto* verify = app.add_subcommand("verify-ledger", "Check the hash chain of a provenance ledger");
  add_common(verify, f, false);
  verify->add_option("path", ledger_path, "Ledger file (default: paths.ledger)");
  verify->add_flag("--replay", replay, "Re-execute every record and compare distributions");

  std::string fixture_path, dump_path;
  auto* worked = app.add_subcommand("replay-worked-example", "Replay the tax-compliance walkthrough");
  worked->add_option("--fixture", fixture_path, "JSON fixture overriding the built-in values");
  worked->add_option("--dump-fixture", dump_path, "Write the built-in fixture and exit");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(resolve_config(f, "data.seed"));
    if (train->parsed()) return cmd_train(resolve_config(f, "train.seeds"));
    if (infer->parsed()) return cmd_infer(resolve_config(f, "query.seed"), entity, predicate);
    if (eval->parsed()) return cmd_eval(resolve_config(f, "query.seed"), split, record);
    if (ablate->parsed()) return cmd_ablate(resolve_config(f, "query.seed"), axis, values, split, ablate_seeds);
    if (verify->parsed()) return cmd_verify_ledger(resolve_config(f, "query.seed"), ledger_path, replay);
    if (worked->parsed()) return cmd_replay_worked_example(fixture_path, dump_path);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailed;
  }
  return kUsage;
}
