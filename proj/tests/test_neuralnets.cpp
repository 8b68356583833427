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

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "gradcheck.hpp"
#include "lpf/neuralnets.hpp"

using namespace lpf;
using namespace lpf::nn;

TEST_CASE("zero encoder emits the standard normal") {
  EncoderModel enc(EncoderArch{}, 0.1);
  const LatentPosterior p = enc.encode(Vector::Random(384), "e");
  CHECK(p.mu.isZero(0));
  CHECK(p.sigma == Vector::Ones(64));
  CHECK(p.confidence == 0.5);
  CHECK_THROWS_AS(enc.encode(Vector::Zero(100), "e"), DomainError);
}

TEST_CASE("confidence from sigma") {
  CHECK(std::abs(confidence_from_sigma(Vector::Constant(64, 0.105)) - 0.9049773755656109) <= 1e-12);
  CHECK(confidence_from_sigma(Vector::Constant(8, 1e9)) < 1e-8);
  double last = 1.0;
  for (double s = 1e-6; s < 10.0; s *= 1.5) {
    const double c = confidence_from_sigma(Vector::Constant(4, s));
    CHECK(c < last);
    last = c;
  }
  const LatentPosterior clipped = make_posterior("e", Vector::Zero(3), Vector::Zero(3));
  CHECK(clipped.sigma.minCoeff() == kSigmaMin);
}

TEST_CASE("reparameterize") {
  RandomStream s(3, 0);
  const Vector mu = Vector::LinSpaced(64, -1.0, 1.0);
  const LatentPosterior tight = make_posterior("e", mu, Vector::Zero(64));
  for (int i = 0; i < 50; ++i) CHECK((reparameterize(tight, s) - mu).cwiseAbs().maxCoeff() <= 1e-4);

  RandomStream a(8, 1), b(8, 1);
  const LatentPosterior p = make_posterior("e", mu, Vector::Constant(64, 0.5));
  CHECK(reparameterize(p, a) == reparameterize(p, b));

  const LatentPosterior q = make_posterior("e", Vector::Constant(4, 2.0), Vector::Constant(4, 0.7));
  Vector sum = Vector::Zero(4);
  const int n = 100000;
  for (int i = 0; i < n; ++i) sum += reparameterize(q, s);
  CHECK(((sum / n).array() - 2.0).abs().maxCoeff() <= 0.02 * 0.7);
}

TEST_CASE("kl to standard normal") {
  CHECK(kl_to_standard_normal(make_posterior("e", Vector::Zero(64), Vector::Ones(64))) == 0.0);
  CHECK(kl_to_standard_normal(make_posterior("e", Vector::Ones(1), Vector::Ones(1))) == doctest::Approx(0.5));
  CHECK(std::abs(kl_to_standard_normal(make_posterior("e", Vector::Zero(1), Vector::Constant(1, std::exp(1.0)))) -
                 2.1945280494653248) <= 1e-12);

  RandomStream s(4, 0);
  for (int t = 0; t < 100; ++t) {
    const Vector mu = gaussian_draw(s, 8);
    const Vector sigma = gaussian_draw(s, 8).array().exp().matrix();
    const double kl = kl_to_standard_normal(make_posterior("e", mu, sigma));
    CHECK(kl >= 0.0);
    Vector mu_r = mu.reverse(), sigma_r = sigma.reverse();
    CHECK(kl_to_standard_normal(make_posterior("e", mu_r, sigma_r)) == doctest::Approx(kl).epsilon(1e-13));
  }
}

TEST_CASE("decoder") {
  SUBCASE("zero head gives uniform") {
    DecoderModel dec(DecoderArch{}, {{"p", {"a", "b", "c", "d"}}}, 0.1);
    const Vector y = dec.decode(Vector::Random(64), "p");
    for (Eigen::Index i = 0; i < 4; ++i) CHECK(y(i) == doctest::Approx(0.25));
    CHECK_THROWS_AS(dec.decode(Vector::Zero(64), "nope"), UnknownPredicate);
  }
  SUBCASE("identity head on z") {
    DecoderModel dec(DecoderArch{3, 1, {3}}, {{"p", {"a", "b", "c"}}}, 0.0);
    dec.trunk.layers[0].weight.leftCols(3) = Matrix::Identity(3, 3);
    dec.heads[0].weight = Matrix::Identity(3, 3);
    Vector z(3);
    z << 1, 2, 3;
    const Vector y = dec.decode(z, "p");
    CHECK(std::abs(y(0) - 0.09003057317038046) <= 1e-12);
    CHECK(std::abs(y(1) - 0.24472847105479767) <= 1e-12);
    CHECK(std::abs(y(2) - 0.6652409557748219) <= 1e-12);
  }
  SUBCASE("random weights always normalize") {
    RandomStream init(5, 0);
    DecoderModel dec(DecoderArch{}, {{"p", {"a", "b", "c"}}, {"q", {"x", "y"}}}, 0.1, init);
    CHECK(dec.heads.size() == 2);
    CHECK(dec.heads[1].out_dim() == 2);
    RandomStream s(6, 0);
    for (int t = 0; t < 1000; ++t) {
      const Vector y = dec.decode(gaussian_draw(s, 64) * 3.0, t % 2 ? "p" : "q");
      CHECK(std::abs(y.sum() - 1.0) <= 1e-12);
      CHECK((y.array() > 0).all());
    }
  }
}

TEST_CASE("elbo loss") {
  SUBCASE("zero decoder at beta 0 gives ln K") {
    RandomStream init(1, 0);
    EncoderModel enc(EncoderArch{6, {5}, 3}, 0.0, init);
    DecoderModel dec(DecoderArch{3, 2, {4}}, {{"p", {"a", "b", "c"}}}, 0.0);
    ElboBatch b{gaussian_draw(init, 6, 4), {0, 0, 0, 0}, {0, 1, 2, 1}};
    const ElboResult r = elbo_loss(enc, dec, b, 0.0, gaussian_draw(init, 3, 4));
    CHECK(r.loss == doctest::Approx(std::log(3.0)).epsilon(1e-14));
  }
  SUBCASE("beta 0 is cross-entropy") {
    testing::SmallVae v = testing::make_small_vae(9);
    const ElboResult r = elbo_loss(v.encoder, v.decoder, v.batch, 0.0, v.eps, false);
    const EncoderModel::Forward f = v.encoder.forward(v.batch.embeddings);
    double ce = 0.0;
    for (Eigen::Index c = 0; c < v.eps.cols(); ++c) {
      const Vector z = f.mu.col(c) + f.sigma.col(c).cwiseProduct(v.eps.col(c));
      const auto& pred = v.decoder.predicates()[v.batch.predicates[static_cast<std::size_t>(c)]];
      ce -= std::log(v.decoder.decode(z, pred.name)(v.batch.labels[static_cast<std::size_t>(c)]));
    }
    CHECK(std::abs(r.loss - ce / static_cast<double>(v.eps.cols())) <= 1e-12);
  }
  SUBCASE("label outside domain") {
    testing::SmallVae v = testing::make_small_vae(2);
    v.batch.labels[0] = 7;
    CHECK_THROWS_AS(elbo_loss(v.encoder, v.decoder, v.batch, 0.1, v.eps), DomainError);
  }
}

TEST_CASE("elbo gradients match central differences") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const testing::GradCheck g = testing::check_elbo(seed);
    INFO("seed " << seed << " checked " << g.checked);
    CHECK(g.max_relative_error <= 1e-3);
  }
}

TEST_CASE("aggregator gradients match central differences") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const testing::GradCheck g = testing::check_aggregator(seed);
    INFO("seed " << seed << " checked " << g.checked);
    CHECK(g.max_relative_error <= 1e-3);
  }
}

TEST_CASE("quality and consistency scores") {
  AggregatorModel zero(AggregatorArch{}, 0.1);
  RandomStream s(12, 0);
  const LatentPosterior p = make_posterior("a", gaussian_draw(s, 64), Vector::Constant(64, 0.3));
  const LatentPosterior q = make_posterior("b", gaussian_draw(s, 64), Vector::Constant(64, 0.6));
  CHECK(zero.quality_score(p) == 0.5);
  CHECK(zero.consistency_score(p, p) == 0.5);

  AggregatorModel fq = zero;
  fq.quality_net.layers.back().bias(0, 0) = std::log(3.0);
  CHECK(std::abs(fq.quality_score(p) - 0.75) <= 1e-12);
  AggregatorModel fc = zero;
  fc.consistency_net.layers.back().bias(0, 0) = std::log(9.0);
  CHECK(std::abs(fc.consistency_score(p, q) - 0.9) <= 1e-12);

  // identical posteriors feed an all-zero feature regardless of weights
  CHECK(AggregatorModel::consistency_features(p, p).isZero(0));

  RandomStream init(13, 0);
  AggregatorModel m(AggregatorArch{}, 0.1, init);
  for (int t = 0; t < 1000; ++t) {
    const LatentPosterior a = make_posterior("a", gaussian_draw(s, 64) * 2.0,
                                             (gaussian_draw(s, 64) * 0.5).array().exp().matrix());
    const LatentPosterior b = make_posterior("b", gaussian_draw(s, 64) * 2.0,
                                             (gaussian_draw(s, 64) * 0.5).array().exp().matrix());
    const double qa = m.quality_score(a);
    CHECK((qa > 0.0 && qa < 1.0));
    CHECK(m.consistency_score(a, b) == m.consistency_score(b, a));
  }
}

TEST_CASE("latent aggregation") {
  RandomStream init(21, 0);
  AggregatorModel m(AggregatorArch{}, 0.1, init);
  RandomStream s(22, 0);
  CHECK_THROWS_AS(m.aggregate({}), NoEvidence);

  const LatentPosterior one = make_posterior("a", gaussian_draw(s, 64), Vector::Constant(64, 0.2));
  const LatentAggregation single = m.aggregate(std::vector<LatentPosterior>{one});
  CHECK(single.weights(0) == 1.0);
  CHECK((single.z - one.mu).cwiseAbs().maxCoeff() <= 1e-15);

  const std::vector<LatentPosterior> same(4, one);
  const LatentAggregation sym = m.aggregate(same);
  for (Eigen::Index i = 0; i < 4; ++i) CHECK(sym.weights(i) == doctest::Approx(0.25).epsilon(1e-14));
  CHECK((sym.z - one.mu).cwiseAbs().maxCoeff() <= 1e-12);

  for (int t = 0; t < 200; ++t) {
    std::vector<LatentPosterior> posts;
    const std::size_t n = 1 + s.uniform_index(7);
    for (std::size_t i = 0; i < n; ++i)
      posts.push_back(make_posterior("e", gaussian_draw(s, 64) * 2.0,
                                     (gaussian_draw(s, 64) * 0.5).array().exp().matrix()));
    const LatentAggregation a = m.aggregate(posts);
    CHECK(std::abs(a.weights.sum() - 1.0) <= 1e-12);
    CHECK((a.weights.array() >= 0).all());
    CHECK((a.raw_weights.array() > 0).all());
    CHECK((a.consistency - a.consistency.transpose()).cwiseAbs().maxCoeff() == 0.0);
    for (Eigen::Index d = 0; d < 64; ++d) {
      double lo = posts[0].mu(d), hi = lo;
      for (const auto& p : posts) {
        lo = std::min(lo, p.mu(d));
        hi = std::max(hi, p.mu(d));
      }
      CHECK((a.z(d) >= lo - 1e-12 && a.z(d) <= hi + 1e-12));
    }
  }
}

TEST_CASE("published aggregation weights reproduce the first coordinate") {
  const double w[] = {0.217, 0.209, 0.203, 0.185, 0.223};
  const double mu[] = {0.82, 0.78, 0.75, 0.71, 0.85};
  double z = 0.0;
  for (int i = 0; i < 5; ++i) z += w[i] * mu[i];
  CHECK(std::abs(z - 0.814) <= 5e-4);
}

TEST_CASE("early stopping patience") {
  EarlyStopping es(5);
  int stopped_at = 0;
  for (int epoch = 1; epoch <= 20 && !stopped_at; ++epoch)
    if (es.update(static_cast<double>(epoch))) stopped_at = epoch;
  CHECK(stopped_at == 6);
}

TEST_CASE("seed summary") {
  auto report = [](std::uint64_t seed, double acc) {
    TrainReport r;
    r.seed = seed;
    r.best_val_accuracy = acc;
    return r;
  };
  const std::vector<TrainReport> rs{report(1, 0.80), report(2, 0.86), report(3, 0.86)};
  CHECK(summarize_seeds(rs).best_seed == 2);
  const std::vector<TrainReport> unsorted{report(9, 0.86), report(4, 0.86), report(1, 0.80)};
  CHECK(summarize_seeds(unsorted).best_seed == 4);
  const std::vector<TrainReport> flat{report(1, 0.7), report(2, 0.7), report(3, 0.7)};
  CHECK(summarize_seeds(flat).std_best_val_accuracy == 0.0);
  const std::vector<TrainReport> single{report(5, 0.6)};
  CHECK(summarize_seeds(single).best_seed == 5);
  CHECK(summarize_seeds(single).std_best_val_accuracy == 0.0);
}

namespace {

// Two linearly separable clusters in 8 dims.
EvidenceSplits toy_splits() {
  EvidenceSplits sp;
  sp.predicates = {{"p", {"neg", "pos"}}};
  RandomStream s(77, 0);
  for (int i = 0; i < 20; ++i) {
    const int label = i % 2;
    Vector x = gaussian_draw(s, 8) * 0.3;
    x(0) += label ? 2.0 : -2.0;
    sp.train.push_back({x, "p", label});
    sp.val.push_back({x, "p", label});
  }
  return sp;
}

TrainOptions toy_options() {
  TrainOptions o;
  o.encoder = EncoderArch{8, {16}, 4};
  o.decoder = DecoderArch{4, 2, {8}};
  o.batch_size = 8;
  o.learning_rate = 1e-2;
  o.max_epochs = 100;
  return o;
}

}  // namespace

TEST_CASE("training on a separable toy set") {
  const EvidenceSplits sp = toy_splits();
  const TrainedVae a = train_encoder_decoder(sp, toy_options(), 3);
  double best_train = 0.0;
  for (const auto& e : a.report.history) best_train = std::max(best_train, e.train_accuracy);
  CHECK(best_train == 1.0);
  double best_val = 0.0;
  for (const auto& e : a.report.history) best_val = std::max(best_val, e.val_accuracy);
  CHECK(a.report.best_val_accuracy == best_val);
  CHECK(a.report.epochs_run == static_cast<int>(a.report.history.size()));

  const TrainedVae b = train_encoder_decoder(sp, toy_options(), 3);
  CHECK(a.report == b.report);

  EvidenceSplits empty = sp;
  empty.val.clear();
  CHECK_THROWS_AS(train_encoder_decoder(empty, toy_options(), 3), DomainError);
}

TEST_CASE("seed search returns the best seed") {
  const EvidenceSplits sp = toy_splits();
  TrainOptions o = toy_options();
  o.max_epochs = 5;
  const std::vector<std::uint64_t> seeds{4, 2, 7};
  const SeedSearchResult r = seed_search(sp, o, seeds);
  REQUIRE(r.reports.size() == 3);
  double best = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(r.reports[i].seed == seeds[i]);
    best = std::max(best, r.reports[i].best_val_accuracy);
  }
  CHECK(r.best.report.best_val_accuracy == best);
  CHECK(r.best.report.seed == r.summary.best_seed);

  const std::vector<std::uint64_t> one{4};
  const SeedSearchResult single = seed_search(sp, o, one);
  CHECK(single.summary.best_seed == 4);
  CHECK(single.summary.std_best_val_accuracy == 0.0);
  CHECK(single.best.report == train_encoder_decoder(sp, o, 4).report);
}

TEST_CASE("aggregator training freezes the first stage") {
  const EvidenceSplits sp = toy_splits();
  TrainOptions o = toy_options();
  o.max_epochs = 10;
  const TrainedVae vae = train_encoder_decoder(sp, o, 1);
  const std::string enc_before = parameter_digest(vae.encoder.parameters());
  const std::string dec_before = parameter_digest(vae.decoder.parameters());

  std::vector<EntityExample> entities;
  RandomStream s(5, 0);
  EntityExample e;
  e.predicate = "p";
  e.label = 1;
  for (int i = 0; i < 3; ++i) e.embeddings.push_back(sp.train[static_cast<std::size_t>(2 * i)].embedding);
  entities.push_back(e);
  EntityExample empty;
  empty.predicate = "p";
  entities.push_back(empty);

  AggregatorTrainOptions ao;
  ao.arch.latent_dim = 4;
  ao.arch.quality_hidden = {8};
  ao.arch.consistency_hidden = {8};
  ao.arch.weight_hidden = {4};
  ao.epochs = 5;
  ao.batch_size = 1;
  ao.dropout = 0.0;
  const TrainedAggregator agg = train_aggregator(vae.encoder, vae.decoder, entities, std::vector<EntityExample>{e}, ao, 1);
  CHECK(parameter_digest(vae.encoder.parameters()) == enc_before);
  CHECK(parameter_digest(vae.decoder.parameters()) == dec_before);
  CHECK(agg.report.skipped == 1);
  REQUIRE(agg.report.history.size() == 5);
  for (std::size_t i = 1; i < 5; ++i) CHECK(agg.report.history[i].train_loss < agg.report.history[i - 1].train_loss);
}

TEST_CASE("checkpoint round trip") {
  RandomStream init(31, 0);
  ModelBundle b;
  b.seed = 31;
  b.encoder = EncoderModel(EncoderArch{6, {5, 4}, 3}, 0.2, init);
  b.decoder = DecoderModel(DecoderArch{3, 2, {4}}, {{"p", {"a", "b"}}, {"q", {"x", "y", "z"}}}, 0.1, init);
  AggregatorArch aa;
  aa.latent_dim = 3;
  aa.quality_hidden = {4};
  aa.consistency_hidden = {4};
  aa.weight_hidden = {2};
  b.aggregator = AggregatorModel(aa, 0.1, init);

  const auto dir = std::filesystem::temp_directory_path() / "lpf_test_checkpoint";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "ckpt.json").string();
  save_checkpoint(b, path);
  const ModelBundle r = load_checkpoint(path);
  CHECK(r.seed == 31);
  CHECK(parameter_digest(r.encoder.parameters()) == parameter_digest(b.encoder.parameters()));
  CHECK(parameter_digest(r.decoder.parameters()) == parameter_digest(b.decoder.parameters()));
  REQUIRE(r.aggregator.has_value());
  CHECK(parameter_digest(r.aggregator->parameters()) == parameter_digest(b.aggregator->parameters()));
  CHECK(r.decoder.domain("q") == std::vector<std::string>{"x", "y", "z"});
  CHECK(r.encoder.dropout_rate == 0.2);

  // inconsistent tensor shape
  nlohmann::json j = nlohmann::json::parse(std::ifstream(path));
  j["encoder"]["tensors"][0]["rows"] = 99;
  std::ofstream(path) << j.dump();
  CHECK_THROWS_AS(load_checkpoint(path), DomainError);
  CHECK_THROWS_AS(load_checkpoint((dir / "missing.json").string()), NotFound);
  std::filesystem::remove_all(dir);
}
