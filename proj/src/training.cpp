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

#include <algorithm>
#include <future>
#include <map>
#include <numeric>

#include "lpf/neuralnets.hpp"

namespace lpf::nn {

ElboResult elbo_loss(const EncoderModel& encoder, const DecoderModel& decoder,
                     const ElboBatch& batch, double beta, const Matrix& eps,
                     bool with_gradients, RandomStream* dropout_stream) {
  const Eigen::Index b = batch.embeddings.cols();
  if (b == 0) throw DomainError("elbo_loss: empty batch");
  if (beta < 0.0) throw DomainError("elbo_loss: beta must be nonnegative");
  if (static_cast<Eigen::Index>(batch.labels.size()) != b ||
      static_cast<Eigen::Index>(batch.predicates.size()) != b)
    throw DomainError("elbo_loss: labels/predicates do not match batch size");
  if (eps.rows() != encoder.arch().latent_dim || eps.cols() != b)
    throw DomainError("elbo_loss: eps shape mismatch");

  ElboResult r;
  const EncoderModel::Forward enc = encoder.forward(batch.embeddings, dropout_stream);
  const Matrix z = enc.mu + enc.sigma.cwiseProduct(eps);
  const double inv_b = 1.0 / static_cast<double>(b);

  if (with_gradients) {
    r.encoder_grad = encoder.zeros_like();
    r.decoder_grad = decoder.zeros_like();
  }
  Matrix d_z = Matrix::Zero(z.rows(), b);

  std::map<std::size_t, std::vector<Eigen::Index>> groups;
  for (Eigen::Index c = 0; c < b; ++c) groups[batch.predicates[c]].push_back(c);
  for (const auto& [pred, cols] : groups) {
    if (pred >= decoder.predicates().size()) throw DomainError("elbo_loss: bad predicate index");
    const auto k = static_cast<Eigen::Index>(decoder.predicates()[pred].domain.size());
    Matrix zp(z.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t i = 0; i < cols.size(); ++i) zp.col(static_cast<Eigen::Index>(i)) = z.col(cols[i]);
    const DecoderModel::Forward dec = decoder.forward(zp, pred, dropout_stream);
    Matrix d_logits = dec.probs * inv_b;
    for (std::size_t i = 0; i < cols.size(); ++i) {
      const int y = batch.labels[cols[i]];
      if (y < 0 || y >= k) throw DomainError("elbo_loss: label outside predicate domain");
      const auto ci = static_cast<Eigen::Index>(i);
      r.reconstruction -= std::log(std::max(dec.probs(y, ci), 1e-300));
      if (argmax(dec.probs.col(ci)) == y) ++r.correct;
      d_logits(y, ci) -= inv_b;
    }
    if (with_gradients) {
      const Matrix dzp = decoder.backward(dec, d_logits, &r.decoder_grad);
      for (std::size_t i = 0; i < cols.size(); ++i) d_z.col(cols[i]) = dzp.col(static_cast<Eigen::Index>(i));
    }
  }
  r.reconstruction *= inv_b;

  const auto s2 = enc.sigma.array().square();
  r.kl = 0.5 * (s2 + enc.mu.array().square() - 1.0 - s2.log()).sum() * inv_b;
  r.loss = r.reconstruction + beta * r.kl;

  if (with_gradients) {
    const Matrix d_mu = d_z + (beta * inv_b) * enc.mu;
    const Matrix d_sigma =
        d_z.cwiseProduct(eps) +
        (beta * inv_b) * (enc.sigma.array() - enc.sigma.array().inverse()).matrix();
    encoder.backward(enc, d_mu, d_sigma, r.encoder_grad);
  }
  return r;
}

ElboResult elbo_loss(const EncoderModel& encoder, const DecoderModel& decoder,
                     const ElboBatch& batch, double beta, RandomStream& stream,
                     bool with_gradients) {
  const Matrix eps = gaussian_draw(stream, encoder.arch().latent_dim, batch.embeddings.cols());
  return elbo_loss(encoder, decoder, batch, beta, eps, with_gradients, &stream);
}

bool EarlyStopping::update(double loss) {
  improved_ = loss < best_;
  if (improved_) {
    best_ = loss;
    bad_epochs_ = 0;
  } else {
    ++bad_epochs_;
  }
  return bad_epochs_ >= patience_;
}

namespace {

// Stream ids for the independent random streams used by one training run.
enum StreamPurpose : std::uint64_t {
  kInitStream = 1,
  kShuffleStream = 2,
  kNoiseStream = 3,
  kDropoutStream = 4,
  kValidationStream = 5,
};

struct PackedSplit {
  Matrix embeddings;
  std::vector<std::size_t> predicates;
  std::vector<int> labels;
};

PackedSplit pack(const std::vector<EvidenceExample>& items, const DecoderModel& decoder,
                 Eigen::Index input_dim) {
  PackedSplit s;
  s.embeddings.resize(input_dim, static_cast<Eigen::Index>(items.size()));
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].embedding.size() != input_dim)
      throw DomainError("training: embedding dimension mismatch");
    s.embeddings.col(static_cast<Eigen::Index>(i)) = items[i].embedding;
    s.predicates.push_back(decoder.predicate_index(items[i].predicate));
    s.labels.push_back(items[i].label);
  }
  return s;
}

ElboBatch gather(const PackedSplit& s, std::span<const std::size_t> idx) {
  ElboBatch b;
  b.embeddings.resize(s.embeddings.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) {
    b.embeddings.col(static_cast<Eigen::Index>(i)) = s.embeddings.col(static_cast<Eigen::Index>(idx[i]));
    b.predicates.push_back(s.predicates[idx[i]]);
    b.labels.push_back(s.labels[idx[i]]);
  }
  return b;
}

struct SplitScore {
  double loss = 0.0;
  double accuracy = 0.0;
};

// Inference-mode evaluation: loss at sampled z from a fixed stream, accuracy
// at z = mu.
SplitScore score_split(const EncoderModel& enc, const DecoderModel& dec, const PackedSplit& s,
                       double beta, std::uint64_t seed) {
  std::vector<std::size_t> all(s.labels.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  RandomStream noise(seed, kValidationStream);
  SplitScore out;
  constexpr std::size_t kChunk = 512;
  for (std::size_t start = 0; start < all.size(); start += kChunk) {
    const std::size_t len = std::min(kChunk, all.size() - start);
    const ElboBatch b = gather(s, std::span<const std::size_t>(all).subspan(start, len));
    const auto n = static_cast<Eigen::Index>(len);
    const ElboResult sampled = elbo_loss(enc, dec, b, beta,
                                         gaussian_draw(noise, enc.arch().latent_dim, n), false);
    const ElboResult at_mean =
        elbo_loss(enc, dec, b, beta, Matrix::Zero(enc.arch().latent_dim, n), false);
    out.loss += sampled.loss * static_cast<double>(len);
    out.accuracy += static_cast<double>(at_mean.correct);
  }
  out.loss /= static_cast<double>(all.size());
  out.accuracy /= static_cast<double>(all.size());
  return out;
}

std::vector<Matrix*> joint_parameters(EncoderModel& e, DecoderModel& d) {
  std::vector<Matrix*> p = e.parameters();
  const std::vector<Matrix*> q = d.parameters();
  p.insert(p.end(), q.begin(), q.end());
  return p;
}

std::vector<const Matrix*> joint_gradients(const EncoderModel& e, const DecoderModel& d) {
  std::vector<const Matrix*> p = e.parameters();
  const std::vector<const Matrix*> q = d.parameters();
  p.insert(p.end(), q.begin(), q.end());
  return p;
}

}  // namespace

TrainedVae train_encoder_decoder(const EvidenceSplits& splits, const TrainOptions& options,
                                 std::uint64_t seed) {
  if (splits.train.empty() || splits.val.empty())
    throw DomainError("train_encoder_decoder: train and validation splits must be nonempty");
  if (options.batch_size == 0 || options.batch_size > splits.train.size())
    throw DomainError("train_encoder_decoder: batch size must be in [1, train size]");
  if (options.encoder.latent_dim != options.decoder.latent_dim)
    throw DomainError("train_encoder_decoder: encoder/decoder latent dims differ");

  RandomStream init(seed, kInitStream);
  RandomStream shuffle_stream(seed, kShuffleStream);
  RandomStream noise(seed, kNoiseStream);
  RandomStream dropout(seed, kDropoutStream);

  EncoderModel encoder(options.encoder, options.dropout, init);
  DecoderModel decoder(options.decoder, splits.predicates, options.dropout, init);
  const PackedSplit train = pack(splits.train, decoder, options.encoder.input_dim);
  const PackedSplit val = pack(splits.val, decoder, options.encoder.input_dim);

  AdamState adam(AdamOptions{.learning_rate = options.learning_rate});
  EarlyStopping stopper(options.patience);
  TrainedVae best{encoder, decoder, {}};
  TrainReport report;
  report.seed = seed;

  std::vector<std::size_t> order(splits.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 1; epoch <= options.max_epochs; ++epoch) {
    encoder.mode = Mode::training;
    decoder.mode = Mode::training;
    shuffle(order, shuffle_stream);
    double running = 0.0;
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t len = std::min(options.batch_size, order.size() - start);
      const ElboBatch batch = gather(train, std::span<const std::size_t>(order).subspan(start, len));
      const Matrix eps = gaussian_draw(noise, options.encoder.latent_dim, static_cast<Eigen::Index>(len));
      ElboResult r = elbo_loss(encoder, decoder, batch, options.beta, eps, true, &dropout);
      running += r.loss * static_cast<double>(len);
      const std::vector<Matrix*> params = joint_parameters(encoder, decoder);
      const std::vector<const Matrix*> grads = joint_gradients(r.encoder_grad, r.decoder_grad);
      adam_step(params, grads, adam);
    }
    encoder.mode = Mode::inference;
    decoder.mode = Mode::inference;

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = running / static_cast<double>(order.size());
    stats.train_accuracy = score_split(encoder, decoder, train, options.beta, seed).accuracy;
    const SplitScore v = score_split(encoder, decoder, val, options.beta, seed);
    stats.val_loss = v.loss;
    stats.val_accuracy = v.accuracy;
    report.history.push_back(stats);

    const bool stop = stopper.update(v.loss);
    if (stopper.improved()) {
      best.encoder = encoder;
      best.decoder = decoder;
      report.best_epoch = epoch;
      report.best_val_loss = v.loss;
    }
    report.epochs_run = epoch;
    if (stop) {
      report.converged = true;
      break;
    }
  }
  for (const auto& h : report.history)
    report.best_val_accuracy = std::max(report.best_val_accuracy, h.val_accuracy);
  best.report = std::move(report);
  return best;
}

SeedSummary summarize_seeds(std::span<const TrainReport> reports) {
  if (reports.empty()) throw DomainError("summarize_seeds: no reports");
  SeedSummary s;
  const TrainReport* best = &reports.front();
  // Deviations are taken from the first value so identical runs give exactly 0.
  const double origin = reports.front().best_val_accuracy;
  double shift_sum = 0.0;
  for (const auto& r : reports) {
    shift_sum += r.best_val_accuracy - origin;
    if (r.best_val_accuracy > best->best_val_accuracy ||
        (r.best_val_accuracy == best->best_val_accuracy && r.seed < best->seed))
      best = &r;
  }
  const double n = static_cast<double>(reports.size());
  const double shift_mean = shift_sum / n;
  s.best_seed = best->seed;
  s.mean_best_val_accuracy = origin + shift_mean;
  double var = 0.0;
  for (const auto& r : reports) {
    const double d = r.best_val_accuracy - origin - shift_mean;
    var += d * d;
  }
  s.std_best_val_accuracy = std::sqrt(var / n);
  return s;
}

SeedSearchResult seed_search(const EvidenceSplits& splits, const TrainOptions& options,
                             std::span<const std::uint64_t> seeds) {
  if (seeds.empty()) throw DomainError("seed_search: empty seed list");
  std::vector<std::future<TrainedVae>> jobs;
  for (const std::uint64_t seed : seeds)
    jobs.push_back(std::async(std::launch::async, [&splits, &options, seed] {
      return train_encoder_decoder(splits, options, seed);
    }));
  std::vector<TrainedVae> runs;
  for (auto& j : jobs) runs.push_back(j.get());

  SeedSearchResult result;
  for (const auto& r : runs) result.reports.push_back(r.report);
  result.summary = summarize_seeds(result.reports);
  for (auto& r : runs)
    if (r.report.seed == result.summary.best_seed) {
      result.best = std::move(r);
      break;
    }
  return result;
}

namespace {

struct EncodedEntity {
  std::vector<LatentPosterior> posteriors;
  std::size_t predicate = 0;
  int label = 0;
};

std::vector<EncodedEntity> encode_entities(const EncoderModel& encoder, const DecoderModel& decoder,
                                           std::span<const EntityExample> entities,
                                           std::size_t& skipped) {
  std::vector<EncodedEntity> out;
  for (const auto& e : entities) {
    if (e.embeddings.empty()) {
      ++skipped;
      continue;
    }
    EncodedEntity enc;
    enc.predicate = decoder.predicate_index(e.predicate);
    enc.label = e.label;
    for (std::size_t i = 0; i < e.embeddings.size(); ++i)
      enc.posteriors.push_back(encoder.encode(e.embeddings[i], std::to_string(i)));
    out.push_back(std::move(enc));
  }
  return out;
}

SplitScore score_entities(const AggregatorModel& m, const DecoderModel& dec,
                          const std::vector<EncodedEntity>& items) {
  SplitScore s;
  if (items.empty()) return s;
  for (const auto& e : items) {
    Vector probs;
    s.loss += m.entity_loss(e.posteriors, dec, e.predicate, e.label, nullptr, nullptr, &probs);
    if (argmax(probs) == e.label) s.accuracy += 1.0;
  }
  s.loss /= static_cast<double>(items.size());
  s.accuracy /= static_cast<double>(items.size());
  return s;
}

}  // namespace

TrainedAggregator train_aggregator(const EncoderModel& encoder, const DecoderModel& decoder,
                                   std::span<const EntityExample> train,
                                   std::span<const EntityExample> val,
                                   const AggregatorTrainOptions& options, std::uint64_t seed) {
  if (options.batch_size == 0) throw DomainError("train_aggregator: batch size must be positive");
  if (options.arch.latent_dim != encoder.arch().latent_dim)
    throw DomainError("train_aggregator: latent dimension mismatch");
  TrainReport report;
  report.seed = seed;
  const std::vector<EncodedEntity> train_set = encode_entities(encoder, decoder, train, report.skipped);
  const std::vector<EncodedEntity> val_set = encode_entities(encoder, decoder, val, report.skipped);
  if (train_set.empty()) throw DomainError("train_aggregator: no entity has evidence");

  RandomStream init(seed, kInitStream);
  RandomStream shuffle_stream(seed, kShuffleStream);
  RandomStream dropout(seed, kDropoutStream);
  AggregatorModel model(options.arch, options.dropout, init);
  AdamState adam(AdamOptions{.learning_rate = options.learning_rate});

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (int epoch = 1; epoch <= options.epochs; ++epoch) {
    model.mode = Mode::training;
    shuffle(order, shuffle_stream);
    double running = 0.0;
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t len = std::min(options.batch_size, order.size() - start);
      AggregatorModel grad = model.zeros_like();
      for (std::size_t i = start; i < start + len; ++i) {
        const EncodedEntity& e = train_set[order[i]];
        running += model.entity_loss(e.posteriors, decoder, e.predicate, e.label, &grad, &dropout);
      }
      std::vector<Matrix*> params = model.parameters();
      std::vector<Matrix*> g = grad.parameters();
      for (Matrix* m : g) *m /= static_cast<double>(len);
      const std::vector<const Matrix*> grads(g.begin(), g.end());
      adam_step(params, grads, adam);
    }
    model.mode = Mode::inference;
    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = running / static_cast<double>(order.size());
    stats.train_accuracy = score_entities(model, decoder, train_set).accuracy;
    const SplitScore v = score_entities(model, decoder, val_set);
    stats.val_loss = v.loss;
    stats.val_accuracy = v.accuracy;
    report.history.push_back(stats);
    if (epoch == 1 || v.loss < report.best_val_loss) {
      report.best_val_loss = v.loss;
      report.best_epoch = epoch;
    }
    report.best_val_accuracy = std::max(report.best_val_accuracy, v.accuracy);
    report.epochs_run = epoch;
  }
  return {std::move(model), std::move(report)};
}

}  // namespace lpf::nn
