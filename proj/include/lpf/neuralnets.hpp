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

// The three trainable network families: a diagonal-Gaussian evidence
// encoder, a predicate-conditional categorical decoder, and the learned
// latent aggregator (quality, consistency and weight nets). Gradients are
// derived by hand for these fixed architectures.

#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lpf/mlp.hpp"
#include "lpf/numerics.hpp"

namespace lpf::nn {

inline constexpr double kSigmaMin = 1e-6;

// q(z|e) = N(mu, diag(sigma^2)) for one evidence item.
struct LatentPosterior {
  std::string evidence_id;
  Vector mu;
  Vector sigma;
  double confidence = 0.0;

  double mean_sigma() const { return sigma.mean(); }
  Vector log_sigma() const { return sigma.array().log().matrix(); }
  Vector log_variance() const { return 2.0 * log_sigma(); }
};

/// Builds a posterior with sigma clipped at kSigmaMin and
/// confidence = 1 / (1 + mean(sigma)).
LatentPosterior make_posterior(std::string evidence_id, Vector mu, Vector sigma);

double confidence_from_sigma(const Vector& sigma);

/// 1/2 sum(sigma^2 + mu^2 - 1 - log sigma^2).
double kl_to_standard_normal(const LatentPosterior& posterior);

/// z = mu + sigma * eps with eps ~ N(0, I) drawn from the stream.
Vector reparameterize(const LatentPosterior& posterior, RandomStream& stream);

struct PredicateSpec {
  std::string name;
  std::vector<std::string> domain;
};

// Interfaces consumed by the inference pipeline, so fixtures can stand in for
// trained networks.
class PosteriorEncoder {
 public:
  virtual ~PosteriorEncoder() = default;
  virtual LatentPosterior encode(const Vector& embedding, const std::string& evidence_id) const = 0;
};

class CategoricalDecoder {
 public:
  virtual ~CategoricalDecoder() = default;
  virtual bool has_predicate(const std::string& predicate) const = 0;
  /// Throws UnknownPredicate.
  virtual const std::vector<std::string>& domain(const std::string& predicate) const = 0;
  /// Probability vector over the predicate's domain, in domain order.
  virtual Vector decode(const Vector& z, const std::string& predicate) const = 0;
};

struct LatentAggregation {
  Vector z;                 // sum_i w_i mu_i
  Vector weights;           // softmax of raw weights
  Vector raw_weights;       // softplus outputs of the weight net
  Vector quality;           // q_i
  Matrix consistency;       // C_ij, ones on the diagonal
  Vector mean_consistency;  // off-diagonal row means
  Vector log_variance;      // sum_i w_i logvar_i (diagnostic only)
};

class LatentAggregator {
 public:
  virtual ~LatentAggregator() = default;
  /// Throws NoEvidence on an empty list.
  virtual LatentAggregation aggregate(std::span<const LatentPosterior> posteriors) const = 0;
};

// ---------------------------------------------------------------------------
// Encoder: input -> [256 -> 128] (ReLU, dropout) -> mu head, log-sigma head.

struct EncoderArch {
  Eigen::Index input_dim = 384;
  std::vector<Eigen::Index> hidden{256, 128};
  Eigen::Index latent_dim = 64;
};

class EncoderModel : public PosteriorEncoder {
 public:
  struct Forward {
    Mlp::Cache trunk_cache;
    Matrix hidden;     // trunk output
    Matrix mu;         // latent x batch
    Matrix log_sigma;  // raw head output
    Matrix sigma;      // exp(log_sigma) clipped at kSigmaMin
  };

  EncoderModel() = default;
  /// All-zero parameters.
  EncoderModel(const EncoderArch& arch, double dropout_rate);
  EncoderModel(const EncoderArch& arch, double dropout_rate, RandomStream& init);

  const EncoderArch& arch() const { return arch_; }

  LatentPosterior encode(const Vector& embedding, const std::string& evidence_id) const override;

  Forward forward(const Matrix& x, RandomStream* dropout_stream = nullptr) const;
  /// Accumulates parameter gradients given d loss / d mu and d loss / d sigma.
  void backward(const Forward& fwd, const Matrix& d_mu, const Matrix& d_sigma,
                EncoderModel& grad) const;

  EncoderModel zeros_like() const;
  std::vector<Matrix*> parameters();
  std::vector<const Matrix*> parameters() const;

  Mlp trunk;
  DenseLayer mu_head;
  DenseLayer log_sigma_head;
  double dropout_rate = 0.1;
  Mode mode = Mode::inference;

 private:
  EncoderArch arch_;
};

// ---------------------------------------------------------------------------
// Decoder: [z, predicate embedding] -> [128 -> 64] (ReLU, dropout) -> head_p.

struct DecoderArch {
  Eigen::Index latent_dim = 64;
  Eigen::Index predicate_embedding_dim = 32;
  std::vector<Eigen::Index> hidden{128, 64};
};

class DecoderModel : public CategoricalDecoder {
 public:
  struct Forward {
    std::size_t predicate = 0;
    Mlp::Cache trunk_cache;
    Matrix hidden;
    Matrix logits;
    Matrix probs;
  };

  DecoderModel() = default;
  DecoderModel(const DecoderArch& arch, std::vector<PredicateSpec> predicates, double dropout_rate);
  DecoderModel(const DecoderArch& arch, std::vector<PredicateSpec> predicates, double dropout_rate,
               RandomStream& init);

  const DecoderArch& arch() const { return arch_; }
  const std::vector<PredicateSpec>& predicates() const { return predicates_; }
  std::size_t predicate_index(const std::string& predicate) const;

  bool has_predicate(const std::string& predicate) const override;
  const std::vector<std::string>& domain(const std::string& predicate) const override;
  Vector decode(const Vector& z, const std::string& predicate) const override;

  /// Batch forward for a single predicate; z is latent x batch.
  Forward forward(const Matrix& z, std::size_t predicate, RandomStream* dropout_stream = nullptr) const;
  /// Back-propagates d loss / d logits. Accumulates into grad when non-null;
  /// returns d loss / d z.
  Matrix backward(const Forward& fwd, const Matrix& d_logits, DecoderModel* grad) const;

  DecoderModel zeros_like() const;
  std::vector<Matrix*> parameters();
  std::vector<const Matrix*> parameters() const;

  Matrix predicate_embeddings;  // embedding_dim x n_predicates
  Mlp trunk;
  std::vector<DenseLayer> heads;  // one per predicate, out = domain size
  double dropout_rate = 0.1;
  Mode mode = Mode::inference;

 private:
  DecoderArch arch_;
  std::vector<PredicateSpec> predicates_;
};

// ---------------------------------------------------------------------------
// Learned aggregator.

struct AggregatorArch {
  Eigen::Index latent_dim = 64;
  std::vector<Eigen::Index> quality_hidden{64, 32};
  std::vector<Eigen::Index> consistency_hidden{64, 32};
  std::vector<Eigen::Index> weight_hidden{32};
};

class AggregatorModel : public LatentAggregator {
 public:
  AggregatorModel() = default;
  AggregatorModel(const AggregatorArch& arch, double dropout_rate);
  AggregatorModel(const AggregatorArch& arch, double dropout_rate, RandomStream& init);

  const AggregatorArch& arch() const { return arch_; }

  /// Feature [mu, log sigma, mean sigma] (2d + 1).
  static Vector quality_features(const LatentPosterior& p);
  /// Feature [|mu_i - mu_j|, |logvar_i - logvar_j|] (2d); symmetric in i, j.
  static Vector consistency_features(const LatentPosterior& a, const LatentPosterior& b);

  double quality_score(const LatentPosterior& p) const;
  double consistency_score(const LatentPosterior& a, const LatentPosterior& b) const;
  LatentAggregation aggregate(std::span<const LatentPosterior> posteriors) const override;

  /// Entity loss -log p(label | z_agg) through a frozen decoder. Accumulates
  /// aggregator gradients into grad when non-null.
  double entity_loss(std::span<const LatentPosterior> posteriors, const DecoderModel& decoder,
                     std::size_t predicate, int label, AggregatorModel* grad,
                     RandomStream* dropout_stream = nullptr,
                     Vector* probs_out = nullptr) const;

  AggregatorModel zeros_like() const;
  std::vector<Matrix*> parameters();
  std::vector<const Matrix*> parameters() const;

  Mlp quality_net;      // 2d+1 -> 64 -> 32 -> 1, sigmoid
  Mlp consistency_net;  // 2d -> 64 -> 32 -> 1, sigmoid
  Mlp weight_net;       // 2 -> 32 -> 1, softplus
  double dropout_rate = 0.1;
  Mode mode = Mode::inference;

 private:
  AggregatorArch arch_;
};

// ---------------------------------------------------------------------------
// Stage-1 objective.

struct ElboBatch {
  Matrix embeddings;                // input_dim x batch
  std::vector<std::size_t> predicates;  // decoder predicate index per column
  std::vector<int> labels;
};

struct ElboResult {
  double loss = 0.0;
  double reconstruction = 0.0;  // mean cross-entropy
  double kl = 0.0;              // mean KL
  std::size_t correct = 0;      // argmax at the sampled z
  EncoderModel encoder_grad;
  DecoderModel decoder_grad;
};

/// loss = mean CE(decode(mu + sigma * eps)) + beta * mean KL, with eps supplied
/// (latent x batch). Dropout is applied only when the models are in training
/// mode and a stream is given.
ElboResult elbo_loss(const EncoderModel& encoder, const DecoderModel& decoder,
                     const ElboBatch& batch, double beta, const Matrix& eps,
                     bool with_gradients = true, RandomStream* dropout_stream = nullptr);

ElboResult elbo_loss(const EncoderModel& encoder, const DecoderModel& decoder,
                     const ElboBatch& batch, double beta, RandomStream& stream,
                     bool with_gradients = true);

// ---------------------------------------------------------------------------
// Training.

struct EvidenceExample {
  Vector embedding;
  std::string predicate;
  int label = 0;
};

struct EvidenceSplits {
  std::vector<PredicateSpec> predicates;
  std::vector<EvidenceExample> train;
  std::vector<EvidenceExample> val;
};

struct TrainOptions {
  double learning_rate = 1e-3;
  std::size_t batch_size = 64;
  double beta = 0.01;
  int patience = 5;
  int max_epochs = 100;
  double dropout = 0.1;
  EncoderArch encoder;
  DecoderArch decoder;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;

  bool operator==(const EpochStats&) const = default;
};

struct TrainReport {
  std::uint64_t seed = 0;
  std::vector<EpochStats> history;
  double best_val_accuracy = 0.0;
  double best_val_loss = 0.0;
  int best_epoch = 0;
  int epochs_run = 0;
  bool converged = false;  // stopped by patience before max_epochs
  std::size_t skipped = 0;  // entities without evidence (aggregator stage)

  bool operator==(const TrainReport&) const = default;
};

// Patience counter on a loss that should decrease.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {}
  /// Returns true when training should stop after this epoch.
  bool update(double loss);
  bool improved() const { return improved_; }
  double best() const { return best_; }

 private:
  int patience_;
  int bad_epochs_ = 0;
  bool improved_ = false;
  double best_ = std::numeric_limits<double>::infinity();
};

struct TrainedVae {
  EncoderModel encoder;
  DecoderModel decoder;
  TrainReport report;
};

TrainedVae train_encoder_decoder(const EvidenceSplits& splits, const TrainOptions& options,
                                 std::uint64_t seed);

struct SeedSummary {
  std::uint64_t best_seed = 0;
  double mean_best_val_accuracy = 0.0;
  double std_best_val_accuracy = 0.0;
};

/// argmax best-val accuracy, ties to the smallest seed; population std.
SeedSummary summarize_seeds(std::span<const TrainReport> reports);

struct SeedSearchResult {
  TrainedVae best;
  std::vector<TrainReport> reports;  // in seed-list order
  SeedSummary summary;
};

/// Seeds train concurrently on independent model instances.
SeedSearchResult seed_search(const EvidenceSplits& splits, const TrainOptions& options,
                             std::span<const std::uint64_t> seeds);

struct EntityExample {
  std::vector<Vector> embeddings;
  std::string predicate;
  int label = 0;
};

struct AggregatorTrainOptions {
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  int epochs = 30;
  double dropout = 0.1;
  AggregatorArch arch;
};

struct TrainedAggregator {
  AggregatorModel model;
  TrainReport report;
};

/// Stage 2: the encoder and decoder are read-only.
TrainedAggregator train_aggregator(const EncoderModel& encoder, const DecoderModel& decoder,
                                   std::span<const EntityExample> train,
                                   std::span<const EntityExample> val,
                                   const AggregatorTrainOptions& options, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Checkpoints: JSON container with architecture, vocabulary, tensors and seed.

struct ModelBundle {
  std::uint64_t seed = 0;
  EncoderModel encoder;
  DecoderModel decoder;
  std::optional<AggregatorModel> aggregator;
};

void save_checkpoint(const ModelBundle& bundle, const std::string& path);
ModelBundle load_checkpoint(const std::string& path);

/// Short content digest of a model's parameters, used as a version tag.
std::string parameter_digest(std::span<const Matrix* const> params);

}  // namespace lpf::nn
