// SPDX-License-Identifier: Apache-2.0
/**
 * @file   training.hpp
 * @brief  Link-prediction objective, temporal Lipschitz regularization (TLR),
 *         Adam, AP/AUC, and the batch/epoch loop tying memory and attention
 *         together.
 */
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <badgnn/attention.hpp>
#include <badgnn/events.hpp>
#include <badgnn/linalg.hpp>
#include <badgnn/memory.hpp>

namespace badgnn {

inline constexpr double kBceEpsilon = 1e-7;

/// -sum(y ln p + (1-y) ln(1-p)) with p clamped to [eps, 1-eps].
double bce_loss(std::span<const double> p, std::span<const double> y);

/// ||Mq V^T||_F * ||V||_F
double tlr_penalty(const Matrix &m_q, const Matrix &v);

/// Adds scale * dR/dMq and scale * dR/dV. Where R is not differentiable
/// (Mq V^T = 0 or V = 0) the zero subgradient is used.
void tlr_penalty_backward(const Matrix &m_q, const Matrix &v, double scale, Matrix &d_m_q,
                          Matrix &d_v);

inline double total_loss(double bce, double r, double lambda_tlr) {
  return bce + lambda_tlr * r;
}

/// Two-layer scorer on [z_src | z_dst]: sigmoid(relu(x W1 + b1) w2 + b2).
struct DecoderParams {
  Matrix w1, b1, w2, b2;

  static DecoderParams zeros(std::size_t d_emb);
  static DecoderParams init(std::size_t d_emb, Rng &rng);
  std::size_t d_emb() const noexcept { return w1.cols(); }

  template <typename Self, typename Fn> static void visit(Self &self, Fn &&fn) {
    fn(std::string("dec.w1"), self.w1);
    fn(std::string("dec.b1"), self.b1);
    fn(std::string("dec.w2"), self.w2);
    fn(std::string("dec.b2"), self.b2);
  }
};

struct DecoderCache {
  Matrix input, hidden;
  double logit = 0.0;
  double prob = 0.0;
};

double predict_edge(const Matrix &z_src, const Matrix &z_dst, const DecoderParams &p,
                    DecoderCache *cache = nullptr);

/// d_logit is dL/d(pre-sigmoid score). Gradients wrt the two embeddings are
/// accumulated into d_src / d_dst.
void decoder_backward(const DecoderCache &cache, double d_logit, const DecoderParams &p,
                      DecoderParams &grads, Matrix &d_src, Matrix &d_dst);

struct ModelParams {
  GruParams gru;
  AttentionParams att;
  DecoderParams dec;

  template <typename Self, typename Fn> static void visit(Self &self, Fn &&fn) {
    GruParams::visit(self.gru, fn);
    AttentionParams::visit(self.att, fn);
    DecoderParams::visit(self.dec, fn);
  }

  /// Same shapes, all zero (gradient / moment buffers).
  ModelParams zeros_like() const;
  std::size_t parameter_count() const;
};

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One Adam update on a single matrix; `step` is the 1-based step count.
void adam_step(Matrix &param, const Matrix &grad, Matrix &m, Matrix &v, std::int64_t step,
               double lr, const AdamOptions &opts = {});

struct AdamState {
  ModelParams m, v;
  std::int64_t step = 0;
};

/// Increments state.step and updates every matrix of `params`.
void adam_step(ModelParams &params, const ModelParams &grads, AdamState &state, double lr,
               const AdamOptions &opts = {});

/// Mean over positives of the precision at that positive's score threshold
/// (tied scores share a threshold). Throws MetricError without both classes.
double average_precision(std::span<const double> scores, std::span<const int> labels);
/// Mann-Whitney statistic with half credit for ties.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

struct TrainConfig {
  std::size_t batch_size = 200;
  double lambda_tlr = 0.0;
  double lambda_a3 = 0.0;
  A3Form a3_form = A3Form::Affine;
  double lr = 0.0005;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
  std::size_t d_mem = 172;
  std::size_t d_time = 100;
  std::size_t heads = 2;
  std::size_t d_k = 100;
  std::size_t neighbors = 1;
  double dropout = 0.1;
  bool zero_init = false;

  void validate() const;
};

/// Sizes derived from the config and the stream's edge feature width.
struct ModelDims {
  std::size_t d_mem, d_time, d_e, d_msg, d_emb;
  AttentionShape attention;
};

ModelDims model_dims(const TrainConfig &cfg, std::size_t d_e);
ModelParams init_params(const TrainConfig &cfg, std::size_t d_e);

/// Attention logit multiplier for the config (m = neighbors, n = query width).
double a3_multiplier(const TrainConfig &cfg);

struct Metrics {
  double ap = 0.0;
  double auc = 0.0;
  double loss = 0.0;
  double epoch_time = 0.0;
};

struct BatchOutput {
  double loss = 0.0;     ///< bce + lambda_tlr * tlr
  double bce = 0.0;      ///< mean over positives + mean over negatives
  double tlr = 0.0;      ///< R averaged over attention instances and heads
  std::vector<double> pos_scores, neg_scores;
};

struct BatchOptions {
  bool training = false; ///< enables dropout
  std::uint64_t dropout_seed = 0;
};

/// One temporal batch: flush staged messages into memory, embed endpoints and
/// negatives, score, compute the loss, and (when `grads` is non-null)
/// accumulate exact gradients into it. Finally stages this batch's messages.
/// Parameters are not modified.
BatchOutput run_batch(const ModelParams &params, const TrainConfig &cfg, NodeMemory &memory,
                      const NeighborIndex &neighbors, std::span<const Event> events,
                      std::span<const NodeId> negatives, const BatchOptions &opts,
                      ModelParams *grads = nullptr);

/// Stream-level driver. Holds parameters, optimizer state and memory; the
/// neighbor index and negative universe cover the whole stream it was
/// constructed with, which must outlive it.
class LinkPredictor {
public:
  LinkPredictor(TrainConfig cfg, const EventStream &full_stream);

  const TrainConfig &config() const noexcept { return cfg_; }
  const ModelParams &params() const noexcept { return params_; }
  void set_params(ModelParams p);
  NodeMemory &memory() noexcept { return memory_; }
  const NodeMemory &memory() const noexcept { return memory_; }
  const NeighborIndex &neighbor_index() const noexcept { return neighbors_; }
  std::span<const NodeId> destination_universe() const noexcept { return universe_; }
  std::int64_t optimizer_steps() const noexcept { return adam_.step; }

  void reset_memory() { memory_.reset(); }

  /// Resets memory, then one optimizer step per batch over `part`. AP/AUC
  /// are over the training-time scores; loss is the mean batch loss.
  Metrics train_epoch(const EventStream &part, std::size_t epoch);

  /// Gradient-free pass that only advances memory.
  void replay(const EventStream &part);

  /// Scores `part` with fixed parameters, advancing memory with the true
  /// events. Memory must already be warmed through everything before it.
  Metrics evaluate(const EventStream &part, std::uint64_t negative_tag);

  /// Tag of the negatives drawn during training epoch `epoch`.
  static std::uint64_t train_negative_tag(std::size_t epoch);

  /// Negatives used for batch `index` of a pass tagged `tag`.
  std::vector<NodeId> negatives_for(const Batch &b, std::uint64_t tag) const;

private:
  TrainConfig cfg_;
  std::size_t d_e_;
  ModelParams params_;
  AdamState adam_;
  NodeMemory memory_;
  NeighborIndex neighbors_;
  std::vector<NodeId> universe_;
};

} // namespace badgnn
