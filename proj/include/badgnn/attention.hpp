// SPDX-License-Identifier: Apache-2.0
/**
 * @file   attention.hpp
 * @brief  Single-layer multi-head temporal attention over recent neighbors,
 *         with a score multiplier for adaptive attention adjustment (A3).
 *
 * Per head, for one target query row x_q and k neighbor rows X:
 *
 *   Q = x_q Mq,  K = X Mk,  V = X Mv              (Mq: n_q x d_k, ...)
 *   w = softmax( c * Q K^T / sqrt(d_k) )           (1 x k)
 *   head = w V                                      (1 x d_k)
 *   out = [head_1 | ... | head_h] W0               (W0: h*d_k x d_out)
 *
 * `head = w V` is the transpose of V^T w^T; the column layout V[w]^T
 * produces the same numbers. Missing neighbors are never materialized, so
 * padding cannot receive weight. With no neighbors a head falls back to Q.
 */
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <badgnn/events.hpp>
#include <badgnn/linalg.hpp>
#include <badgnn/random.hpp>

namespace badgnn {

struct AttentionShape {
  std::size_t n_q = 0;  ///< query input width (target state + time code)
  std::size_t n_kv = 0; ///< neighbor input width (state + edge feat + time code)
  std::size_t d_k = 1;
  std::size_t heads = 1;
  std::size_t d_out = 0;
  std::size_t d_time = 0;
};

struct AttentionParams {
  std::vector<Matrix> w_q, w_k, w_v; ///< one per head
  Matrix w_o;
  Matrix time_omega, time_bias; ///< 1 x d_time
  double dropout_rate = 0.0;

  /// Xavier-uniform projections; time frequencies 10^(-9 i / (d_time - 1)),
  /// zero phases.
  static AttentionParams init(const AttentionShape &shape, double dropout_rate, Rng &rng);
  static AttentionParams zeros(const AttentionShape &shape, double dropout_rate = 0.0);

  std::size_t heads() const noexcept { return w_q.size(); }
  std::size_t d_k() const noexcept { return w_q.empty() ? 0 : w_q[0].cols(); }
  std::size_t n_q() const noexcept { return w_q.empty() ? 0 : w_q[0].rows(); }
  std::size_t n_kv() const noexcept { return w_k.empty() ? 0 : w_k[0].rows(); }
  std::size_t d_out() const noexcept { return w_o.cols(); }
  std::size_t d_time() const noexcept { return time_omega.cols(); }
  AttentionShape shape() const;

  void validate() const;

  template <typename Self, typename Fn> static void visit(Self &self, Fn &&fn) {
    for (std::size_t h = 0; h < self.w_q.size(); ++h) {
      const std::string suffix = "[" + std::to_string(h) + "]";
      fn("att.w_q" + suffix, self.w_q[h]);
      fn("att.w_k" + suffix, self.w_k[h]);
      fn("att.w_v" + suffix, self.w_v[h]);
    }
    fn(std::string("att.w_o"), self.w_o);
    fn(std::string("time.omega"), self.time_omega);
    fn(std::string("time.bias"), self.time_bias);
  }
};

/// cos(omega * dt + bias), elementwise. Throws TemporalOrderError for dt < 0.
Matrix time_encode(double dt, const Matrix &omega, const Matrix &bias);

/// Accumulates the gradient of <d_code, time_encode(dt)> into d_omega/d_bias.
void time_encode_backward(double dt, const Matrix &omega, const Matrix &bias,
                          const Matrix &d_code, Matrix &d_omega, Matrix &d_bias);

enum class A3Form {
  Affine, ///< c = 1 + lambda * m * n
  Pure,   ///< c = m * n when lambda > 0, else 1
};

/// Logit multiplier. lambda = 0 returns exactly 1 in either form.
double a3_scale(std::size_t m, std::size_t n, double lambda, A3Form form = A3Form::Affine);

struct Neighbor {
  NodeId node = 0;
  double t = 0.0;
  std::uint64_t seq = 0;
  const Event *event = nullptr;
};

struct NeighborContext {
  NodeId node = 0;
  double t = 0.0;
  std::size_t capacity = 0;
  std::vector<Neighbor> neighbors; ///< most recent first
  bool padded() const noexcept { return neighbors.size() < capacity; }
};

/// Per-node interaction lists over one stream, for "m most recent strictly
/// before t" lookups. Holds pointers into the stream.
class NeighborIndex {
public:
  NeighborIndex() = default;
  explicit NeighborIndex(const EventStream &stream);

  NeighborContext sample(NodeId node, double t, std::size_t m) const;

private:
  std::vector<std::vector<const Event *>> by_node_;
};

struct HeadCache {
  Matrix q, k, v;
  Matrix weights; ///< 1 x k softmax output
};

struct AttentionCache {
  Matrix x_q, x_kv;
  double scale = 1.0;
  bool self_fallback = false;
  std::vector<HeadCache> heads;
  Matrix concat;
  Matrix dropout_mask; ///< empty when dropout is off
};

/// `x_kv` may have zero rows (self-fallback). `dropout_mask`, if given, is
/// multiplied into the output (see make_dropout_mask).
Matrix attention_forward(const Matrix &x_q, const Matrix &x_kv, const AttentionParams &p,
                         double scale, const Matrix *dropout_mask = nullptr,
                         AttentionCache *cache = nullptr);

/// Accumulates parameter gradients (projections and W0) into `grads`.
/// `extra_dv`, if given, holds one additional dL/dV per head (the TLR path).
void attention_backward(const AttentionCache &cache, const Matrix &d_out,
                        const AttentionParams &p, AttentionParams &grads,
                        Matrix *d_x_q = nullptr, Matrix *d_x_kv = nullptr,
                        const std::vector<Matrix> *extra_dv = nullptr);

/// Inverted dropout: entries are 0 with probability `rate`, else 1/(1-rate).
Matrix make_dropout_mask(std::size_t n, double rate, Rng &rng);

/// Embedding of one node at time t from memory and its neighbor context.
struct EmbeddingCache {
  NodeId node = 0;
  std::vector<NodeId> neighbor_nodes;
  std::vector<double> neighbor_dt;
  AttentionCache attention;
};

/// x_q = [state(node), time_encode(0)];
/// x_kv row j = [state(nbr_j), feat_j, time_encode(t - t_j)].
Matrix embed_node(const NeighborContext &ctx, const Matrix &states, const AttentionParams &p,
                  double scale, const Matrix *dropout_mask = nullptr,
                  EmbeddingCache *cache = nullptr);

using StateGradSink = std::function<void(NodeId, const Matrix &d_state)>;

/// Backward of embed_node: parameter and time-encoder gradients go into
/// `grads`; gradients wrt memory rows are reported through `sink` (target
/// first, then neighbors in context order).
void embed_backward(const EmbeddingCache &cache, const Matrix &d_emb, const AttentionParams &p,
                    AttentionParams &grads, const StateGradSink &sink,
                    const std::vector<Matrix> *extra_dv = nullptr);

} // namespace badgnn
