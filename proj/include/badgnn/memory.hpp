// SPDX-License-Identifier: Apache-2.0
/**
 * @file   memory.hpp
 * @brief  Per-node memory states, GRU update cell and leakage-safe message
 *         staging.
 *
 * A batch's interactions are turned into raw messages and *staged*; they
 * reach the memory table only when the next batch flushes them. With a batch
 * size of one this is exactly sequential event processing; larger batches
 * lose the within-batch ordering, which is the effect under study.
 *
 *   staged raw msgs --aggregate(most recent)--> msg --GRU(state)--> state'
 */
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <vector>

#include <badgnn/events.hpp>
#include <badgnn/linalg.hpp>
#include <badgnn/random.hpp>

namespace badgnn {

/// z = sig(msg Wz + s Uz + bz), r = sig(msg Wr + s Ur + br),
/// h = tanh(msg Wh + (r*s) Uh + bh), s' = (1-z)*s + z*h.
/// Matrices are stored input-major: W is d_msg x d_mem, U is d_mem x d_mem,
/// biases are 1 x d_mem.
struct GruParams {
  Matrix w_z, u_z, b_z;
  Matrix w_r, u_r, b_r;
  Matrix w_h, u_h, b_h;

  static GruParams zeros(std::size_t d_msg, std::size_t d_mem);
  /// Xavier-uniform weights, zero biases.
  static GruParams xavier(std::size_t d_msg, std::size_t d_mem, Rng &rng);

  std::size_t d_msg() const noexcept { return w_z.rows(); }
  std::size_t d_mem() const noexcept { return w_z.cols(); }

  /// Throws DimensionError unless all nine shapes agree.
  void validate() const;

  template <typename Self, typename Fn> static void visit(Self &self, Fn &&fn) {
    fn("gru.w_z", self.w_z);
    fn("gru.u_z", self.u_z);
    fn("gru.b_z", self.b_z);
    fn("gru.w_r", self.w_r);
    fn("gru.u_r", self.u_r);
    fn("gru.b_r", self.b_r);
    fn("gru.w_h", self.w_h);
    fn("gru.u_h", self.u_h);
    fn("gru.b_h", self.b_h);
  }
};

struct GruCache {
  Matrix state, msg;
  Matrix z, r, h_tilde, reset_state;
};

Matrix gru_update(const Matrix &state, const Matrix &msg, const GruParams &p,
                  GruCache *cache = nullptr);

/// Accumulates parameter gradients into `grads`. d_msg / d_state, when
/// non-null, receive the gradients wrt the message and the previous state.
void gru_backward(const GruCache &cache, const Matrix &d_out, const GruParams &p,
                  GruParams &grads, Matrix *d_msg = nullptr, Matrix *d_state = nullptr);

/// Snapshot of one endpoint's view of an interaction, taken when the batch is
/// staged. The time code is computed at flush time from dt so that the time
/// encoder parameters in use at that point receive gradients.
struct RawMessage {
  NodeId node = 0;
  double t = 0.0;
  std::uint64_t seq = 0;
  Matrix own_state;
  Matrix other_state;
  double dt = 0.0;
  std::vector<double> feat;
};

/// Most recent message by (t, seq); earlier entries win exact ties.
const RawMessage &aggregate_messages(std::span<const RawMessage> staged);

/// concat(own_state, other_state, time_code, feat)
Matrix compute_message(const RawMessage &raw, const Matrix &time_code);

using TimeCodeFn = std::function<Matrix(double dt)>;

struct AppliedUpdate {
  NodeId node = 0;
  RawMessage message;
  GruCache cache;
};

/// Single-writer table of node states. Reads between batch boundaries only.
class NodeMemory {
public:
  NodeMemory() = default;
  NodeMemory(std::size_t n_nodes, std::size_t d_mem);

  std::size_t n_nodes() const noexcept { return states_.rows(); }
  std::size_t d_mem() const noexcept { return states_.cols(); }

  Matrix state(NodeId n) const { return Matrix::row_vector(states_.row(n)); }
  const Matrix &states() const noexcept { return states_; }
  double last_update(NodeId n) const { return last_update_.at(n); }
  std::span<const double> last_updates() const noexcept { return last_update_; }

  /// Replaces the tables, e.g. from a checkpoint. Clears staged messages.
  void restore(Matrix states, std::vector<double> last_update);

  /// Zero states, last_update = 0, nothing staged.
  void reset();

  /// Raw message of `e` as seen from `node` (its src or dst).
  RawMessage make_raw_message(const Event &e, NodeId node) const;

  void stage(RawMessage msg);
  /// Stages both endpoint messages of every event, snapshotting current states.
  void stage_events(std::span<const Event> events);

  std::size_t staged_nodes() const noexcept { return staged_.size(); }
  bool has_staged(NodeId n) const { return staged_.count(n) != 0; }

  /// Aggregates each node's staged messages, applies the GRU and clears the
  /// staging buffer. Updates are returned in ascending node order; caches are
  /// kept only when `keep_cache` is set.
  std::vector<AppliedUpdate> flush_and_apply(const GruParams &p, const TimeCodeFn &time_code,
                                             bool keep_cache = false);

private:
  Matrix states_;
  std::vector<double> last_update_;
  std::map<NodeId, std::vector<RawMessage>> staged_;
};

} // namespace badgnn
