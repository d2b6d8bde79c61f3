// SPDX-License-Identifier: Apache-2.0
#include <badgnn/memory.hpp>

#include <cmath>
#include <string>

#include <badgnn/error.hpp>

namespace badgnn {

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// out = x W + h U + b
Matrix affine2(const Matrix &x, const Matrix &w, const Matrix &h, const Matrix &u,
               const Matrix &b) {
  Matrix out = matmul(x, w);
  out += matmul(h, u);
  out += b;
  return out;
}

} // namespace

GruParams GruParams::zeros(std::size_t d_msg, std::size_t d_mem) {
  GruParams p;
  for (Matrix *w : {&p.w_z, &p.w_r, &p.w_h})
    *w = Matrix(d_msg, d_mem);
  for (Matrix *u : {&p.u_z, &p.u_r, &p.u_h})
    *u = Matrix(d_mem, d_mem);
  for (Matrix *b : {&p.b_z, &p.b_r, &p.b_h})
    *b = Matrix(1, d_mem);
  return p;
}

GruParams GruParams::xavier(std::size_t d_msg, std::size_t d_mem, Rng &rng) {
  GruParams p = zeros(d_msg, d_mem);
  for (Matrix *w : {&p.w_z, &p.u_z, &p.w_r, &p.u_r, &p.w_h, &p.u_h})
    *w = xavier_uniform(w->rows(), w->cols(), rng);
  return p;
}

void GruParams::validate() const {
  const std::size_t dm = d_mem();
  const std::size_t dx = d_msg();
  for (const Matrix *w : {&w_z, &w_r, &w_h})
    if (w->rows() != dx || w->cols() != dm)
      throw DimensionError("GruParams: input weight shape mismatch");
  for (const Matrix *u : {&u_z, &u_r, &u_h})
    if (u->rows() != dm || u->cols() != dm)
      throw DimensionError("GruParams: recurrent weight shape mismatch");
  for (const Matrix *b : {&b_z, &b_r, &b_h})
    if (b->rows() != 1 || b->cols() != dm)
      throw DimensionError("GruParams: bias shape mismatch");
}

Matrix gru_update(const Matrix &state, const Matrix &msg, const GruParams &p, GruCache *cache) {
  p.validate();
  if (state.rows() != 1 || state.cols() != p.d_mem())
    throw DimensionError("gru_update: state must be 1x" + std::to_string(p.d_mem()));
  if (msg.rows() != 1 || msg.cols() != p.d_msg())
    throw DimensionError("gru_update: message must be 1x" + std::to_string(p.d_msg()));

  Matrix z = affine2(msg, p.w_z, state, p.u_z, p.b_z);
  Matrix r = affine2(msg, p.w_r, state, p.u_r, p.b_r);
  for (double &v : z.values())
    v = sigmoid(v);
  for (double &v : r.values())
    v = sigmoid(v);
  Matrix reset_state = hadamard(r, state);
  Matrix h = affine2(msg, p.w_h, reset_state, p.u_h, p.b_h);
  for (double &v : h.values())
    v = std::tanh(v);

  Matrix out(1, p.d_mem());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = (1.0 - z[i]) * state[i] + z[i] * h[i];
  require_finite(out, "gru_update");

  if (cache) {
    cache->state = state;
    cache->msg = msg;
    cache->z = std::move(z);
    cache->r = std::move(r);
    cache->h_tilde = std::move(h);
    cache->reset_state = std::move(reset_state);
  }
  return out;
}

void gru_backward(const GruCache &c, const Matrix &d_out, const GruParams &p, GruParams &grads,
                  Matrix *d_msg, Matrix *d_state) {
  if (c.z.empty())
    throw StateError("gru_backward: missing forward cache");
  const std::size_t n = p.d_mem();
  if (d_out.rows() != 1 || d_out.cols() != n)
    throw DimensionError("gru_backward: upstream gradient shape");

  Matrix da_z(1, n), da_h(1, n);
  for (std::size_t i = 0; i < n; ++i) {
    const double dz = d_out[i] * (c.h_tilde[i] - c.state[i]);
    const double dh = d_out[i] * c.z[i];
    da_z[i] = dz * c.z[i] * (1.0 - c.z[i]);
    da_h[i] = dh * (1.0 - c.h_tilde[i] * c.h_tilde[i]);
  }

  grads.w_h += matmul_tn(c.msg, da_h);
  grads.u_h += matmul_tn(c.reset_state, da_h);
  grads.b_h += da_h;
  const Matrix d_reset_state = matmul_nt(da_h, p.u_h);

  Matrix da_r(1, n);
  for (std::size_t i = 0; i < n; ++i) {
    const double dr = d_reset_state[i] * c.state[i];
    da_r[i] = dr * c.r[i] * (1.0 - c.r[i]);
  }

  grads.w_z += matmul_tn(c.msg, da_z);
  grads.u_z += matmul_tn(c.state, da_z);
  grads.b_z += da_z;
  grads.w_r += matmul_tn(c.msg, da_r);
  grads.u_r += matmul_tn(c.state, da_r);
  grads.b_r += da_r;

  if (d_msg) {
    Matrix dm = matmul_nt(da_h, p.w_h);
    dm += matmul_nt(da_z, p.w_z);
    dm += matmul_nt(da_r, p.w_r);
    *d_msg = std::move(dm);
  }
  if (d_state) {
    Matrix ds(1, n);
    for (std::size_t i = 0; i < n; ++i)
      ds[i] = d_out[i] * (1.0 - c.z[i]) + d_reset_state[i] * c.r[i];
    ds += matmul_nt(da_z, p.u_z);
    ds += matmul_nt(da_r, p.u_r);
    *d_state = std::move(ds);
  }
}

const RawMessage &aggregate_messages(std::span<const RawMessage> staged) {
  if (staged.empty())
    throw StateError("aggregate_messages: no staged messages");
  const RawMessage *best = &staged[0];
  for (const RawMessage &m : staged.subspan(1))
    if (m.t > best->t || (m.t == best->t && m.seq > best->seq))
      best = &m;
  return *best;
}

Matrix compute_message(const RawMessage &raw, const Matrix &time_code) {
  const Matrix feat = Matrix::row_vector(raw.feat);
  return hconcat({&raw.own_state, &raw.other_state, &time_code, &feat});
}

NodeMemory::NodeMemory(std::size_t n_nodes, std::size_t d_mem)
  : states_(n_nodes, d_mem), last_update_(n_nodes, 0.0) {}

void NodeMemory::restore(Matrix states, std::vector<double> last_update) {
  if (last_update.size() != states.rows())
    throw DimensionError("NodeMemory::restore: table sizes disagree");
  require_finite(states, "NodeMemory::restore");
  states_ = std::move(states);
  last_update_ = std::move(last_update);
  staged_.clear();
}

void NodeMemory::reset() {
  states_.fill(0.0);
  std::fill(last_update_.begin(), last_update_.end(), 0.0);
  staged_.clear();
}

RawMessage NodeMemory::make_raw_message(const Event &e, NodeId node) const {
  if (node != e.src && node != e.dst)
    throw StateError("make_raw_message: node is not an endpoint of the event");
  if (e.src >= n_nodes() || e.dst >= n_nodes())
    throw DimensionError("make_raw_message: node id out of range");
  const NodeId other = node == e.src ? e.dst : e.src;
  const double dt = e.t - last_update_[node];
  if (dt < 0.0)
    throw TemporalOrderError("event at t=" + std::to_string(e.t) + " precedes node " +
                             std::to_string(node) + " last update " +
                             std::to_string(last_update_[node]));
  RawMessage msg;
  msg.node = node;
  msg.t = e.t;
  msg.seq = e.seq;
  msg.own_state = state(node);
  msg.other_state = state(other);
  msg.dt = dt;
  msg.feat = e.feat;
  return msg;
}

void NodeMemory::stage(RawMessage msg) {
  if (msg.node >= n_nodes())
    throw DimensionError("NodeMemory::stage: node id out of range");
  staged_[msg.node].push_back(std::move(msg));
}

void NodeMemory::stage_events(std::span<const Event> events) {
  // Staging never touches the state table, so every message of the batch
  // sees the same snapshot.
  for (const Event &e : events) {
    stage(make_raw_message(e, e.src));
    stage(make_raw_message(e, e.dst));
  }
}

std::vector<AppliedUpdate> NodeMemory::flush_and_apply(const GruParams &p,
                                                       const TimeCodeFn &time_code,
                                                       bool keep_cache) {
  std::vector<AppliedUpdate> applied;
  applied.reserve(staged_.size());
  for (auto &[node, msgs] : staged_) {
    const RawMessage &latest = aggregate_messages(msgs);
    if (latest.t < last_update_[node])
      throw TemporalOrderError("flush_and_apply: message older than node state");
    AppliedUpdate up;
    up.node = node;
    up.message = latest;
    const Matrix msg = compute_message(latest, time_code(latest.dt));
    const Matrix next =
      gru_update(state(node), msg, p, keep_cache ? &up.cache : nullptr);
    std::copy(next.values().begin(), next.values().end(), states_.row(node).begin());
    last_update_[node] = latest.t;
    applied.push_back(std::move(up));
  }
  staged_.clear();
  return applied;
}

} // namespace badgnn
