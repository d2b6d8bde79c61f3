// SPDX-License-Identifier: Apache-2.0
#include <badgnn/attention.hpp>

#include <algorithm>
#include <cmath>
#include <string>

#include <badgnn/error.hpp>

namespace badgnn {

AttentionShape AttentionParams::shape() const {
  return AttentionShape{n_q(), n_kv(), d_k(), heads(), d_out(), d_time()};
}

AttentionParams AttentionParams::zeros(const AttentionShape &s, double dropout_rate) {
  if (s.d_k < 1 || s.heads < 1)
    throw ConfigError("AttentionParams: need d_k >= 1 and heads >= 1");
  AttentionParams p;
  for (std::size_t h = 0; h < s.heads; ++h) {
    p.w_q.emplace_back(s.n_q, s.d_k);
    p.w_k.emplace_back(s.n_kv, s.d_k);
    p.w_v.emplace_back(s.n_kv, s.d_k);
  }
  p.w_o = Matrix(s.heads * s.d_k, s.d_out);
  p.time_omega = Matrix(1, s.d_time);
  p.time_bias = Matrix(1, s.d_time);
  p.dropout_rate = dropout_rate;
  return p;
}

AttentionParams AttentionParams::init(const AttentionShape &s, double dropout_rate, Rng &rng) {
  AttentionParams p = zeros(s, dropout_rate);
  for (std::size_t h = 0; h < s.heads; ++h) {
    p.w_q[h] = xavier_uniform(s.n_q, s.d_k, rng);
    p.w_k[h] = xavier_uniform(s.n_kv, s.d_k, rng);
    p.w_v[h] = xavier_uniform(s.n_kv, s.d_k, rng);
  }
  p.w_o = xavier_uniform(s.heads * s.d_k, s.d_out, rng);
  for (std::size_t i = 0; i < s.d_time; ++i) {
    const double e = s.d_time > 1 ? 9.0 * static_cast<double>(i) / static_cast<double>(s.d_time - 1) : 0.0;
    p.time_omega[i] = std::pow(10.0, -e);
  }
  return p;
}

void AttentionParams::validate() const {
  if (w_q.empty() || w_k.size() != w_q.size() || w_v.size() != w_q.size())
    throw DimensionError("AttentionParams: per-head projection count mismatch");
  for (std::size_t h = 0; h < heads(); ++h) {
    if (w_q[h].rows() != n_q() || w_q[h].cols() != d_k())
      throw DimensionError("AttentionParams: w_q shape");
    if (w_k[h].rows() != n_kv() || w_k[h].cols() != d_k())
      throw DimensionError("AttentionParams: w_k shape");
    if (w_v[h].rows() != n_kv() || w_v[h].cols() != d_k())
      throw DimensionError("AttentionParams: w_v shape");
  }
  if (d_k() < 1)
    throw DimensionError("AttentionParams: d_k must be >= 1");
  if (w_o.rows() != heads() * d_k())
    throw DimensionError("AttentionParams: W0 input must be heads * d_k");
  if (time_bias.cols() != time_omega.cols() || time_omega.rows() != 1 || time_bias.rows() != 1)
    throw DimensionError("AttentionParams: time encoder shape");
}

Matrix time_encode(double dt, const Matrix &omega, const Matrix &bias) {
  if (dt < 0.0)
    throw TemporalOrderError("time_encode: negative time delta " + std::to_string(dt));
  if (!omega.same_shape(bias))
    throw DimensionError("time_encode: omega/bias shape mismatch");
  Matrix out(1, omega.size());
  for (std::size_t i = 0; i < omega.size(); ++i)
    out[i] = std::cos(omega[i] * dt + bias[i]);
  return out;
}

void time_encode_backward(double dt, const Matrix &omega, const Matrix &bias,
                          const Matrix &d_code, Matrix &d_omega, Matrix &d_bias) {
  for (std::size_t i = 0; i < omega.size(); ++i) {
    const double g = -std::sin(omega[i] * dt + bias[i]) * d_code[i];
    d_omega[i] += g * dt;
    d_bias[i] += g;
  }
}

double a3_scale(std::size_t m, std::size_t n, double lambda, A3Form form) {
  if (m < 1 || n < 1)
    throw ConfigError("a3_scale: m and n must be >= 1");
  if (!(lambda >= 0.0))
    throw ConfigError("a3_scale: lambda_a3 must be >= 0");
  if (lambda == 0.0)
    return 1.0;
  const double mn = static_cast<double>(m) * static_cast<double>(n);
  return form == A3Form::Pure ? mn : 1.0 + lambda * mn;
}

NeighborIndex::NeighborIndex(const EventStream &stream) : by_node_(stream.n_nodes()) {
  for (const Event &e : stream.events()) {
    by_node_[e.src].push_back(&e);
    if (e.dst != e.src)
      by_node_[e.dst].push_back(&e);
  }
}

NeighborContext NeighborIndex::sample(NodeId node, double t, std::size_t m) const {
  NeighborContext ctx;
  ctx.node = node;
  ctx.t = t;
  ctx.capacity = m;
  if (node >= by_node_.size() || m == 0)
    return ctx;
  const auto &list = by_node_[node];
  // Lists are in stream order, i.e. sorted by (t, seq).
  auto end = std::lower_bound(list.begin(), list.end(), t,
                              [](const Event *e, double tt) { return e->t < tt; });
  for (auto it = end; it != list.begin() && ctx.neighbors.size() < m;) {
    --it;
    const Event *e = *it;
    ctx.neighbors.push_back(Neighbor{e->src == node ? e->dst : e->src, e->t, e->seq, e});
  }
  return ctx;
}

Matrix make_dropout_mask(std::size_t n, double rate, Rng &rng) {
  if (!(rate >= 0.0 && rate < 1.0))
    throw ConfigError("dropout rate must be in [0, 1)");
  Matrix mask(1, n, 1.0);
  if (rate == 0.0)
    return mask;
  const double keep = 1.0 / (1.0 - rate);
  for (double &v : mask.values())
    v = rng.uniform() < rate ? 0.0 : keep;
  return mask;
}

Matrix attention_forward(const Matrix &x_q, const Matrix &x_kv, const AttentionParams &p,
                         double scale, const Matrix *dropout_mask, AttentionCache *cache) {
  p.validate();
  if (!(scale >= 1.0))
    throw ConfigError("attention_forward: score multiplier must be >= 1");
  if (x_q.rows() != 1 || x_q.cols() != p.n_q())
    throw DimensionError("attention_forward: query input must be 1x" + std::to_string(p.n_q()));
  const bool fallback = x_kv.rows() == 0;
  if (!fallback && x_kv.cols() != p.n_kv())
    throw DimensionError("attention_forward: neighbor input width " +
                         std::to_string(x_kv.cols()) + ", expected " + std::to_string(p.n_kv()));

  const std::size_t dk = p.d_k();
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
  Matrix concat(1, p.heads() * dk);
  std::vector<HeadCache> heads(p.heads());
  for (std::size_t h = 0; h < p.heads(); ++h) {
    HeadCache &hc = heads[h];
    hc.q = matmul(x_q, p.w_q[h]);
    Matrix head_out;
    if (fallback) {
      head_out = hc.q;
    } else {
      hc.k = matmul(x_kv, p.w_k[h]);
      hc.v = matmul(x_kv, p.w_v[h]);
      Matrix logits = matmul_nt(hc.q, hc.k);
      for (double &l : logits.values())
        l = scale * (l * inv_sqrt_dk);
      hc.weights = row_softmax(logits);
      head_out = matmul(hc.weights, hc.v);
    }
    std::copy(head_out.values().begin(), head_out.values().end(),
              concat.values().begin() + static_cast<std::ptrdiff_t>(h * dk));
  }
  Matrix out = matmul(concat, p.w_o);
  if (dropout_mask) {
    if (dropout_mask->size() != out.size())
      throw DimensionError("attention_forward: dropout mask size");
    out = hadamard(out, *dropout_mask);
  }
  require_finite(out, "attention_forward");

  if (cache) {
    cache->x_q = x_q;
    cache->x_kv = x_kv;
    cache->scale = scale;
    cache->self_fallback = fallback;
    cache->heads = std::move(heads);
    cache->concat = std::move(concat);
    cache->dropout_mask = dropout_mask ? *dropout_mask : Matrix();
  }
  return out;
}

void attention_backward(const AttentionCache &c, const Matrix &d_out, const AttentionParams &p,
                        AttentionParams &grads, Matrix *d_x_q, Matrix *d_x_kv,
                        const std::vector<Matrix> *extra_dv) {
  if (c.heads.empty() || c.concat.empty())
    throw StateError("attention_backward: missing forward cache");
  if (d_out.rows() != 1 || d_out.cols() != p.d_out())
    throw DimensionError("attention_backward: upstream gradient shape");

  Matrix d_pre = c.dropout_mask.empty() ? d_out : hadamard(d_out, c.dropout_mask);
  grads.w_o += matmul_tn(c.concat, d_pre);
  const Matrix d_concat = matmul_nt(d_pre, p.w_o);

  const std::size_t dk = p.d_k();
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
  Matrix dxq(1, p.n_q());
  Matrix dxkv(c.x_kv.rows(), c.x_kv.cols());
  for (std::size_t h = 0; h < p.heads(); ++h) {
    const HeadCache &hc = c.heads[h];
    const Matrix d_head = col_slice(d_concat, h * dk, dk);
    Matrix dq;
    if (c.self_fallback) {
      dq = d_head;
    } else {
      Matrix dv = matmul_tn(hc.weights, d_head);
      if (extra_dv)
        dv += (*extra_dv)[h];
      const Matrix dw = matmul_nt(d_head, hc.v);
      // Softmax Jacobian: dl = w * (dw - <dw, w>), then the c / sqrt(d_k) factor.
      const double inner = dot(dw, hc.weights);
      Matrix dl(1, hc.weights.cols());
      for (std::size_t j = 0; j < dl.cols(); ++j)
        dl[j] = hc.weights[j] * (dw[j] - inner) * (c.scale * inv_sqrt_dk);
      dq = matmul(dl, hc.k);
      const Matrix dk_mat = matmul_tn(dl, hc.q);
      grads.w_k[h] += matmul_tn(c.x_kv, dk_mat);
      grads.w_v[h] += matmul_tn(c.x_kv, dv);
      dxkv += matmul_nt(dk_mat, p.w_k[h]);
      dxkv += matmul_nt(dv, p.w_v[h]);
    }
    grads.w_q[h] += matmul_tn(c.x_q, dq);
    dxq += matmul_nt(dq, p.w_q[h]);
  }
  if (d_x_q)
    *d_x_q = std::move(dxq);
  if (d_x_kv)
    *d_x_kv = std::move(dxkv);
}

Matrix embed_node(const NeighborContext &ctx, const Matrix &states, const AttentionParams &p,
                  double scale, const Matrix *dropout_mask, EmbeddingCache *cache) {
  const std::size_t d_mem = states.cols();
  const std::size_t d_time = p.d_time();
  if (ctx.node >= states.rows())
    throw DimensionError("embed_node: node id out of range");
  if (p.n_q() != d_mem + d_time)
    throw DimensionError("embed_node: query width must be d_mem + d_time");

  const Matrix own = Matrix::row_vector(states.row(ctx.node));
  const Matrix code0 = time_encode(0.0, p.time_omega, p.time_bias);
  const Matrix x_q = hconcat({&own, &code0});

  const std::size_t k = ctx.neighbors.size();
  Matrix x_kv(k, p.n_kv());
  std::vector<NodeId> nbr_nodes;
  std::vector<double> nbr_dt;
  for (std::size_t j = 0; j < k; ++j) {
    const Neighbor &nb = ctx.neighbors[j];
    if (nb.t >= ctx.t)
      throw TemporalOrderError("embed_node: neighbor event not strictly before target time");
    const std::size_t d_e = nb.event->feat.size();
    if (p.n_kv() != d_mem + d_e + d_time)
      throw DimensionError("embed_node: neighbor width must be d_mem + d_e + d_time");
    const double dt = ctx.t - nb.t;
    const Matrix code = time_encode(dt, p.time_omega, p.time_bias);
    auto row = x_kv.row(j);
    std::copy_n(states.row(nb.node).data(), d_mem, row.data());
    std::copy_n(nb.event->feat.data(), d_e, row.data() + d_mem);
    std::copy_n(code.values().data(), d_time, row.data() + d_mem + d_e);
    nbr_nodes.push_back(nb.node);
    nbr_dt.push_back(dt);
  }

  Matrix out = attention_forward(x_q, x_kv, p, scale, dropout_mask,
                                 cache ? &cache->attention : nullptr);
  if (cache) {
    cache->node = ctx.node;
    cache->neighbor_nodes = std::move(nbr_nodes);
    cache->neighbor_dt = std::move(nbr_dt);
  }
  return out;
}

void embed_backward(const EmbeddingCache &cache, const Matrix &d_emb, const AttentionParams &p,
                    AttentionParams &grads, const StateGradSink &sink,
                    const std::vector<Matrix> *extra_dv) {
  Matrix dxq, dxkv;
  attention_backward(cache.attention, d_emb, p, grads, &dxq, &dxkv, extra_dv);
  const std::size_t d_time = p.d_time();
  const std::size_t d_mem = p.n_q() - d_time;

  sink(cache.node, col_slice(dxq, 0, d_mem));
  time_encode_backward(0.0, p.time_omega, p.time_bias, col_slice(dxq, d_mem, d_time),
                       grads.time_omega, grads.time_bias);

  const std::size_t time_offset = p.n_kv() - d_time;
  for (std::size_t j = 0; j < cache.neighbor_nodes.size(); ++j) {
    const Matrix row = row_slice(dxkv, j, 1);
    sink(cache.neighbor_nodes[j], col_slice(row, 0, d_mem));
    time_encode_backward(cache.neighbor_dt[j], p.time_omega, p.time_bias,
                         col_slice(row, time_offset, d_time), grads.time_omega,
                         grads.time_bias);
  }
}

} // namespace badgnn
