// SPDX-License-Identifier: Apache-2.0
#include <badgnn/training.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>

#include <badgnn/error.hpp>
#include <badgnn/random.hpp>

namespace badgnn {

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double clamp_prob(double p) {
  return std::clamp(p, kBceEpsilon, 1.0 - kBceEpsilon);
}

// Stream tags for derived seeds.
constexpr std::uint64_t kDropoutTag = 0xd120;
constexpr std::uint64_t kTrainNegTag = 0x7a11;

} // namespace

double bce_loss(std::span<const double> p, std::span<const double> y) {
  if (p.size() != y.size())
    throw DimensionError("bce_loss: " + std::to_string(p.size()) + " predictions vs " +
                         std::to_string(y.size()) + " labels");
  double loss = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double q = clamp_prob(p[i]);
    loss -= y[i] * std::log(q) + (1.0 - y[i]) * std::log(1.0 - q);
  }
  return loss;
}

double tlr_penalty(const Matrix &m_q, const Matrix &v) {
  const Matrix mv = matmul_nt(m_q, v);
  return frobenius_norm(mv) * frobenius_norm(v);
}

void tlr_penalty_backward(const Matrix &m_q, const Matrix &v, double scale, Matrix &d_m_q,
                          Matrix &d_v) {
  const Matrix mv = matmul_nt(m_q, v);
  const double a = frobenius_norm(mv);
  const double b = frobenius_norm(v);
  if (a == 0.0 || b == 0.0)
    return;
  // R = a b;  da/dMq = (Mq V^T) V / a;  da/dV = (Mq V^T)^T Mq / a;  db/dV = V / b
  d_m_q.add_scaled(matmul(mv, v), scale * b / a);
  d_v.add_scaled(matmul_tn(mv, m_q), scale * b / a);
  d_v.add_scaled(v, scale * a / b);
}

DecoderParams DecoderParams::zeros(std::size_t d_emb) {
  DecoderParams p;
  p.w1 = Matrix(2 * d_emb, d_emb);
  p.b1 = Matrix(1, d_emb);
  p.w2 = Matrix(d_emb, 1);
  p.b2 = Matrix(1, 1);
  return p;
}

DecoderParams DecoderParams::init(std::size_t d_emb, Rng &rng) {
  DecoderParams p = zeros(d_emb);
  p.w1 = xavier_uniform(2 * d_emb, d_emb, rng);
  p.w2 = xavier_uniform(d_emb, 1, rng);
  return p;
}

double predict_edge(const Matrix &z_src, const Matrix &z_dst, const DecoderParams &p,
                    DecoderCache *cache) {
  if (!z_src.same_shape(z_dst) || z_src.rows() != 1 || z_src.cols() != p.d_emb())
    throw DimensionError("predict_edge: embeddings must both be 1x" + std::to_string(p.d_emb()));
  Matrix input = hconcat({&z_src, &z_dst});
  Matrix hidden = matmul(input, p.w1);
  hidden += p.b1;
  for (double &h : hidden.values())
    h = std::max(h, 0.0);
  const double logit = dot(hidden, p.w2) + p.b2[0];
  const double prob = sigmoid(logit);
  if (cache) {
    cache->input = std::move(input);
    cache->hidden = std::move(hidden);
    cache->logit = logit;
    cache->prob = prob;
  }
  return prob;
}

void decoder_backward(const DecoderCache &c, double d_logit, const DecoderParams &p,
                      DecoderParams &grads, Matrix &d_src, Matrix &d_dst) {
  if (c.input.empty())
    throw StateError("decoder_backward: missing forward cache");
  const std::size_t d = p.d_emb();
  grads.b2[0] += d_logit;
  Matrix d_hidden(1, d);
  for (std::size_t i = 0; i < d; ++i) {
    grads.w2[i] += c.hidden[i] * d_logit;
    d_hidden[i] = c.hidden[i] > 0.0 ? p.w2[i] * d_logit : 0.0;
  }
  grads.w1 += matmul_tn(c.input, d_hidden);
  grads.b1 += d_hidden;
  const Matrix d_input = matmul_nt(d_hidden, p.w1);
  for (std::size_t i = 0; i < d; ++i) {
    d_src[i] += d_input[i];
    d_dst[i] += d_input[d + i];
  }
}

ModelParams ModelParams::zeros_like() const {
  ModelParams z = *this;
  ModelParams::visit(z, [](const std::string &, Matrix &m) { m.fill(0.0); });
  return z;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  ModelParams::visit(*this, [&](const std::string &, const Matrix &m) { n += m.size(); });
  return n;
}

void adam_step(Matrix &param, const Matrix &grad, Matrix &m, Matrix &v, std::int64_t step,
               double lr, const AdamOptions &o) {
  if (!param.same_shape(grad) || !param.same_shape(m) || !param.same_shape(v))
    throw DimensionError("adam_step: shape mismatch");
  const double t = static_cast<double>(step);
  const double c1 = 1.0 - std::pow(o.beta1, t);
  const double c2 = 1.0 - std::pow(o.beta2, t);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * g;
    v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * g * g;
    const double m_hat = m[i] / c1;
    const double v_hat = v[i] / c2;
    param[i] -= lr * m_hat / (std::sqrt(v_hat) + o.eps);
  }
}

void adam_step(ModelParams &params, const ModelParams &grads, AdamState &state, double lr,
               const AdamOptions &opts) {
  std::vector<Matrix *> p, g, m, v;
  auto collect = [](std::vector<Matrix *> &out) {
    return [&out](const std::string &, Matrix &x) { out.push_back(&x); };
  };
  auto &grads_mut = const_cast<ModelParams &>(grads);
  ModelParams::visit(params, collect(p));
  ModelParams::visit(grads_mut, collect(g));
  ModelParams::visit(state.m, collect(m));
  ModelParams::visit(state.v, collect(v));
  if (g.size() != p.size() || m.size() != p.size() || v.size() != p.size())
    throw DimensionError("adam_step: parameter structure mismatch");
  ++state.step;
  for (std::size_t i = 0; i < p.size(); ++i)
    adam_step(*p[i], *g[i], *m[i], *v[i], state.step, lr, opts);
}

namespace {

void require_both_classes(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size())
    throw DimensionError("metric: scores/labels length mismatch");
  const auto pos = std::count_if(labels.begin(), labels.end(), [](int y) { return y != 0; });
  if (pos == 0 || static_cast<std::size_t>(pos) == labels.size())
    throw MetricError("metric undefined without both positives and negatives");
}

std::vector<std::size_t> order_by_score_desc(std::span<const double> scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return idx;
}

} // namespace

double average_precision(std::span<const double> scores, std::span<const int> labels) {
  require_both_classes(scores, labels);
  const auto idx = order_by_score_desc(scores);
  double ap = 0.0;
  std::size_t seen = 0, seen_pos = 0, total_pos = 0;
  for (int y : labels)
    total_pos += y != 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    std::size_t group_pos = 0;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      group_pos += labels[idx[j]] != 0;
      ++j;
    }
    seen += j - i;
    seen_pos += group_pos;
    ap += static_cast<double>(group_pos) * static_cast<double>(seen_pos) /
          static_cast<double>(seen);
    i = j;
  }
  return ap / static_cast<double>(total_pos);
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  require_both_classes(scores, labels);
  // Ascending sweep: each positive earns credit for every lower-scored
  // negative plus half for each tied one.
  auto idx = order_by_score_desc(scores);
  std::reverse(idx.begin(), idx.end());
  double credit = 0.0;
  std::size_t neg_below = 0, n_pos = 0, n_neg = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    std::size_t gp = 0, gn = 0;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      (labels[idx[j]] != 0 ? gp : gn) += 1;
      ++j;
    }
    credit += static_cast<double>(gp) *
              (static_cast<double>(neg_below) + 0.5 * static_cast<double>(gn));
    neg_below += gn;
    n_pos += gp;
    n_neg += gn;
    i = j;
  }
  return credit / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

void TrainConfig::validate() const {
  if (batch_size < 1)
    throw ConfigError("batch_size must be >= 1");
  if (!(lr > 0.0))
    throw ConfigError("lr must be > 0");
  if (!(lambda_tlr >= 0.0))
    throw ConfigError("lambda_tlr must be >= 0");
  if (!(lambda_a3 >= 0.0))
    throw ConfigError("lambda_a3 must be >= 0");
  if (!(dropout >= 0.0 && dropout < 1.0))
    throw ConfigError("dropout must be in [0, 1)");
  if (d_mem < 1 || d_time < 1 || heads < 1 || d_k < 1 || neighbors < 1)
    throw ConfigError("d_mem, d_time, heads, d_k and neighbors must all be >= 1");
}

ModelDims model_dims(const TrainConfig &cfg, std::size_t d_e) {
  ModelDims d{};
  d.d_mem = cfg.d_mem;
  d.d_time = cfg.d_time;
  d.d_e = d_e;
  d.d_msg = 2 * cfg.d_mem + cfg.d_time + d_e;
  d.d_emb = cfg.d_mem;
  d.attention = AttentionShape{cfg.d_mem + cfg.d_time, cfg.d_mem + d_e + cfg.d_time,
                               cfg.d_k, cfg.heads, d.d_emb, cfg.d_time};
  return d;
}

ModelParams init_params(const TrainConfig &cfg, std::size_t d_e) {
  cfg.validate();
  const ModelDims d = model_dims(cfg, d_e);
  ModelParams p;
  if (cfg.zero_init) {
    p.gru = GruParams::zeros(d.d_msg, d.d_mem);
    p.att = AttentionParams::zeros(d.attention, cfg.dropout);
    p.dec = DecoderParams::zeros(d.d_emb);
    return p;
  }
  Rng rng(mix_seed(cfg.seed, 0x1417));
  p.gru = GruParams::xavier(d.d_msg, d.d_mem, rng);
  p.att = AttentionParams::init(d.attention, cfg.dropout, rng);
  p.dec = DecoderParams::init(d.d_emb, rng);
  return p;
}

double a3_multiplier(const TrainConfig &cfg) {
#ifdef BADGNN_NO_EXTENSIONS
  (void)cfg;
  return 1.0;
#else
  return a3_scale(cfg.neighbors, cfg.d_mem + cfg.d_time, cfg.lambda_a3, cfg.a3_form);
#endif
}

BatchOutput run_batch(const ModelParams &params, const TrainConfig &cfg, NodeMemory &memory,
                      const NeighborIndex &neighbors, std::span<const Event> events,
                      std::span<const NodeId> negatives, const BatchOptions &opts,
                      ModelParams *grads) {
  if (negatives.size() != events.size())
    throw DimensionError("run_batch: one negative per event required");
  const AttentionParams &att = params.att;
  const bool want_grad = grads != nullptr;
#ifdef BADGNN_NO_EXTENSIONS
  const bool keep_caches = want_grad;
#else
  const bool keep_caches = want_grad || cfg.lambda_tlr > 0.0;
#endif
  const TimeCodeFn time_code = [&att](double dt) {
    return time_encode(dt, att.time_omega, att.time_bias);
  };

  // (1) batch k sees memory built from batches < k only.
  const std::vector<AppliedUpdate> applied =
    memory.flush_and_apply(params.gru, time_code, want_grad);
  const Matrix &states = memory.states();

  // (2) embeddings, ordered src_0, dst_0, neg_0, src_1, ...
  const std::size_t b = events.size();
  const double scale = a3_multiplier(cfg);
  const bool dropout_on = opts.training && att.dropout_rate > 0.0;
  Rng dropout_rng(opts.dropout_seed);
  std::vector<EmbeddingCache> caches(keep_caches ? 3 * b : 0);
  std::vector<Matrix> z(3 * b);
  for (std::size_t i = 0; i < b; ++i) {
    const Event &e = events[i];
    const NodeId targets[3] = {e.src, e.dst, negatives[i]};
    for (std::size_t r = 0; r < 3; ++r) {
      const NeighborContext ctx = neighbors.sample(targets[r], e.t, cfg.neighbors);
      Matrix mask;
      if (dropout_on)
        mask = make_dropout_mask(att.d_out(), att.dropout_rate, dropout_rng);
      z[3 * i + r] = embed_node(ctx, states, att, scale, dropout_on ? &mask : nullptr,
                                keep_caches ? &caches[3 * i + r] : nullptr);
    }
  }

  // (3) scores
  BatchOutput out;
  out.pos_scores.resize(b);
  out.neg_scores.resize(b);
  std::vector<DecoderCache> dec_pos(want_grad ? b : 0), dec_neg(want_grad ? b : 0);
  for (std::size_t i = 0; i < b; ++i) {
    out.pos_scores[i] =
      predict_edge(z[3 * i], z[3 * i + 1], params.dec, want_grad ? &dec_pos[i] : nullptr);
    out.neg_scores[i] =
      predict_edge(z[3 * i], z[3 * i + 2], params.dec, want_grad ? &dec_neg[i] : nullptr);
  }

  // (4) loss
  const std::vector<double> ones(b, 1.0), zeros(b, 0.0);
  const double inv_b = 1.0 / static_cast<double>(b);
  out.bce = bce_loss(out.pos_scores, ones) * inv_b + bce_loss(out.neg_scores, zeros) * inv_b;
  out.loss = out.bce;

#ifndef BADGNN_NO_EXTENSIONS
  std::size_t tlr_terms = 0;
  if (keep_caches) {
    double tlr_sum = 0.0;
    for (const EmbeddingCache &ec : caches) {
      if (ec.attention.self_fallback)
        continue;
      for (std::size_t h = 0; h < att.heads(); ++h)
        tlr_sum += tlr_penalty(att.w_q[h], ec.attention.heads[h].v);
      tlr_terms += att.heads();
    }
    out.tlr = tlr_terms > 0 ? tlr_sum / static_cast<double>(tlr_terms) : 0.0;
  }
  out.loss = total_loss(out.bce, out.tlr, cfg.lambda_tlr);
#endif

  if (want_grad) {
    // (5) backward
    std::vector<Matrix> dz(3 * b, Matrix(1, att.d_out()));
    for (std::size_t i = 0; i < b; ++i) {
      const double p_pos = out.pos_scores[i];
      const double p_neg = out.neg_scores[i];
      const double g_pos = clamp_prob(p_pos) == p_pos ? (p_pos - 1.0) * inv_b : 0.0;
      const double g_neg = clamp_prob(p_neg) == p_neg ? p_neg * inv_b : 0.0;
      decoder_backward(dec_pos[i], g_pos, params.dec, grads->dec, dz[3 * i], dz[3 * i + 1]);
      decoder_backward(dec_neg[i], g_neg, params.dec, grads->dec, dz[3 * i], dz[3 * i + 2]);
    }

    std::map<NodeId, Matrix> d_state;
    const StateGradSink sink = [&d_state](NodeId n, const Matrix &g) {
      auto [it, inserted] = d_state.try_emplace(n, g);
      if (!inserted)
        it->second += g;
    };
    for (std::size_t k = 0; k < 3 * b; ++k) {
#ifndef BADGNN_NO_EXTENSIONS
      const AttentionCache &ac = caches[k].attention;
      if (cfg.lambda_tlr > 0.0 && !ac.self_fallback && tlr_terms > 0) {
        const double w = cfg.lambda_tlr / static_cast<double>(tlr_terms);
        std::vector<Matrix> extra_dv;
        extra_dv.reserve(att.heads());
        for (std::size_t h = 0; h < att.heads(); ++h) {
          Matrix dv(ac.heads[h].v.rows(), ac.heads[h].v.cols());
          tlr_penalty_backward(att.w_q[h], ac.heads[h].v, w, grads->att.w_q[h], dv);
          extra_dv.push_back(std::move(dv));
        }
        embed_backward(caches[k], dz[k], att, grads->att, sink, &extra_dv);
        continue;
      }
#endif
      embed_backward(caches[k], dz[k], att, grads->att, sink);
    }

    // Memory rows refreshed by this flush carry gradient back into the GRU
    // and the time encoder that built their messages.
    const std::size_t d_mem = memory.d_mem();
    const std::size_t time_offset = 2 * d_mem;
    for (const AppliedUpdate &up : applied) {
      auto it = d_state.find(up.node);
      if (it == d_state.end())
        continue;
      Matrix d_msg;
      gru_backward(up.cache, it->second, params.gru, grads->gru, &d_msg);
      time_encode_backward(up.message.dt, att.time_omega, att.time_bias,
                           col_slice(d_msg, time_offset, att.d_time()), grads->att.time_omega,
                           grads->att.time_bias);
    }
  }

  // (6) stage this batch for the next one
  memory.stage_events(events);
  return out;
}

LinkPredictor::LinkPredictor(TrainConfig cfg, const EventStream &full_stream)
  : cfg_(std::move(cfg)), d_e_(full_stream.d_e()), params_(init_params(cfg_, d_e_)),
    memory_(full_stream.n_nodes(), cfg_.d_mem), neighbors_(full_stream),
    universe_(full_stream.destination_universe()) {
  adam_.m = params_.zeros_like();
  adam_.v = params_.zeros_like();
}

void LinkPredictor::set_params(ModelParams p) {
  params_ = std::move(p);
  adam_.m = params_.zeros_like();
  adam_.v = params_.zeros_like();
  adam_.step = 0;
}

std::vector<NodeId> LinkPredictor::negatives_for(const Batch &b, std::uint64_t tag) const {
  return sample_negatives(b, universe_, mix_seed(cfg_.seed, tag, b.index));
}

std::uint64_t LinkPredictor::train_negative_tag(std::size_t epoch) {
  return mix_seed(kTrainNegTag, epoch);
}

Metrics LinkPredictor::train_epoch(const EventStream &part, std::size_t epoch) {
  const auto start = std::chrono::steady_clock::now();
  memory_.reset();
  std::vector<double> scores;
  std::vector<int> labels;
  double loss_sum = 0.0;
  const auto batches = make_batches(part, cfg_.batch_size);
  ModelParams grads = params_.zeros_like();
  for (const Batch &b : batches) {
    const auto negs = negatives_for(b, train_negative_tag(epoch));
    ModelParams::visit(grads, [](const std::string &, Matrix &m) { m.fill(0.0); });
    BatchOptions opts;
    opts.training = true;
    opts.dropout_seed = mix_seed(cfg_.seed, mix_seed(kDropoutTag, epoch), b.index);
    const BatchOutput out =
      run_batch(params_, cfg_, memory_, neighbors_, b.events, negs, opts, &grads);
    adam_step(params_, grads, adam_, cfg_.lr);
    loss_sum += out.loss;
    for (std::size_t i = 0; i < out.pos_scores.size(); ++i) {
      scores.push_back(out.pos_scores[i]);
      labels.push_back(1);
      scores.push_back(out.neg_scores[i]);
      labels.push_back(0);
    }
  }
  Metrics m;
  if (!batches.empty()) {
    m.loss = loss_sum / static_cast<double>(batches.size());
    m.ap = average_precision(scores, labels);
    m.auc = roc_auc(scores, labels);
  }
  m.epoch_time =
    std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return m;
}

void LinkPredictor::replay(const EventStream &part) {
  const AttentionParams &att = params_.att;
  const TimeCodeFn time_code = [&att](double dt) {
    return time_encode(dt, att.time_omega, att.time_bias);
  };
  for (const Batch &b : make_batches(part, cfg_.batch_size)) {
    memory_.flush_and_apply(params_.gru, time_code);
    memory_.stage_events(b.events);
  }
}

Metrics LinkPredictor::evaluate(const EventStream &part, std::uint64_t negative_tag) {
  const auto start = std::chrono::steady_clock::now();
  std::vector<double> scores;
  std::vector<int> labels;
  double loss_sum = 0.0;
  const auto batches = make_batches(part, cfg_.batch_size);
  for (const Batch &b : batches) {
    const auto negs = negatives_for(b, negative_tag);
    const BatchOutput out =
      run_batch(params_, cfg_, memory_, neighbors_, b.events, negs, BatchOptions{});
    loss_sum += out.loss;
    for (std::size_t i = 0; i < out.pos_scores.size(); ++i) {
      scores.push_back(out.pos_scores[i]);
      labels.push_back(1);
      scores.push_back(out.neg_scores[i]);
      labels.push_back(0);
    }
  }
  Metrics m;
  m.ap = average_precision(scores, labels);
  m.auc = roc_auc(scores, labels);
  m.loss = batches.empty() ? 0.0 : loss_sum / static_cast<double>(batches.size());
  m.epoch_time =
    std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return m;
}

} // namespace badgnn
