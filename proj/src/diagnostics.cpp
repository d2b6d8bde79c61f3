// SPDX-License-Identifier: Apache-2.0
#include <badgnn/diagnostics.hpp>

#include <algorithm>
#include <limits>

#include <badgnn/error.hpp>
#include <badgnn/random.hpp>

namespace badgnn {

namespace {

InstanceBounds bounds_from_cache(const AttentionParams &p, const AttentionCache &c,
                                 double sigma) {
  InstanceBounds ib;
  ib.m = c.x_kv.rows();
  BoundTerms terms;
  terms.m = ib.m;
  terms.n = p.n_q();
  terms.d_k = static_cast<double>(p.d_k()) / (c.scale * c.scale);
  terms.sigma = sigma;
  for (std::size_t h = 0; h < p.heads(); ++h) {
    const HeadCache &hc = c.heads[h];
    const double lam = lambda_term(p.w_q[h], hc.v);
    const double del = delta_term(hc.weights, hc.v, hc.q);
    const AttBound b = att_bound(lam, del, terms);
    ib.lambda.push_back(lam);
    ib.delta.push_back(del);
    ib.head_bound.push_back(b.value);
    ib.bsr.push_back(bsr(lam, del, terms));
    ib.degenerate = ib.degenerate || b.degenerate;
  }
  ib.model_bound = model_bound(p.w_o, ib.head_bound);
  return ib;
}

double probe_query(const AttentionParams &p, const Matrix &x_q, const Matrix &x_kv,
                   double scale, const DiagnoseOptions &opts, std::uint64_t seed) {
  const VectorFunction f = [&](const Matrix &x) {
    return attention_forward(x, x_kv, p, scale);
  };
  return empirical_probe(f, x_q, opts.probe_trials, opts.probe_step, seed);
}

} // namespace

InstanceBounds instance_bounds(const AttentionParams &p, const Matrix &x_q, const Matrix &x_kv,
                               double scale, double sigma) {
  if (x_kv.rows() == 0)
    throw ConfigError("instance_bounds: no neighbors, attention is the linear fallback");
  AttentionCache c;
  attention_forward(x_q, x_kv, p, scale, nullptr, &c);
  return bounds_from_cache(p, c, sigma);
}

InstanceBounds diagnose_attention(const AttentionParams &p, const Matrix &x_q,
                                  const Matrix &x_kv, double scale, const DiagnoseOptions &opts) {
  InstanceBounds ib = instance_bounds(p, x_q, x_kv, scale, opts.sigma);
  ib.probe = probe_query(p, x_q, x_kv, scale, opts, opts.seed);
  return ib;
}

LipschitzReport diagnose_batch(const ModelParams &params, const TrainConfig &cfg,
                               NodeMemory &memory, const NeighborIndex &neighbors,
                               std::span<const Event> events, std::span<const NodeId> negatives,
                               const DiagnoseOptions &opts) {
  const AttentionParams &att = params.att;
  const BatchOutput out =
    run_batch(params, cfg, memory, neighbors, events, negatives, BatchOptions{});
  const Matrix &states = memory.states();
  const double scale = a3_multiplier(cfg);

  LipschitzReport r;
  std::vector<double> p(out.pos_scores), y(out.pos_scores.size(), 1.0);
  p.insert(p.end(), out.neg_scores.begin(), out.neg_scores.end());
  y.resize(p.size(), 0.0);
  r.l_loss = loss_lipschitz(p, y);
  r.m = cfg.neighbors;
  r.n = att.n_q();
  r.d_k = att.d_k();
  r.batch_size = events.size();
  r.a3_multiplier = scale;
  r.probe_trials = opts.probe_trials;
  r.probe_step = opts.probe_step;
  r.att_bound.assign(att.heads(), 0.0);
  r.bsr = -std::numeric_limits<double>::infinity();

  std::vector<AttentionCache> live;
  for (std::size_t i = 0; i < events.size(); ++i) {
    const Event &e = events[i];
    const NodeId targets[3] = {e.src, e.dst, negatives[i]};
    for (NodeId node : targets) {
      EmbeddingCache ec;
      embed_node(neighbors.sample(node, e.t, cfg.neighbors), states, att, scale, nullptr, &ec);
      if (!ec.attention.self_fallback)
        live.push_back(std::move(ec.attention));
    }
  }

  double sigma = opts.sigma;
  if (opts.sigma_from_softmax && !live.empty()) {
    sigma = std::numeric_limits<double>::infinity();
    for (const AttentionCache &c : live)
      for (const HeadCache &hc : c.heads)
        for (double w : hc.weights.values())
          sigma = std::min(sigma, w);
  }
  r.sigma = sigma;
  r.instances = live.size();

  for (std::size_t k = 0; k < live.size(); ++k) {
    const AttentionCache &c = live[k];
    const InstanceBounds ib = bounds_from_cache(att, c, sigma);
    for (std::size_t h = 0; h < att.heads(); ++h) {
      r.lambda_term = std::max(r.lambda_term, ib.lambda[h]);
      r.delta_term = std::max(r.delta_term, ib.delta[h]);
      r.att_bound[h] = std::max(r.att_bound[h], ib.head_bound[h]);
      r.bsr = std::max(r.bsr, ib.bsr[h]);
    }
    r.model_bound = std::max(r.model_bound, ib.model_bound);
    r.degenerate = r.degenerate || ib.degenerate;
    if (opts.max_probed == 0 || k < opts.max_probed) {
      const double ratio = probe_query(att, c.x_q, c.x_kv, scale, opts, mix_seed(opts.seed, k));
      r.empirical_ratio_max = std::max(r.empirical_ratio_max, ratio);
    }
  }
  if (live.empty())
    r.bsr = 0.0;
  return r;
}

} // namespace badgnn
