// SPDX-License-Identifier: Apache-2.0
// Tiny seeded models for whole-batch gradient checks.
#pragma once

#include <string>
#include <vector>

#include <badgnn/gradcheck.hpp>
#include <badgnn/training.hpp>

namespace micro {

using badgnn::Matrix;

struct Instance {
  badgnn::TrainConfig cfg;
  badgnn::EventStream stream;
  badgnn::NeighborIndex index;
  badgnn::ModelParams params;
  /// Memory just before the checked batch, with the previous batch staged.
  badgnn::NodeMemory memory;
  std::size_t batch_begin = 0;
  std::vector<badgnn::NodeId> negatives;
  badgnn::BatchOptions opts;

  std::span<const badgnn::Event> batch() const {
    return stream.events().subspan(batch_begin);
  }

  double loss(const badgnn::ModelParams &p) const {
    badgnn::NodeMemory m = memory;
    return badgnn::run_batch(p, cfg, m, index, batch(), negatives, opts).loss;
  }

  badgnn::ModelParams gradient() const {
    badgnn::NodeMemory m = memory;
    badgnn::ModelParams g = params.zeros_like();
    badgnn::run_batch(params, cfg, m, index, batch(), negatives, opts, &g);
    return g;
  }
};

/// 4 nodes (2 users, 2 items), 6 events, two warm-up batches of two events
/// and a checked batch of two. The memory starts from random states so every
/// path carries non-zero signal.
inline Instance make_instance(std::uint64_t seed, double lambda_tlr, double lambda_a3,
                              double dropout = 0.0) {
  using namespace badgnn;
  Rng rng(seed);
  Instance in;
  in.cfg.batch_size = 2;
  in.cfg.lambda_tlr = lambda_tlr;
  in.cfg.lambda_a3 = lambda_a3;
  in.cfg.d_mem = 3;
  in.cfg.d_time = 2;
  in.cfg.d_k = 2;
  in.cfg.heads = 2;
  in.cfg.neighbors = 2;
  in.cfg.dropout = dropout;
  in.cfg.seed = seed;

  std::vector<Event> ev;
  const NodeId src[6] = {0, 1, 0, 1, 0, 1};
  const NodeId dst[6] = {2, 3, 3, 2, 2, 3};
  for (std::uint64_t i = 0; i < 6; ++i) {
    Event e{src[i], dst[i], 0.5 + static_cast<double>(i) + rng.uniform(0.0, 0.4),
            {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)}, {}, i};
    ev.push_back(std::move(e));
  }
  in.stream = EventStream(std::move(ev), 4, 2);
  in.index = NeighborIndex(in.stream);

  in.params = init_params(in.cfg, 2);
  ModelParams::visit(in.params, [&](const std::string &, Matrix &m) {
    m = normal_matrix(m.rows(), m.cols(), 0.6, rng);
  });
  in.params.att.dropout_rate = dropout;

  in.memory = NodeMemory(4, 3);
  in.memory.restore(uniform_matrix(4, 3, -0.8, 0.8, rng), std::vector<double>(4, 0.0));
  const std::vector<NodeId> warm_neg = {3, 2};
  for (std::size_t b = 0; b < 2; ++b)
    run_batch(in.params, in.cfg, in.memory, in.index, in.stream.events().subspan(2 * b, 2),
              warm_neg, BatchOptions{});
  in.batch_begin = 4;
  in.negatives = {3, 2};
  in.opts.training = dropout > 0.0;
  in.opts.dropout_seed = mix_seed(seed, 99);
  return in;
}

/// grad_check of every trainable matrix of the instance.
inline std::vector<badgnn::GradCheckReport> check_all(const Instance &in) {
  using namespace badgnn;
  const ModelParams g = in.gradient();
  std::vector<const Matrix *> grads;
  ModelParams::visit(g, [&](const std::string &, const Matrix &m) { grads.push_back(&m); });
  std::vector<GradCheckReport> out;
  std::size_t k = 0;
  ModelParams probe = in.params;
  ModelParams::visit(probe, [&](const std::string &name, Matrix &slot) {
    const Matrix point = slot;
    const auto f = [&](const Matrix &x) {
      slot = x;
      const double v = in.loss(probe);
      slot = point;
      return v;
    };
    out.push_back(grad_check(f, *grads[k++], point, name));
  });
  return out;
}

} // namespace micro
