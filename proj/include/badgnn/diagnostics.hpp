// SPDX-License-Identifier: Apache-2.0
/**
 * @file   diagnostics.hpp
 * @brief  Lipschitz bound terms evaluated on live attention instances of a
 *         model, with perturbation probes on the query input.
 *
 * Per head the value matrix is V = X Mv (k x d_k) and the query operand of
 * the delta term is the projected query row Q = x_q Mq. Model-level report
 * fields are suprema over the diagnosed instances. Instances without
 * neighbors are skipped; their attention is the linear fallback.
 */
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <badgnn/attention.hpp>
#include <badgnn/lipschitz.hpp>
#include <badgnn/training.hpp>

namespace badgnn {

struct DiagnoseOptions {
  double sigma = kDefaultSigma;
  /// Replace sigma by the smallest softmax weight seen across instances.
  bool sigma_from_softmax = false;
  std::size_t probe_trials = 32;
  double probe_step = 1e-4;
  std::uint64_t seed = 0;
  /// 0 = probe every instance.
  std::size_t max_probed = 64;
};

struct InstanceBounds {
  std::size_t m = 0;
  std::vector<double> lambda, delta, head_bound, bsr;
  double model_bound = 0.0;
  bool degenerate = false;
  double probe = 0.0; ///< only filled when probed
};

/// Bound terms of one attention evaluation at (x_q, x_kv). x_kv must have at
/// least one row.
InstanceBounds instance_bounds(const AttentionParams &p, const Matrix &x_q, const Matrix &x_kv,
                               double scale, double sigma);

/// instance_bounds plus an empirical probe of x_q -> attention output.
InstanceBounds diagnose_attention(const AttentionParams &p, const Matrix &x_q,
                                  const Matrix &x_kv, double scale, const DiagnoseOptions &opts);

/// Runs one evaluation batch (memory advances exactly as in run_batch) and
/// reports bound terms over every endpoint and negative embedding in it.
LipschitzReport diagnose_batch(const ModelParams &params, const TrainConfig &cfg,
                               NodeMemory &memory, const NeighborIndex &neighbors,
                               std::span<const Event> events, std::span<const NodeId> negatives,
                               const DiagnoseOptions &opts);

} // namespace badgnn
