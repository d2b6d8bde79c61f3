// SPDX-License-Identifier: Apache-2.0
/**
 * @file   lipschitz.hpp
 * @brief  Analytic Lipschitz bound terms for BCE and multi-head attention,
 *         the batch sensitivity range, and empirical perturbation probes.
 *
 *   L(loss)  = |sum_i (p_i - y_i)|
 *   Lambda   = ||Mq V^T||_F ||Mq V^T||_max ||V||_F ||V||_max
 *   Delta    = || sqrt(S V V^T)^T Q V^T ||_*^2      (sqrt elementwise, clamped at 0)
 *   L(att)  <= sqrt( [ (mn)^2 Lambda + m^2 n^1.5 Lambda - 2 n sigma^2 / (mn)^2 Delta ] / d_k )
 *   L(model)<= ||W0||_* sqrt( sum_h L(att_h)^2 )
 *   BSR      = mu1 Lambda - mu2 Delta,
 *              mu1 = ((mn)^2 + m^2 n^1.5) / d_k,  mu2 = 2 n sigma^2 / ((mn)^2 d_k)
 *
 * m: neighbor sequence length, n: query input width, d_k: key width. When the
 * attention logits carry an A3 multiplier c, pass d_k / c^2.
 */
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include <badgnn/linalg.hpp>

namespace badgnn {

inline constexpr double kDefaultSigma = 1e-3;

double loss_lipschitz(std::span<const double> p, std::span<const double> y);

double lambda_term(const Matrix &m_q, const Matrix &v);

/// `query` supplies the rows indexed like the rows of S (for one target with
/// k neighbors: S is 1 x k, query 1 x d_k, V k x d_k).
double delta_term(const Matrix &s, const Matrix &v, const Matrix &query);

struct BoundTerms {
  std::size_t m = 1;
  std::size_t n = 1;
  double d_k = 1.0;
  double sigma = kDefaultSigma;
};

struct AttBound {
  double value = 0.0;
  bool degenerate = false; ///< bracket was negative and clamped to 0
};

AttBound att_bound(double lambda, double delta, const BoundTerms &terms);

double model_bound(const Matrix &w_o, std::span<const double> head_bounds);

double bsr(double lambda, double delta, const BoundTerms &terms);
double bsr_mu1(const BoundTerms &terms);
double bsr_mu2(const BoundTerms &terms);

using VectorFunction = std::function<Matrix(const Matrix &)>;

/// max over seeded random directions delta, ||delta||_F = step, of
/// ||f(x + delta) - f(x)||_F / step. Throws ProbeError on non-finite output.
double empirical_probe(const VectorFunction &f, const Matrix &x, std::size_t trials,
                       double step, std::uint64_t seed);

struct LipschitzReport {
  double l_loss = 0.0;
  double lambda_term = 0.0;
  double delta_term = 0.0;
  std::vector<double> att_bound; ///< per head
  double model_bound = 0.0;
  double bsr = 0.0;
  double sigma = kDefaultSigma;
  std::size_t m = 0, n = 0, d_k = 0, batch_size = 0;
  double a3_multiplier = 1.0;
  bool degenerate = false;
  double empirical_ratio_max = 0.0;
  std::size_t instances = 0;
  std::size_t probe_trials = 0;
  double probe_step = 0.0;
};

nlohmann::json to_json(const LipschitzReport &r);

} // namespace badgnn
