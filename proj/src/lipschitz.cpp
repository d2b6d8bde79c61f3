// SPDX-License-Identifier: Apache-2.0
#include <badgnn/lipschitz.hpp>

#include <algorithm>
#include <cmath>

#include <badgnn/error.hpp>
#include <badgnn/random.hpp>

namespace badgnn {

double loss_lipschitz(std::span<const double> p, std::span<const double> y) {
  if (p.size() != y.size())
    throw DimensionError("loss_lipschitz: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    s += p[i] - y[i];
  return std::abs(s);
}

double lambda_term(const Matrix &m_q, const Matrix &v) {
  const Matrix mv = matmul_nt(m_q, v);
  return frobenius_norm(mv) * max_abs(mv) * frobenius_norm(v) * max_abs(v);
}

double delta_term(const Matrix &s, const Matrix &v, const Matrix &query) {
  if (s.cols() != v.rows())
    throw DimensionError("delta_term: S columns must match V rows");
  if (query.rows() != s.rows() || query.cols() != v.cols())
    throw DimensionError("delta_term: query operand must be rows(S) x cols(V)");
  Matrix root = matmul(s, matmul_nt(v, v));
  for (double &x : root.values())
    x = std::sqrt(std::max(x, 0.0));
  const Matrix composite = matmul(matmul_tn(root, query), transpose(v));
  const double norm = spectral_norm(composite);
  return norm * norm;
}

double bsr_mu1(const BoundTerms &t) {
  const double m = static_cast<double>(t.m);
  const double n = static_cast<double>(t.n);
  return ((m * n) * (m * n) + m * m * std::pow(n, 1.5)) / t.d_k;
}

double bsr_mu2(const BoundTerms &t) {
  const double mn = static_cast<double>(t.m) * static_cast<double>(t.n);
  return 2.0 * static_cast<double>(t.n) * t.sigma * t.sigma / (mn * mn * t.d_k);
}

double bsr(double lambda, double delta, const BoundTerms &t) {
  return bsr_mu1(t) * lambda - bsr_mu2(t) * delta;
}

AttBound att_bound(double lambda, double delta, const BoundTerms &t) {
  if (!(t.d_k > 0.0))
    throw ConfigError("att_bound: d_k must be positive");
  if (t.m < 1 || t.n < 1)
    throw ConfigError("att_bound: m and n must be >= 1");
  if (!(t.sigma >= 0.0))
    throw ConfigError("att_bound: sigma must be >= 0");
  const double bracket = bsr(lambda, delta, t);
  AttBound b;
  if (bracket < 0.0) {
    b.degenerate = true;
    return b;
  }
  b.value = std::sqrt(bracket);
  return b;
}

double model_bound(const Matrix &w_o, std::span<const double> head_bounds) {
  if (head_bounds.empty())
    throw ConfigError("model_bound: need at least one head bound");
  double sq = 0.0;
  for (double b : head_bounds)
    sq += b * b;
  return spectral_norm(w_o) * std::sqrt(sq);
}

double empirical_probe(const VectorFunction &f, const Matrix &x, std::size_t trials,
                       double step, std::uint64_t seed) {
  if (trials < 1)
    throw ConfigError("empirical_probe: trials must be >= 1");
  if (!(step > 0.0))
    throw ConfigError("empirical_probe: step must be > 0");
  const Matrix fx = f(x);
  if (!all_finite(fx))
    throw ProbeError("empirical_probe: non-finite output at base point");
  double best = 0.0;
  for (std::size_t k = 0; k < trials; ++k) {
    Rng rng(mix_seed(seed, k));
    Matrix delta = normal_matrix(x.rows(), x.cols(), 1.0, rng);
    const double norm = frobenius_norm(delta);
    if (norm == 0.0)
      continue;
    delta *= step / norm;
    const Matrix fy = f(x + delta);
    if (!all_finite(fy))
      throw ProbeError("empirical_probe: non-finite output at trial " + std::to_string(k));
    const Matrix diff = fy - fx;
    best = std::max(best, frobenius_norm(diff) / step);
  }
  return best;
}

nlohmann::json to_json(const LipschitzReport &r) {
  return nlohmann::json{
    {"l_loss", r.l_loss},
    {"lambda_term", r.lambda_term},
    {"delta_term", r.delta_term},
    {"att_bound", r.att_bound},
    {"model_bound", r.model_bound},
    {"bsr", r.bsr},
    {"sigma", r.sigma},
    {"m", r.m},
    {"n", r.n},
    {"d_k", r.d_k},
    {"batch_size", r.batch_size},
    {"a3_multiplier", r.a3_multiplier},
    {"degenerate", r.degenerate},
    {"empirical_ratio_max", r.empirical_ratio_max},
    {"instances", r.instances},
    {"probe_trials", r.probe_trials},
    {"probe_step", r.probe_step},
  };
}

} // namespace badgnn
