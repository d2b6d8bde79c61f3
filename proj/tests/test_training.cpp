// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include <badgnn/error.hpp>
#include <badgnn/gradcheck.hpp>
#include <badgnn/training.hpp>

#include "micro.hpp"
#include "oracles.hpp"

using namespace badgnn;

namespace {

double bce(std::vector<double> p, std::vector<double> y) { return bce_loss(p, y); }

Matrix random_orthogonal(std::size_t n, Rng &rng) {
  // Gram-Schmidt on a Gaussian matrix; columns are orthonormal.
  Matrix a = normal_matrix(n, n, 1.0, rng);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t k = 0; k < j; ++k) {
      double d = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        d += a(i, j) * a(i, k);
      for (std::size_t i = 0; i < n; ++i)
        a(i, j) -= d * a(i, k);
    }
    double norm = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      norm += a(i, j) * a(i, j);
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < n; ++i)
      a(i, j) /= norm;
  }
  return a;
}

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.batch_size = 50;
  cfg.d_mem = 6;
  cfg.d_time = 3;
  cfg.d_k = 4;
  cfg.heads = 2;
  cfg.neighbors = 3;
  cfg.epochs = 1;
  cfg.seed = 5;
  return cfg;
}

EventStream small_stream(std::size_t n = 300) {
  SyntheticOptions o;
  o.n_events = n;
  o.n_users = 10;
  o.n_items = 6;
  o.d_e = 2;
  return make_synthetic_stream(o);
}

} // namespace

TEST(BceLoss, Examples) {
  EXPECT_NEAR(bce({0.5}, {1}), std::numbers::ln2, 1e-12);
  EXPECT_NEAR(bce({0.7, 0.2}, {1, 0}), -std::log(0.7) - std::log(0.8), 1e-12);
  EXPECT_NEAR(bce({0.7, 0.2}, {1, 0}), 0.579818, 1e-6);
  EXPECT_LE(bce({1.0, 0.0, 1.0}, {1, 0, 1}), 3.0 * -std::log(1.0 - kBceEpsilon) * (1 + 1e-9));
  EXPECT_THROW(bce({0.5}, {1, 0}), DimensionError);
}

TEST(BceLoss, NonNegativeAndFiniteEverywhere) {
  Rng rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> p(1 + rng.below(5)), y(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] = rng.uniform() < 0.1 ? static_cast<double>(rng.below(2)) : rng.uniform();
      y[i] = static_cast<double>(rng.below(2));
    }
    const double l = bce_loss(p, y);
    EXPECT_GE(l, 0.0);
    EXPECT_TRUE(std::isfinite(l));
  }
}

TEST(TlrPenalty, Examples) {
  EXPECT_EQ(tlr_penalty(Matrix{{1, 2}}, Matrix(3, 2)), 0.0);
  EXPECT_DOUBLE_EQ(tlr_penalty(Matrix{{3}}, Matrix{{2}}), 12.0);
  EXPECT_THROW(tlr_penalty(Matrix(2, 3), Matrix(2, 2)), DimensionError);
}

TEST(TlrPenalty, QuadraticInValueScale) {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix mq = normal_matrix(4, 3, 1.0, rng), v = normal_matrix(2, 3, 1.0, rng);
    const double c = rng.uniform(0.1, 5.0);
    const double base = tlr_penalty(mq, v);
    EXPECT_NEAR(tlr_penalty(mq, c * v), c * c * base, 1e-12 * c * c * base);
  }
}

TEST(TlrPenalty, RightOrthogonalInvariance) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix mq = normal_matrix(5, 4, 1.0, rng), v = normal_matrix(3, 4, 1.0, rng);
    const Matrix r = random_orthogonal(4, rng);
    const Matrix mqr = matmul(mq, r), vr = matmul(v, r);
    const double a = frobenius_norm(matmul_nt(mq, v)), a_rot = frobenius_norm(matmul_nt(mqr, vr));
    EXPECT_NEAR(a_rot, a, 1e-12 * a);
    EXPECT_NEAR(frobenius_norm(vr), frobenius_norm(v), 1e-12 * frobenius_norm(v));
  }
}

TEST(TlrPenalty, BackwardPassesGradCheck) {
  Rng rng(4);
  const Matrix mq = normal_matrix(4, 3, 1.0, rng), v = normal_matrix(2, 3, 1.0, rng);
  Matrix d_mq(4, 3), d_v(2, 3);
  tlr_penalty_backward(mq, v, 0.7, d_mq, d_v);
  EXPECT_TRUE(grad_check([&](const Matrix &m) { return 0.7 * tlr_penalty(m, v); }, d_mq, mq, "m_q")
                .passed);
  EXPECT_TRUE(
    grad_check([&](const Matrix &x) { return 0.7 * tlr_penalty(mq, x); }, d_v, v, "v").passed);
  Matrix z_mq(4, 3), z_v(2, 3);
  tlr_penalty_backward(mq, Matrix(2, 3), 1.0, z_mq, z_v);
  EXPECT_EQ(z_mq, Matrix(4, 3));
  EXPECT_EQ(z_v, Matrix(2, 3));
}

TEST(TotalLoss, Examples) {
  EXPECT_EQ(total_loss(0.6931, 12.0, 0.0), 0.6931);
  EXPECT_NEAR(total_loss(0.6931, 12.0, 0.0005), 0.6991, 1e-12);
}

TEST(PredictEdge, ZeroDecoderGivesSigmoidOfBias) {
  DecoderParams p = DecoderParams::zeros(3);
  const Matrix z{{1, -2, 3}};
  EXPECT_EQ(predict_edge(z, z, p), 0.5);
  p.b2[0] = 1.2;
  EXPECT_NEAR(predict_edge(z, Matrix(1, 3), p), oracle::sig(1.2), 1e-15);
  EXPECT_THROW(predict_edge(z, Matrix(1, 2), p), DimensionError);
}

TEST(PredictEdge, SymmetricDecoderIgnoresOrder) {
  Rng rng(5);
  DecoderParams p = DecoderParams::init(4, rng);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      p.w1(4 + i, j) = p.w1(i, j);
  const Matrix a = normal_matrix(1, 4, 1.0, rng), b = normal_matrix(1, 4, 1.0, rng);
  EXPECT_EQ(predict_edge(a, b, p), predict_edge(b, a, p));
}

TEST(PredictEdge, MatchesLoopOracleAndGradients) {
  Rng rng(6);
  DecoderParams p = DecoderParams::init(4, rng);
  p.b1 = normal_matrix(1, 4, 0.5, rng);
  p.b2 = normal_matrix(1, 1, 0.5, rng);
  const Matrix a = normal_matrix(1, 4, 1.0, rng), b = normal_matrix(1, 4, 1.0, rng);
  double logit = p.b2[0];
  for (std::size_t j = 0; j < 4; ++j) {
    double h = p.b1[j];
    for (std::size_t i = 0; i < 4; ++i)
      h += a[i] * p.w1(i, j) + b[i] * p.w1(4 + i, j);
    logit += std::max(h, 0.0) * p.w2[j];
  }
  DecoderCache cache;
  EXPECT_NEAR(predict_edge(a, b, p, &cache), oracle::sig(logit), 1e-12);

  DecoderParams g = DecoderParams::zeros(4);
  Matrix da(1, 4), db(1, 4);
  decoder_backward(cache, 1.0, p, g, da, db);
  const auto logit_of = [](double prob) { return std::log(prob / (1.0 - prob)); };
  DecoderParams::visit(g, [&](const std::string &name, Matrix &grad) {
    DecoderParams probe = p;
    Matrix *slot = nullptr;
    DecoderParams::visit(probe, [&](const std::string &n, Matrix &m) {
      if (n == name)
        slot = &m;
    });
    const Matrix point = *slot;
    const auto f = [&](const Matrix &x) {
      *slot = x;
      return logit_of(predict_edge(a, b, probe));
    };
    EXPECT_TRUE(grad_check(f, grad, point, name).passed) << name;
  });
  EXPECT_TRUE(
    grad_check([&](const Matrix &x) { return logit_of(predict_edge(x, b, p)); }, da, a, "src")
      .passed);
  EXPECT_TRUE(
    grad_check([&](const Matrix &x) { return logit_of(predict_edge(a, x, p)); }, db, b, "dst")
      .passed);
}

TEST(Adam, ZeroGradientKeepsParamsAndDecaysMoments) {
  Matrix p{{1.0, -2.0}}, m{{0.5, 0.5}}, v{{0.25, 0.25}};
  adam_step(p, Matrix(1, 2), m, v, 3, 0.01);
  EXPECT_NE(p, (Matrix{{1.0, -2.0}}));  // stale moments still move it
  Matrix q{{1.0, -2.0}}, m0(1, 2), v0(1, 2);
  adam_step(q, Matrix(1, 2), m0, v0, 1, 0.01);
  EXPECT_EQ(q, (Matrix{{1.0, -2.0}}));
  EXPECT_DOUBLE_EQ(m[0], 0.45);
  EXPECT_DOUBLE_EQ(v[0], 0.25 * 0.999);
}

TEST(Adam, FirstStepHasMagnitudeLr) {
  Matrix p{{0.0}}, m(1, 1), v(1, 1);
  adam_step(p, Matrix{{1.0}}, m, v, 1, 0.001);
  EXPECT_NEAR(p[0], -0.001 / (1.0 + 1e-8), 1e-18);
}

TEST(Adam, ConstantGradientDecreasesMonotonically) {
  Matrix p{{3.0}}, m(1, 1), v(1, 1);
  double prev = p[0];
  for (int t = 1; t <= 100; ++t) {
    adam_step(p, Matrix{{0.4}}, m, v, t, 0.01);
    EXPECT_LT(p[0], prev);
    prev = p[0];
  }
}

TEST(Metrics, Examples) {
  const std::vector<double> s = {0.9, 0.8, 0.7};
  const std::vector<int> y = {1, 0, 1};
  EXPECT_NEAR(average_precision(s, y), (1.0 + 2.0 / 3.0) / 2.0, 1e-15);
  EXPECT_NEAR(average_precision(s, y), 0.8333, 1e-4);
  EXPECT_DOUBLE_EQ(roc_auc(s, y), 0.5);
  const std::vector<double> sep = {0.9, 0.8, 0.2, 0.1};
  const std::vector<int> ys = {1, 1, 0, 0};
  EXPECT_EQ(average_precision(sep, ys), 1.0);
  EXPECT_EQ(roc_auc(sep, ys), 1.0);
  const std::vector<double> flat(4, 0.3);
  EXPECT_EQ(roc_auc(flat, ys), 0.5);
  EXPECT_EQ(average_precision(flat, ys), 0.5);
  EXPECT_THROW(average_precision(s, std::vector<int>{1, 1, 1}), MetricError);
  EXPECT_THROW(roc_auc(s, std::vector<int>{0, 0, 0}), MetricError);
  EXPECT_THROW(roc_auc(s, std::vector<int>{0, 1}), DimensionError);
}

TEST(Metrics, MatchBruteForceOnRandomSequences) {
  Rng rng(7);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t n = 2 + rng.below(7);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng.below(4)) / 4.0;
      y[i] = static_cast<int>(rng.below(2));
    }
    y[0] = 1;
    y[1] = 0;
    const double ap = average_precision(s, y), auc = roc_auc(s, y);
    EXPECT_NEAR(ap, oracle::average_precision(s, y), 1e-12);
    EXPECT_NEAR(auc, oracle::roc_auc(s, y), 1e-12);
    EXPECT_GE(ap, 0.0);
    EXPECT_LE(ap, 1.0);
    EXPECT_GE(auc, 0.0);
    EXPECT_LE(auc, 1.0);
  }
}

TEST(TrainConfig, Validation) {
  TrainConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  for (auto mutate : std::vector<void (*)(TrainConfig &)>{
         [](TrainConfig &c) { c.batch_size = 0; }, [](TrainConfig &c) { c.lr = 0.0; },
         [](TrainConfig &c) { c.lambda_tlr = -1.0; }, [](TrainConfig &c) { c.lambda_a3 = -1.0; },
         [](TrainConfig &c) { c.dropout = 1.0; }, [](TrainConfig &c) { c.d_k = 0; },
         [](TrainConfig &c) { c.neighbors = 0; }}) {
    TrainConfig bad;
    mutate(bad);
    EXPECT_THROW(bad.validate(), ConfigError);
  }
}

TEST(ModelDims, Arithmetic) {
  TrainConfig cfg;
  const ModelDims d = model_dims(cfg, 172);
  EXPECT_EQ(d.d_msg, 2u * 172 + 100 + 172);
  EXPECT_EQ(d.attention.n_q, 272u);
  EXPECT_EQ(d.attention.n_kv, 444u);
  EXPECT_EQ(a3_multiplier(cfg), 1.0);
  cfg.lambda_a3 = 0.04;
  cfg.d_mem = 60;
  cfg.d_time = 40;
  EXPECT_NEAR(a3_multiplier(cfg), 5.0, 1e-12);
}

TEST(RunBatch, GradientsPassGradCheck) {
  for (double lt : {0.0, 0.3})
    for (double la : {0.0, 0.05}) {
      const micro::Instance in = micro::make_instance(11, lt, la);
      for (const GradCheckReport &r : micro::check_all(in))
        EXPECT_TRUE(r.passed) << r.param_name << " tlr=" << lt << " a3=" << la
                              << " rel err " << r.max_relative_error;
    }
}

TEST(RunBatch, GradientsWithDropoutMask) {
  const micro::Instance in = micro::make_instance(12, 0.2, 0.02, 0.3);
  for (const GradCheckReport &r : micro::check_all(in))
    EXPECT_TRUE(r.passed) << r.param_name << " rel err " << r.max_relative_error;
}

TEST(RunBatch, ZeroTlrCoefficientLeavesLossAtBce) {
  micro::Instance in = micro::make_instance(13, 0.0, 0.0);
  NodeMemory m = in.memory;
  const BatchOutput out = run_batch(in.params, in.cfg, m, in.index, in.batch(), in.negatives,
                                    in.opts);
  EXPECT_EQ(out.loss, out.bce);
  in.cfg.lambda_tlr = 0.5;
  NodeMemory m2 = in.memory;
  const BatchOutput reg = run_batch(in.params, in.cfg, m2, in.index, in.batch(), in.negatives,
                                    in.opts);
  EXPECT_GT(reg.tlr, 0.0);
  EXPECT_EQ(reg.bce, out.bce);
  EXPECT_NEAR(reg.loss, reg.bce + 0.5 * reg.tlr, 1e-15);
}

TEST(RunBatch, ScoresIgnoreTheBatchOwnEvents) {
  // Changing the features of the batch's latest event alters what is staged
  // but not the scores of the batch itself.
  const EventStream s = small_stream(120);
  const TrainConfig cfg = small_config();
  const ModelParams params = init_params(cfg, s.d_e());
  std::vector<Event> tweaked(s.events().begin(), s.events().end());
  tweaked[99].feat = {5.0, -5.0};
  const EventStream s2(std::move(tweaked), s.n_nodes(), s.d_e());
  ASSERT_LT(s[98].t, s[99].t);

  auto batch_scores = [&](const EventStream &st) {
    NodeMemory mem(st.n_nodes(), cfg.d_mem);
    const NeighborIndex idx(st);
    const auto batches = make_batches(st, 50);
    std::vector<double> out;
    for (std::size_t k = 0; k < 3; ++k) {
      const std::vector<NodeId> negs(batches[k].events.size(), 10);
      const BatchOutput o = run_batch(params, cfg, mem, idx, batches[k].events, negs, {});
      if (k == 1)
        out = o.pos_scores;
    }
    return std::make_pair(out, mem.states());
  };
  const auto [a, mem_a] = batch_scores(s);
  const auto [b, mem_b] = batch_scores(s2);
  EXPECT_EQ(a, b);
  EXPECT_NE(mem_a, mem_b);
}

TEST(LinkPredictor, DeterministicAcrossRuns) {
  const EventStream s = small_stream();
  const Split sp = chronological_split(s, 0.7, 0.15);
  TrainConfig cfg = small_config();
  cfg.lambda_tlr = 0.001;
  cfg.lambda_a3 = 0.02;
  auto run = [&] {
    LinkPredictor model(cfg, s);
    const Metrics tr = model.train_epoch(sp.train, 0);
    const Metrics tr2 = model.train_epoch(sp.train, 1);
    model.reset_memory();
    model.replay(sp.train);
    const Metrics val = model.evaluate(sp.val, 1);
    return std::make_tuple(tr.ap, tr.loss, tr2.auc, val.ap, val.auc, model.params().dec.w1,
                           model.memory().states());
  };
  EXPECT_EQ(run(), run());
}

TEST(LinkPredictor, SingleBatchEpochTakesOneStep) {
  const EventStream s = small_stream(80);
  TrainConfig cfg = small_config();
  cfg.batch_size = s.size();
  LinkPredictor model(cfg, s);
  model.train_epoch(s, 0);
  EXPECT_EQ(model.optimizer_steps(), 1);
  cfg.batch_size = 30;
  LinkPredictor model3(cfg, s);
  model3.train_epoch(s, 0);
  EXPECT_EQ(model3.optimizer_steps(), 3);
}

TEST(LinkPredictor, TrainingImprovesOverEpochs) {
  const EventStream s = small_stream(1500);
  const Split sp = chronological_split(s, 0.7, 0.15);
  TrainConfig cfg = small_config();
  cfg.lr = 0.005;
  cfg.dropout = 0.0;
  LinkPredictor model(cfg, s);
  const Metrics first = model.train_epoch(sp.train, 0);
  Metrics last;
  for (std::size_t e = 1; e < 6; ++e)
    last = model.train_epoch(sp.train, e);
  EXPECT_LT(last.loss, first.loss);
  EXPECT_GT(last.ap, first.ap);
}

TEST(LinkPredictor, EvaluationLeavesParametersAlone) {
  const EventStream s = small_stream();
  const Split sp = chronological_split(s, 0.7, 0.15);
  LinkPredictor model(small_config(), s);
  model.train_epoch(sp.train, 0);
  const ModelParams before = model.params();
  const auto steps = model.optimizer_steps();
  model.evaluate(sp.val, 3);
  EXPECT_EQ(model.optimizer_steps(), steps);
  EXPECT_EQ(model.params().dec.w1, before.dec.w1);
  EXPECT_EQ(model.params().gru.w_z, before.gru.w_z);
}
