// SPDX-License-Identifier: Apache-2.0
// Prints every number the training pipeline produces on a fixed synthetic
// stream, as hex floats, so two builds can be compared byte for byte.
#include <cstdio>
#include <exception>
#include <iostream>

#include <badgnn/commands.hpp>
#include <badgnn/events.hpp>
#include <badgnn/training.hpp>

using namespace badgnn;

namespace {

void dump(const char *tag, double x) { std::printf("%s %a\n", tag, x); }

void dump(const char *tag, const Metrics &m) {
  std::printf("%s ap=%a auc=%a loss=%a\n", tag, m.ap, m.auc, m.loss);
}

} // namespace

int main() try {
  SyntheticOptions o;
  o.n_events = 1000;
  o.seed = 11;
  const EventStream s = make_synthetic_stream(o);
  RunData data;
  data.loaded.stream = s;
  data.loaded.n_users = o.n_users;
  data.split = chronological_split(s, 0.70, 0.15);

  TrainConfig cfg;
  cfg.batch_size = 100;
  cfg.d_mem = 8;
  cfg.d_time = 4;
  cfg.d_k = 4;
  cfg.heads = 2;
  cfg.neighbors = 5;
  cfg.dropout = 0.1;
  cfg.lr = 0.005;
  cfg.seed = 3;
  LinkPredictor model(cfg, data.loaded.stream);

  for (std::size_t e = 0; e < 3; ++e) {
    dump("train", model.train_epoch(data.split.train, e));
    dump("val", evaluate_split(model, data, "val"));
  }
  dump("test", evaluate_split(model, data, "test"));

  // Per-event scores and losses of the first test batches.
  model.reset_memory();
  model.replay(data.split.train);
  model.replay(data.split.val);
  for (const Batch &b : make_batches(data.split.test, cfg.batch_size)) {
    const auto negs = model.negatives_for(b, eval_tag("test"));
    const BatchOutput out = run_batch(model.params(), cfg, model.memory(), model.neighbor_index(),
                                      b.events, negs, {});
    dump("batch.loss", out.loss);
    dump("batch.bce", out.bce);
    for (double p : out.pos_scores)
      dump("pos", p);
    for (double p : out.neg_scores)
      dump("neg", p);
  }

  ModelParams::visit(model.params(), [](const std::string &name, const Matrix &m) {
    for (double x : m.values())
      dump(name.c_str(), x);
  });
  for (double x : model.memory().states().values())
    dump("memory", x);
  return 0;
} catch (const std::exception &e) {
  std::cerr << "pipeline_dump: " << e.what() << '\n';
  return 1;
}
