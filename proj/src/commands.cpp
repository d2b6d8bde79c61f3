// SPDX-License-Identifier: Apache-2.0
#include <badgnn/commands.hpp>

#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>

#include <badgnn/checkpoint.hpp>
#include <badgnn/diagnostics.hpp>
#include <badgnn/error.hpp>
#include <badgnn/random.hpp>

namespace badgnn {

namespace fs = std::filesystem;

namespace {

constexpr const char *kConfigRecord = "config";

void write_text(const fs::path &p, const std::string &s) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f)
    throw IoError("cannot write " + p.string());
  f << s;
}

std::string timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  localtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y%m%d-%H%M%S");
  return os.str();
}

const EventStream &split_of(const RunData &d, const std::string &split) {
  if (split == "train")
    return d.split.train;
  if (split == "val")
    return d.split.val;
  if (split == "test")
    return d.split.test;
  throw ConfigError("split must be train, val or test");
}

std::string csv_safe(std::string s) {
  for (char &c : s)
    if (c == ',' || c == '\n' || c == '\r' || c == '"')
      c = ' ';
  return s;
}

std::string fmt(double x) {
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

struct ModelFromCheckpoint {
  LoadedCheckpoint ck;
  RunData data;
  std::unique_ptr<LinkPredictor> model;
};

ModelFromCheckpoint open_checkpoint(const fs::path &checkpoint,
                                    const std::optional<std::string> &dataset) {
  ModelFromCheckpoint m;
  m.ck = load_checkpoint(checkpoint);
  if (dataset)
    m.ck.cfg.dataset = *dataset;
  m.data = load_run_data(m.ck.cfg);
  m.model = std::make_unique<LinkPredictor>(m.ck.cfg.effective_train(), m.data.loaded.stream);
  m.model->set_params(m.ck.params);
  return m;
}

} // namespace

RunData load_run_data(const RunConfig &cfg) {
  if (cfg.dataset.empty())
    throw ConfigError("no dataset configured");
  RunData d;
  d.loaded = load_jodie_csv(cfg.dataset, cfg.max_events);
  d.split = chronological_split(d.loaded.stream, cfg.train_frac, cfg.val_frac);
  return d;
}

std::uint64_t eval_tag(const std::string &split) {
  if (split == "val")
    return mix_seed(0xe7a1, 1);
  if (split == "test")
    return mix_seed(0xe7a1, 2);
  return mix_seed(0xe7a1, 0);
}

Metrics evaluate_split(LinkPredictor &model, const RunData &data, const std::string &split) {
  model.reset_memory();
  if (split == "val" || split == "test")
    model.replay(data.split.train);
  if (split == "test")
    model.replay(data.split.val);
  return model.evaluate(split_of(data, split), eval_tag(split));
}

TrainRun run_training(const RunConfig &cfg, const RunData &data, LinkPredictor &model,
                      const std::function<void(const EpochRecord &)> &on_epoch) {
  TrainRun run;
  for (std::size_t e = 0; e < cfg.train.epochs; ++e) {
    EpochRecord rec;
    rec.epoch = e;
    rec.train = model.train_epoch(data.split.train, e);
    rec.val = evaluate_split(model, data, "val");
    if (!cfg.record_timing) {
      rec.train.epoch_time = 0.0;
      rec.val.epoch_time = 0.0;
    }
    run.epochs.push_back(rec);
    if (on_epoch)
      on_epoch(rec);
  }
  run.test = evaluate_split(model, data, "test");
  if (!cfg.record_timing)
    run.test.epoch_time = 0.0;
  return run;
}

fs::path make_run_dir(const fs::path &out_dir, const std::string &label) {
  fs::create_directories(out_dir);
  const std::string base = label + "-" + timestamp();
  fs::path p = out_dir / base;
  for (int k = 1; fs::exists(p); ++k)
    p = out_dir / (base + "-" + std::to_string(k));
  fs::create_directory(p);
  return p;
}

nlohmann::ordered_json metrics_line(const EpochRecord &rec, const RunConfig &cfg) {
  const TrainConfig t = cfg.effective_train();
  return nlohmann::ordered_json{
    {"epoch", rec.epoch},
    {"ap", rec.val.ap},
    {"auc", rec.val.auc},
    {"loss", rec.train.loss},
    {"epoch_time_s", rec.train.epoch_time},
    {"batch_size", t.batch_size},
    {"lambda_tlr", t.lambda_tlr},
    {"lambda_a3", t.lambda_a3},
    {"seed", t.seed},
  };
}

nlohmann::json config_echo(const RunConfig &cfg) {
  nlohmann::json j = nlohmann::json::object();
  std::istringstream in(to_text(cfg));
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    if (eq != std::string::npos)
      j[line.substr(0, eq)] = line.substr(eq + 3);
  }
  j["label"] = cfg.label();
  return j;
}

LipschitzReport diagnose_model(LinkPredictor &model, const RunData &data, const RunConfig &cfg) {
  model.reset_memory();
  model.replay(data.split.train);
  model.replay(data.split.val);
  const auto batches = make_batches(data.split.test, cfg.train.batch_size);
  if (batches.empty())
    throw ConfigError("diagnose: test split is empty");
  DiagnoseOptions opts;
  opts.sigma = cfg.sigma;
  opts.sigma_from_softmax = cfg.sigma_from_softmax;
  opts.probe_trials = cfg.probe_trials;
  opts.probe_step = cfg.probe_step;
  opts.seed = mix_seed(cfg.train.seed, 0xd1a6);
  const auto negs = model.negatives_for(batches[0], eval_tag("test"));
  return diagnose_batch(model.params(), model.config(), model.memory(), model.neighbor_index(),
                        batches[0].events, negs, opts);
}

TrainOutcome cmd_train(const RunConfig &cfg) {
  cfg.validate();
  const RunData data = load_run_data(cfg);
  TrainOutcome out;
  out.run_dir = make_run_dir(cfg.out_dir, cfg.label());
  write_text(out.run_dir / "config.txt", to_text(cfg));
  LinkPredictor model(cfg.effective_train(), data.loaded.stream);

  std::ofstream metrics(out.run_dir / "metrics.jsonl", std::ios::binary);
  std::ofstream diag;
  if (cfg.diagnose_every > 0)
    diag.open(out.run_dir / "diagnostics.jsonl", std::ios::binary);
  out.run = run_training(cfg, data, model, [&](const EpochRecord &rec) {
    metrics << metrics_line(rec, cfg).dump() << '\n' << std::flush;
    if (cfg.diagnose_every > 0 && (rec.epoch + 1) % cfg.diagnose_every == 0) {
      nlohmann::json j = to_json(diagnose_model(model, data, cfg));
      j["epoch"] = rec.epoch;
      diag << j.dump() << '\n' << std::flush;
    }
  });
  const nlohmann::json test = {{"split", "test"},
                               {"ap", out.run.test.ap},
                               {"auc", out.run.test.auc},
                               {"loss", out.run.test.loss}};
  write_text(out.run_dir / "test.json", test.dump() + "\n");
  save_checkpoint(out.run_dir / "checkpoint.bin", cfg, model);
  return out;
}

void save_checkpoint(const fs::path &path, const RunConfig &cfg, const LinkPredictor &model) {
  Archive a;
  a.texts[kConfigRecord] = to_text(cfg);
  store_params(a, model.params());
  store_memory(a, model.memory());
  write_archive(a, path);
}

LoadedCheckpoint load_checkpoint(const fs::path &path) {
  const Archive a = read_archive(path);
  auto it = a.texts.find(kConfigRecord);
  if (it == a.texts.end())
    throw SchemaError("checkpoint has no config record");
  LoadedCheckpoint ck;
  ck.cfg = parse_run_config(it->second);
  auto feat = a.matrices.find("att.w_k[0]");
  if (feat == a.matrices.end())
    throw SchemaError("checkpoint lacks parameter 'att.w_k[0]'");
  // Key input width = d_mem + d_e + d_time fixes the edge feature width.
  const TrainConfig t = ck.cfg.effective_train();
  const std::size_t n_kv = feat->second.rows();
  if (n_kv < t.d_mem + t.d_time)
    throw SchemaError("checkpoint key projection narrower than d_mem + d_time");
  TrainConfig shape = t;
  shape.zero_init = true;
  ck.params = init_params(shape, n_kv - t.d_mem - t.d_time);
  load_params(a, ck.params);
  return ck;
}

nlohmann::ordered_json cmd_eval(const fs::path &checkpoint, const std::optional<std::string> &dataset,
                        const std::string &split) {
  ModelFromCheckpoint m = open_checkpoint(checkpoint, dataset);
  const Metrics r = evaluate_split(*m.model, m.data, split);
  return nlohmann::ordered_json{{"split", split}, {"ap", r.ap}, {"auc", r.auc}, {"loss", r.loss}};
}

nlohmann::json cmd_diagnose(const fs::path &checkpoint, const std::optional<std::string> &dataset) {
  ModelFromCheckpoint m = open_checkpoint(checkpoint, dataset);
  nlohmann::json j = to_json(diagnose_model(*m.model, m.data, m.ck.cfg));
  j["config"] = config_echo(m.ck.cfg);
  return j;
}

SweepOutcome cmd_sweep(const RunConfig &cfg) {
  if (cfg.grid.empty())
    throw ConfigError("sweep needs non-empty batch_sizes, lambda_tlr and lambda_a3 grids");
  const RunData data = load_run_data(cfg);
  const fs::path dir = make_run_dir(cfg.out_dir, "sweep-" + cfg.label());
  write_text(dir / "config.txt", to_text(cfg));
  SweepOutcome out;
  out.csv = dir / "sweep.csv";
  std::ofstream csv(out.csv, std::ios::binary);
  csv << kSweepHeader << '\n' << std::flush;
  for (std::size_t b : cfg.grid.batch_sizes)
    for (double lt : cfg.grid.lambda_tlr)
      for (double la : cfg.grid.lambda_a3) {
        RunConfig pc = cfg;
        pc.mode = "train";
        pc.grid = {};
        pc.train.batch_size = b;
        pc.train.lambda_tlr = lt;
        pc.train.lambda_a3 = la;
        csv << b << ',' << fmt(lt) << ',' << fmt(la) << ',';
        try {
          pc.validate();
          LinkPredictor model(pc.effective_train(), data.loaded.stream);
          const TrainRun run = run_training(pc, data, model);
          double t = 0.0;
          for (const EpochRecord &e : run.epochs)
            t += e.train.epoch_time;
          if (!run.epochs.empty())
            t /= static_cast<double>(run.epochs.size());
          csv << fmt(run.test.ap) << ',' << fmt(run.test.auc) << ',' << fmt(t) << ",ok\n";
        } catch (const std::exception &e) {
          csv << ",,,failed: " << csv_safe(e.what()) << '\n';
          ++out.failed;
        }
        csv << std::flush;
      }
  return out;
}

nlohmann::ordered_json cmd_ingest(const fs::path &csv, const fs::path &out_dir) {
  const LoadedStream loaded = load_jodie_csv(csv);
  fs::create_directories(out_dir);
  write_jodie_csv(loaded.stream, loaded.n_users, out_dir / "events.csv");
  const StreamStats s = stream_stats(loaded);
  const nlohmann::ordered_json j{
    {"n_nodes", s.n_nodes},     {"n_users", s.n_users},   {"n_items", s.n_items},
    {"n_events", s.n_events},   {"n_timestamps", s.n_timestamps},
    {"d_e", s.d_e},             {"t_min", s.t_min},       {"t_max", s.t_max},
  };
  write_text(out_dir / "stats.json", j.dump(2) + "\n");
  return j;
}

} // namespace badgnn
