// SPDX-License-Identifier: Apache-2.0
// Command-line front end: ingest, synth, train, eval, diagnose, sweep.
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include <badgnn/commands.hpp>
#include <badgnn/error.hpp>
#include <badgnn/events.hpp>
#include <badgnn/run_config.hpp>

namespace {

std::string read_file(const std::string &path) {
  std::ifstream f(path);
  if (!f)
    throw badgnn::IoError("cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

struct Overrides {
  std::optional<std::size_t> batch_size, epochs;
  std::optional<double> lambda_tlr, lambda_a3;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> dataset, out_dir;
  std::vector<std::string> set;

  void add_to(CLI::App *cmd) {
    cmd->add_option("--batch-size", batch_size, "temporal batch size");
    cmd->add_option("--lambda-tlr", lambda_tlr, "TLR weight");
    cmd->add_option("--lambda-a3", lambda_a3, "A3 coefficient");
    cmd->add_option("--seed", seed, "random seed");
    cmd->add_option("--epochs", epochs, "training epochs");
    cmd->add_option("--dataset", dataset, "JODIE CSV path");
    cmd->add_option("--out", out_dir, "output root directory");
    cmd->add_option("--set", set, "extra key=value overrides")->take_all();
  }

  void apply(badgnn::RunConfig &c) const {
    for (const std::string &kv : set) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos)
        throw badgnn::ConfigError("--set expects key=value, got '" + kv + "'");
      badgnn::apply_setting(c, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (batch_size)
      c.train.batch_size = *batch_size;
    if (lambda_tlr)
      c.train.lambda_tlr = *lambda_tlr;
    if (lambda_a3)
      c.train.lambda_a3 = *lambda_a3;
    if (seed)
      c.train.seed = *seed;
    if (epochs)
      c.train.epochs = *epochs;
    if (dataset)
      c.dataset = *dataset;
    if (out_dir)
      c.out_dir = *out_dir;
  }
};

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"badgnn: temporal graph link prediction with Lipschitz-bound controls"};
  app.require_subcommand(1);

  std::string ingest_csv, ingest_out;
  auto *ingest = app.add_subcommand("ingest", "validate a JODIE CSV and write a normalized copy");
  ingest->add_option("csv", ingest_csv, "input CSV")->required();
  ingest->add_option("--out", ingest_out, "output directory")->required();

  badgnn::SyntheticOptions synth_opts;
  std::string synth_out;
  auto *synth = app.add_subcommand("synth", "write a synthetic bipartite stream as JODIE CSV");
  synth->add_option("--out", synth_out, "output CSV")->required();
  synth->add_option("--events", synth_opts.n_events, "number of events");
  synth->add_option("--users", synth_opts.n_users, "number of users");
  synth->add_option("--items", synth_opts.n_items, "number of items");
  synth->add_option("--features", synth_opts.d_e, "edge feature width");
  synth->add_option("--noise", synth_opts.noise, "fraction of random interactions");
  synth->add_option("--seed", synth_opts.seed, "random seed");

  std::string train_config;
  Overrides train_over;
  auto *train = app.add_subcommand("train", "train and write metrics, test scores and checkpoint");
  train->add_option("--config", train_config, "key=value config file")->required();
  train_over.add_to(train);

  std::string eval_ckpt, eval_split = "test";
  std::optional<std::string> eval_dataset;
  auto *eval = app.add_subcommand("eval", "score a split with a checkpoint");
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--split", eval_split, "train, val or test");
  eval->add_option("--dataset", eval_dataset, "override dataset path");

  std::string diag_ckpt;
  std::optional<std::string> diag_dataset, diag_out;
  auto *diagnose = app.add_subcommand("diagnose", "Lipschitz bound report for a checkpoint");
  diagnose->add_option("--checkpoint", diag_ckpt, "checkpoint file")->required();
  diagnose->add_option("--dataset", diag_dataset, "override dataset path");
  diagnose->add_option("--out", diag_out, "also write the report to this file");

  std::string sweep_config, sweep_grid;
  Overrides sweep_over;
  auto *sweep = app.add_subcommand("sweep", "train over a batch-size / lambda grid, emit CSV");
  sweep->add_option("--config", sweep_config, "key=value config file")->required();
  sweep->add_option("--grid", sweep_grid, "grid file (batch_sizes, lambda_tlr, lambda_a3)");
  sweep_over.add_to(sweep);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) {
      std::cout << badgnn::cmd_ingest(ingest_csv, ingest_out).dump(2) << '\n';
    } else if (*synth) {
      const badgnn::EventStream s = badgnn::make_synthetic_stream(synth_opts);
      badgnn::write_jodie_csv(s, synth_opts.n_users, synth_out);
      std::cout << "wrote " << s.size() << " events to " << synth_out << '\n';
    } else if (*train) {
      badgnn::RunConfig cfg = badgnn::load_run_config(train_config);
      train_over.apply(cfg);
      cfg.mode = "train";
      const badgnn::TrainOutcome out = badgnn::cmd_train(cfg);
      std::cout << out.run_dir.string() << '\n';
    } else if (*eval) {
      std::cout << badgnn::cmd_eval(eval_ckpt, eval_dataset, eval_split).dump() << '\n';
    } else if (*diagnose) {
      const std::string report = badgnn::cmd_diagnose(diag_ckpt, diag_dataset).dump(2);
      std::cout << report << '\n';
      if (diag_out) {
        std::ofstream f(*diag_out);
        if (!f)
          throw badgnn::IoError("cannot write " + *diag_out);
        f << report << '\n';
      }
    } else if (*sweep) {
      badgnn::RunConfig cfg = badgnn::load_run_config(sweep_config);
      if (!sweep_grid.empty())
        cfg.grid = badgnn::parse_sweep_grid(read_file(sweep_grid));
      sweep_over.apply(cfg);
      cfg.mode = "sweep";
      cfg.validate();
      const badgnn::SweepOutcome out = badgnn::cmd_sweep(cfg);
      std::cout << out.csv.string() << '\n';
      if (out.failed > 0) {
        std::cerr << out.failed << " grid point(s) failed\n";
        return EXIT_FAILURE;
      }
    }
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    return EXIT_FAILURE;
  }
  return EXIT_SUCCESS;
}
