// SPDX-License-Identifier: Apache-2.0
/**
 * @file   commands.hpp
 * @brief  The operations behind each CLI subcommand, callable in-process.
 *
 * Output files per run directory:
 *   config.txt        canonical config
 *   metrics.jsonl     one line per epoch: epoch, ap, auc, loss, epoch_time_s,
 *                     batch_size, lambda_tlr, lambda_a3, seed (ap/auc on val)
 *   test.json         final test metrics
 *   checkpoint.bin    config text, parameters, end-of-run memory
 *   diagnostics.jsonl only when diagnose_every > 0
 * Sweep directories hold sweep.csv with the header
 *   batch_size,lambda_tlr,lambda_a3,ap,auc,epoch_time,status
 */
#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include <badgnn/events.hpp>
#include <badgnn/lipschitz.hpp>
#include <badgnn/run_config.hpp>
#include <badgnn/training.hpp>

namespace badgnn {

inline constexpr const char *kSweepHeader =
  "batch_size,lambda_tlr,lambda_a3,ap,auc,epoch_time,status";

struct RunData {
  LoadedStream loaded;
  Split split;
};

RunData load_run_data(const RunConfig &cfg);

/// Negative-sampling tags of the fixed evaluation passes.
std::uint64_t eval_tag(const std::string &split);

struct EpochRecord {
  std::size_t epoch = 0;
  Metrics train;
  Metrics val;
};

struct TrainRun {
  std::vector<EpochRecord> epochs;
  Metrics test;
};

/// Validation after each epoch and the final test pass start from reset
/// memory and replay everything before the evaluated split.
Metrics evaluate_split(LinkPredictor &model, const RunData &data, const std::string &split);

TrainRun run_training(const RunConfig &cfg, const RunData &data, LinkPredictor &model,
                      const std::function<void(const EpochRecord &)> &on_epoch = {});

/// Fresh `<out_dir>/<label>-<timestamp>[-k]` directory.
std::filesystem::path make_run_dir(const std::filesystem::path &out_dir, const std::string &label);

nlohmann::ordered_json metrics_line(const EpochRecord &rec, const RunConfig &cfg);
nlohmann::json config_echo(const RunConfig &cfg);

/// Replays train and val, then reports bounds over the first test batch.
LipschitzReport diagnose_model(LinkPredictor &model, const RunData &data, const RunConfig &cfg);

struct TrainOutcome {
  std::filesystem::path run_dir;
  TrainRun run;
};

TrainOutcome cmd_train(const RunConfig &cfg);

struct LoadedCheckpoint {
  RunConfig cfg;
  ModelParams params;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path &path);
void save_checkpoint(const std::filesystem::path &path, const RunConfig &cfg,
                     const LinkPredictor &model);

nlohmann::ordered_json cmd_eval(const std::filesystem::path &checkpoint,
                        const std::optional<std::string> &dataset, const std::string &split);

nlohmann::json cmd_diagnose(const std::filesystem::path &checkpoint,
                            const std::optional<std::string> &dataset);

struct SweepOutcome {
  std::filesystem::path csv;
  std::size_t failed = 0;
};

SweepOutcome cmd_sweep(const RunConfig &cfg);

/// Validates a JODIE CSV and writes normalized events.csv and stats.json.
nlohmann::ordered_json cmd_ingest(const std::filesystem::path &csv, const std::filesystem::path &out_dir);

} // namespace badgnn
