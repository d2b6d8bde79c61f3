// SPDX-License-Identifier: Apache-2.0
/**
 * @file   run_config.hpp
 * @brief  Line-oriented `key = value` run configuration for the command-line
 *         front end.
 *
 * Blank lines and text after '#' are ignored. Lists are comma separated.
 * Unknown keys are rejected with their line number.
 */
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <badgnn/training.hpp>

namespace badgnn {

struct SweepGrid {
  std::vector<std::size_t> batch_sizes;
  std::vector<double> lambda_tlr;
  std::vector<double> lambda_a3;

  bool empty() const noexcept {
    return batch_sizes.empty() || lambda_tlr.empty() || lambda_a3.empty();
  }
  std::size_t points() const noexcept {
    return batch_sizes.size() * lambda_tlr.size() * lambda_a3.size();
  }
};

struct RunConfig {
  TrainConfig train;
  std::string dataset;
  std::string out_dir = "runs";
  std::string mode = "train";
  /// Unset: on exactly when the matching lambda is positive.
  std::optional<bool> tlr_on, a3_on;
  SweepGrid grid;
  std::size_t max_events = 0;
  double train_frac = 0.70;
  double val_frac = 0.15;
  bool record_timing = true;
  double sigma = 1e-3;
  bool sigma_from_softmax = false;
  std::size_t probe_trials = 32;
  double probe_step = 1e-4;
  /// Also write diagnostics every k epochs during training (0 = never).
  std::size_t diagnose_every = 0;

  bool tlr_active() const { return tlr_on.value_or(train.lambda_tlr > 0.0); }
  bool a3_active() const { return a3_on.value_or(train.lambda_a3 > 0.0); }
  /// "tgn", "tgn-tlr", "tgn-a3" or "badgnn".
  std::string label() const;
  /// train with lambdas zeroed for disabled components.
  TrainConfig effective_train() const;

  void validate() const;
};

/// Applies one setting; throws ConfigError for unknown keys or bad values.
void apply_setting(RunConfig &cfg, std::string_view key, std::string_view value);

RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::string &path);

/// Grid files use the keys batch_sizes, lambda_tlr, lambda_a3.
SweepGrid parse_sweep_grid(std::string_view text);

/// Canonical text form; parse_run_config(to_text(c)) reproduces c.
std::string to_text(const RunConfig &cfg);

} // namespace badgnn
