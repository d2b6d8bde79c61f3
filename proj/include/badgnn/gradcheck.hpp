// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include <badgnn/linalg.hpp>

namespace badgnn {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Denominator floor for the relative error, so entries whose true
  /// gradient is ~0 are judged on absolute error instead.
  double denominator_floor = 1e-6;
  /// One-sided slopes further apart than kink_abs + kink_rel * max(|slope|)
  /// mark the point as non-differentiable.
  double kink_abs = 1e-3;
  double kink_rel = 1e-2;
};

struct GradCheckReport {
  std::string param_name;
  double max_relative_error = 0.0;
  std::size_t worst_row = 0;
  std::size_t worst_col = 0;
  bool nondifferentiable = false;
  bool passed = false;
};

using ScalarFunction = std::function<double(const Matrix &)>;

/// Compares analytic_grad with central differences of f around point.
/// A kink at any entry forces max_relative_error to +inf, so
/// passed == (max_relative_error <= tolerance) always holds.
/// Throws ProbeError if f is non-finite at a probed point.
GradCheckReport grad_check(const ScalarFunction &f, const Matrix &analytic_grad,
                           const Matrix &point, std::string param_name = {},
                           const GradCheckOptions &opts = {});

} // namespace badgnn
