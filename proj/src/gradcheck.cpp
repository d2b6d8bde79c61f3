// SPDX-License-Identifier: Apache-2.0
#include <badgnn/gradcheck.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

#include <badgnn/error.hpp>

namespace badgnn {

namespace {

double evaluate(const ScalarFunction &f, const Matrix &x, std::size_t r, std::size_t c,
                const std::string &name) {
  const double v = f(x);
  if (!std::isfinite(v))
    throw ProbeError("grad_check(" + name + "): non-finite value probing entry (" +
                     std::to_string(r) + "," + std::to_string(c) + ")");
  return v;
}

} // namespace

GradCheckReport grad_check(const ScalarFunction &f, const Matrix &analytic_grad,
                           const Matrix &point, std::string param_name,
                           const GradCheckOptions &opts) {
  if (!analytic_grad.same_shape(point))
    throw DimensionError("grad_check(" + param_name + "): gradient/point shape mismatch");

  GradCheckReport report;
  report.param_name = std::move(param_name);
  const double h = opts.step;

  Matrix x = point;
  const double f0 = evaluate(f, x, 0, 0, report.param_name);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < x.cols(); ++c) {
      const double orig = x(r, c);
      x(r, c) = orig + h;
      const double fp = evaluate(f, x, r, c, report.param_name);
      x(r, c) = orig - h;
      const double fm = evaluate(f, x, r, c, report.param_name);
      x(r, c) = orig;

      const double forward = (fp - f0) / h;
      const double backward = (f0 - fm) / h;
      const double kink_limit =
        opts.kink_abs + opts.kink_rel * std::max(std::abs(forward), std::abs(backward));
      if (std::abs(forward - backward) > kink_limit) {
        report.nondifferentiable = true;
        report.max_relative_error = std::numeric_limits<double>::infinity();
        report.worst_row = r;
        report.worst_col = c;
        report.passed = false;
        return report;
      }

      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic_grad(r, c);
      const double denom =
        std::max({std::abs(a), std::abs(numeric), opts.denominator_floor});
      const double err = std::abs(a - numeric) / denom;
      if (err > report.max_relative_error) {
        report.max_relative_error = err;
        report.worst_row = r;
        report.worst_col = c;
      }
    }
  }
  report.passed = report.max_relative_error <= opts.tolerance;
  return report;
}

} // namespace badgnn
