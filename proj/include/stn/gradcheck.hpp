#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <set>
#include <span>
#include <vector>

#include "stn/errors.hpp"
#include "stn/matrix.hpp"
#include "stn/nn.hpp"
#include "stn/rng.hpp"

namespace stn {

struct GradCheckOptions {
  double step = 1e-6;       // central-difference half step h
  double tol = 1e-5;        // max allowed relative error
  std::size_t max_coords = 200;
  std::uint64_t seed = 0;   // coordinate sampling
};

struct GradCheckReport {
  bool pass = true;
  double max_rel_err = 0.0;
  std::size_t coords_checked = 0;
  std::size_t worst_param = 0;   // index into the parameter list
  std::size_t worst_entry = 0;   // flat index within that matrix
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Central finite-difference check of an analytic gradient.
///
/// `params` are mutated in place during probing and restored afterwards;
/// `value` must evaluate the scalar objective at the current parameter
/// values, holding everything else (data, detached soft labels) fixed.
/// `analytic` is the gradient at the unperturbed point, slot-aligned with
/// `params`. Relative error per coordinate is
/// |g_a - g_fd| / max(1e-8, |g_a| + |g_fd|).
inline GradCheckReport grad_check(std::span<Matrix* const> params,
                                  const std::function<double()>& value,
                                  const GradBuffer& analytic,
                                  const GradCheckOptions& opt = {}) {
  if (!(opt.step > 0.0)) throw RangeError("grad_check: step must be positive");
  if (analytic.size() != params.size()) throw ShapeError("grad_check: gradient/parameter slot mismatch");

  std::vector<std::size_t> offsets(params.size() + 1, 0);
  for (std::size_t p = 0; p < params.size(); ++p) offsets[p + 1] = offsets[p] + params[p]->size();
  const std::size_t total = offsets.back();

  std::vector<std::size_t> coords;
  if (total <= opt.max_coords) {
    coords.resize(total);
    for (std::size_t i = 0; i < total; ++i) coords[i] = i;
  } else {
    SeededRng rng(opt.seed);
    std::set<std::size_t> picked;
    while (picked.size() < opt.max_coords) picked.insert(static_cast<std::size_t>(rng.next_below(total)));
    coords.assign(picked.begin(), picked.end());
  }

  const auto evaluate = [&]() {
    const double v = value();
    if (!std::isfinite(v)) throw EvalError("grad_check: objective evaluated to a non-finite value");
    return v;
  };

  GradCheckReport report;
  for (std::size_t flat : coords) {
    const std::size_t p = static_cast<std::size_t>(
        std::upper_bound(offsets.begin(), offsets.end(), flat) - offsets.begin() - 1);
    const std::size_t e = flat - offsets[p];
    double& slot = params[p]->data()[e];
    const double saved = slot;

    slot = saved + opt.step;
    const double up = evaluate();
    slot = saved - opt.step;
    const double down = evaluate();
    slot = saved;

    const double g_fd = (up - down) / (2.0 * opt.step);
    const double g_a = analytic[p].data()[e];
    const double rel = std::abs(g_a - g_fd) / std::max(1e-8, std::abs(g_a) + std::abs(g_fd));
    if (rel > report.max_rel_err) {
      report.max_rel_err = rel;
      report.worst_param = p;
      report.worst_entry = e;
      report.worst_analytic = g_a;
      report.worst_numeric = g_fd;
    }
    ++report.coords_checked;
  }
  report.pass = report.max_rel_err <= opt.tol;
  return report;
}

}  // namespace stn
