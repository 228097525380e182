#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "gnnkit/tensor.hpp"

// Finite-difference validation of the tape.  Runs the forward closure under a
// fresh tape for the analytic gradients, then re-evaluates it with individual
// parameter entries nudged by +/- h for the central-difference estimates.

namespace gnnkit {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t num_checked = 0;
  bool pass = false;
  // Entry with the worst disagreement: param index, flat element index.
  std::size_t worst_param = 0;
  std::size_t worst_element = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// forward must be deterministic (no dropout) and produce a scalar loss.
// Relative error uses denominator max(1e-8, |analytic| + |numeric|).
inline GradCheckReport gradient_check(
    const std::function<Tensor()>& forward, std::vector<Tensor>& params,
    double tolerance, std::mt19937_64& rng, std::size_t sample_target = 100,
    double h = 1e-5) {
  GradCheckReport report;

  for (auto& p : params) p.zero_grad();
  std::vector<std::vector<double>> analytic(params.size());
  {
    Tape tape;
    Tensor loss = forward();
    if (!all_finite(loss))
      throw std::runtime_error("gradient_check: non-finite loss");
    tape.backward(loss);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    analytic[i] = params[i].has_grad()
                      ? params[i].grad()
                      : std::vector<double>(params[i].size(), 0.0);
    for (double g : analytic[i])
      if (!std::isfinite(g))
        throw std::runtime_error("gradient_check: non-finite gradient");
  }

  // Sample scalar entries uniformly across the whole parameter set.
  std::size_t total = 0;
  for (const auto& p : params) total += p.size();
  std::vector<std::pair<std::size_t, std::size_t>> picks;
  if (total <= sample_target) {
    for (std::size_t i = 0; i < params.size(); ++i)
      for (std::size_t j = 0; j < params[i].size(); ++j) picks.emplace_back(i, j);
  } else {
    std::uniform_int_distribution<std::size_t> dist(0, total - 1);
    std::vector<std::uint8_t> taken(total, 0);
    while (picks.size() < sample_target) {
      std::size_t flat = dist(rng);
      if (taken[flat]) continue;
      taken[flat] = 1;
      std::size_t i = 0;
      while (flat >= params[i].size()) flat -= params[i].size(), ++i;
      picks.emplace_back(i, flat);
    }
  }

  for (const auto& [pi, ei] : picks) {
    double* slot = params[pi].data() + ei;
    const double saved = *slot;
    *slot = saved + h;
    const double up = forward().item();
    *slot = saved - h;
    const double down = forward().item();
    *slot = saved;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw std::runtime_error("gradient_check: non-finite perturbed loss");
    const double numeric = (up - down) / (2.0 * h);
    const double a = analytic[pi][ei];
    const double rel =
        std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_param = pi;
      report.worst_element = ei;
      report.worst_analytic = a;
      report.worst_numeric = numeric;
    }
    ++report.num_checked;
  }
  report.pass = report.max_rel_error <= tolerance;
  return report;
}

}  // namespace gnnkit
